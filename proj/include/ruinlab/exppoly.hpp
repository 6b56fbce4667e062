#pragma once

// Linear combinations of x^p e^{-r x} on [0, inf), closed under the
// operations the ruin functionals need: pointwise evaluation, convolution
// over [0, u], tail integrals, and shifted power moments of the tail.
// Everything here is exact algebra (up to rounding); no quadrature.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ruinlab/claims.hpp"

namespace ruinlab {

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

}  // namespace detail

struct ExpPolyTerm {
  double coef;
  int power;    // >= 0
  double rate;  // > 0, term is coef * x^power * e^{-rate x}
};

class ExpPoly {
 public:
  ExpPoly() = default;
  explicit ExpPoly(std::vector<ExpPolyTerm> terms) : terms_(std::move(terms)) {
    for (const auto& t : terms_) {
      if (t.power < 0) throw Error("exppoly: negative power");
      if (!(t.rate > 0.0)) throw Error("exppoly: rate must be positive");
    }
    normalize();
  }

  static ExpPoly exponential(double coef, double rate) {
    return ExpPoly({{coef, 0, rate}});
  }

  const std::vector<ExpPolyTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  double operator()(double x) const {
    double acc = 0.0;
    for (const auto& t : terms_)
      acc += t.coef * std::pow(x, t.power) * std::exp(-t.rate * x);
    return acc;
  }

  ExpPoly& operator+=(const ExpPoly& other) {
    terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
    normalize();
    return *this;
  }

  friend ExpPoly operator+(ExpPoly a, const ExpPoly& b) {
    a += b;
    return a;
  }

  ExpPoly scaled(double c) const {
    ExpPoly out = *this;
    for (auto& t : out.terms_) t.coef *= c;
    return out;
  }

  // multiply by x^j
  ExpPoly times_power(int j) const {
    ExpPoly out = *this;
    for (auto& t : out.terms_) t.power += j;
    return out;
  }

  // integral_u^inf of this
  double tail_integral(double u) const {
    double acc = 0.0;
    for (const auto& t : terms_) {
      double s = 0.0;
      double upow = 1.0;
      double pfact = detail::factorial(t.power);
      double rpow = std::pow(t.rate, t.power + 1);
      // sum_{i=0}^{p} (p!/i!) u^i / r^{p-i+1}
      double ifact = 1.0;
      for (int i = 0; i <= t.power; ++i) {
        if (i > 0) {
          ifact *= i;
          upow *= u;
          rpow = std::pow(t.rate, t.power - i + 1);
        }
        s += pfact / ifact * upow / rpow;
      }
      acc += t.coef * std::exp(-t.rate * u) * s;
    }
    return acc;
  }

  double total_integral() const { return tail_integral(0.0); }

  // u -> integral_u^inf of this, as an exponential polynomial in u:
  // each c x^p e^{-rx} contributes sum_{i=0}^{p} c (p!/i!) r^{-(p-i+1)} u^i e^{-ru}
  ExpPoly tail_poly() const {
    std::vector<ExpPolyTerm> out;
    for (const auto& t : terms_) {
      double pfact = detail::factorial(t.power);
      double ifact = 1.0;
      for (int i = 0; i <= t.power; ++i) {
        if (i > 0) ifact *= i;
        out.push_back({t.coef * pfact / ifact /
                           std::pow(t.rate, t.power - i + 1),
                       i, t.rate});
      }
    }
    return ExpPoly(std::move(out));
  }

  // integral_u^inf (x-u)^i f(x) dx
  double shifted_power_tail(double u, int i) const {
    double acc = 0.0;
    for (const auto& t : terms_) {
      double s = 0.0;
      for (int k = 0; k <= t.power; ++k)
        s += detail::binomial(t.power, k) * std::pow(u, t.power - k) *
             detail::factorial(i + k) / std::pow(t.rate, i + k + 1);
      acc += t.coef * std::exp(-t.rate * u) * s;
    }
    return acc;
  }

  void normalize() {
    std::sort(terms_.begin(), terms_.end(),
              [](const ExpPolyTerm& a, const ExpPolyTerm& b) {
                if (a.rate != b.rate) return a.rate < b.rate;
                return a.power < b.power;
              });
    std::vector<ExpPolyTerm> merged;
    for (const auto& t : terms_) {
      if (!merged.empty() && merged.back().rate == t.rate &&
          merged.back().power == t.power)
        merged.back().coef += t.coef;
      else
        merged.push_back(t);
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const ExpPolyTerm& t) {
                                  return t.coef == 0.0;
                                }),
                 merged.end());
    terms_ = std::move(merged);
  }

 private:
  std::vector<ExpPolyTerm> terms_;
};

// (a * b)(u) = integral_0^u a(u-x) b(x) dx, again an ExpPoly. Distinct-rate
// term pairs expand by partial fractions of the Laplace image
// p1! p2! / ((s+r1)^{p1+1} (s+r2)^{p2+1}); rates closer than 1e-9 relative
// are treated as equal (exact single-rate formula).
inline ExpPoly convolve(const ExpPoly& a, const ExpPoly& b) {
  std::vector<ExpPolyTerm> out;
  for (const auto& ta : a.terms()) {
    for (const auto& tb : b.terms()) {
      double c = ta.coef * tb.coef;
      double ff = detail::factorial(ta.power) * detail::factorial(tb.power);
      double dr = tb.rate - ta.rate;
      if (std::abs(dr) <= 1e-9 * std::max(ta.rate, tb.rate)) {
        int p = ta.power + tb.power + 1;
        out.push_back({c * ff / detail::factorial(p), p,
                       0.5 * (ta.rate + tb.rate)});
        continue;
      }
      // residue expansion about each pole
      auto emit = [&](int p_here, int p_other, double r_here, double d) {
        double sign = 1.0;
        for (int i = 0; i <= p_here; ++i) {
          double coef = sign * detail::binomial(p_other + i, i) /
                        std::pow(d, p_other + 1 + i);
          out.push_back({c * ff * coef / detail::factorial(p_here - i),
                         p_here - i, r_here});
          sign = -sign;
        }
      };
      emit(ta.power, tb.power, ta.rate, dr);
      emit(tb.power, ta.power, tb.rate, -dr);
    }
  }
  return ExpPoly(std::move(out));
}

}  // namespace ruinlab
