#pragma once

// Claim-size distribution algebra: moments, survival, integrated tail, hazard
// diagnostics, and the integrated-tail MGF derivatives the solvers build on.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace ruinlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Exponential {
  double rate;
};

struct ExpMixture {
  std::vector<double> weights;
  std::vector<double> rates;
};

struct GammaClaims {
  double shape;
  double scale;
};

struct Deterministic {
  double value;
};

using ClaimDistribution =
    std::variant<Exponential, ExpMixture, GammaClaims, Deterministic>;

inline void validate(const ClaimDistribution& dist) {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(std::string("claims: ") + what + " must be positive and finite");
  };
  if (const auto* e = std::get_if<Exponential>(&dist)) {
    positive(e->rate, "rate");
  } else if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    if (m->weights.empty() || m->weights.size() != m->rates.size())
      throw Error("claims: mixture weights/rates must be nonempty and equal-length");
    double sum = 0.0;
    for (double w : m->weights) {
      positive(w, "weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw Error("claims: mixture weights must sum to 1 within 1e-12");
    for (double r : m->rates) positive(r, "rate");
    for (size_t i = 0; i < m->rates.size(); ++i)
      for (size_t j = i + 1; j < m->rates.size(); ++j)
        if (m->rates[i] == m->rates[j])
          throw Error("claims: mixture rates must be distinct");
  } else if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    positive(g->shape, "shape");
    positive(g->scale, "scale");
  } else {
    positive(std::get<Deterministic>(dist).value, "value");
  }
}

// E[Z^j], closed form per family.
inline double moment(const ClaimDistribution& dist, int j) {
  if (j < 1) throw Error("claims: moment order must be >= 1");
  if (const auto* e = std::get_if<Exponential>(&dist)) {
    double v = 1.0;
    for (int i = 1; i <= j; ++i) v *= i / e->rate;
    return v;
  }
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    double total = 0.0;
    for (size_t l = 0; l < m->rates.size(); ++l) {
      double v = 1.0;
      for (int i = 1; i <= j; ++i) v *= i / m->rates[l];
      total += m->weights[l] * v;
    }
    return total;
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    double v = 1.0;
    for (int i = 0; i < j; ++i) v *= (g->shape + i) * g->scale;
    return v;
  }
  return std::pow(std::get<Deterministic>(dist).value, j);
}

// F-bar(x), right-continuous.
inline double survival(const ClaimDistribution& dist, double x) {
  if (x < 0.0) throw Error("claims: survival needs x >= 0");
  if (const auto* e = std::get_if<Exponential>(&dist)) return std::exp(-e->rate * x);
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    double s = 0.0;
    for (size_t l = 0; l < m->rates.size(); ++l)
      s += m->weights[l] * std::exp(-m->rates[l] * x);
    return s;
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist))
    return boost::math::gamma_q(g->shape, x / g->scale);
  return x < std::get<Deterministic>(dist).value ? 1.0 : 0.0;
}

// f_I(x) = F-bar(x)/m1.
inline double integrated_tail_density(const ClaimDistribution& dist, double x) {
  return survival(dist, x) / moment(dist, 1);
}

// F_I-bar(x) = 1 - (1/m1) * integral_0^x F-bar.
inline double integrated_tail_survival(const ClaimDistribution& dist, double x) {
  if (x < 0.0) throw Error("claims: integrated_tail_survival needs x >= 0");
  if (const auto* e = std::get_if<Exponential>(&dist)) return std::exp(-e->rate * x);
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    double m1 = moment(dist, 1);
    double s = 0.0;
    for (size_t l = 0; l < m->rates.size(); ++l)
      s += (m->weights[l] / m->rates[l]) * std::exp(-m->rates[l] * x);
    return s / m1;
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    double a = g->shape, s = g->scale;
    double v = boost::math::gamma_q(a + 1.0, x / s) -
               (x / (a * s)) * boost::math::gamma_q(a, x / s);
    return std::clamp(v, 0.0, 1.0);
  }
  double z = std::get<Deterministic>(dist).value;
  return x < z ? 1.0 - x / z : 0.0;
}

namespace detail {

// Mixture weights of f_I (itself an exponential mixture): b_l = (a_l/beta_l)/m1.
inline std::vector<double> fi_mixture_weights(const ExpMixture& m) {
  double m1 = 0.0;
  for (size_t l = 0; l < m.rates.size(); ++l) m1 += m.weights[l] / m.rates[l];
  std::vector<double> b(m.rates.size());
  for (size_t l = 0; l < m.rates.size(); ++l)
    b[l] = (m.weights[l] / m.rates[l]) / m1;
  return b;
}

// Left limit of f_I at x; differs from f_I only at the deterministic jump.
inline double integrated_tail_density_left(const ClaimDistribution& dist, double x) {
  if (const auto* d = std::get_if<Deterministic>(&dist))
    if (x > 0.0 && x <= d->value) return 1.0 / d->value;
  return integrated_tail_density(dist, x);
}

// Points where f_I jumps (grid solvers need node conventions there).
inline std::vector<double> density_jump_points(const ClaimDistribution& dist) {
  if (const auto* d = std::get_if<Deterministic>(&dist)) return {d->value};
  return {};
}

}  // namespace detail

// sup_x f_I(x)/F_I-bar(x); nullopt means unbounded (deterministic claims).
inline std::optional<double> hazard_bound(const ClaimDistribution& dist) {
  if (const auto* e = std::get_if<Exponential>(&dist)) return e->rate;
  if (std::holds_alternative<Deterministic>(dist)) return std::nullopt;

  // Analytic x->infinity limit, refined by a log-spaced grid sup. The grid
  // catches interior/left-end maxima (e.g. DFR mixtures peak at x=0 with
  // hazard 1/m1).
  double limit, x_hi;
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    double bmin = *std::min_element(m->rates.begin(), m->rates.end());
    limit = bmin;
    x_hi = 50.0 / bmin;
  } else {
    const auto& g = std::get<GammaClaims>(dist);
    limit = 1.0 / g.scale;
    x_hi = 50.0 * g.scale * std::max(1.0, g.shape);
  }
  double sup = limit;
  const int n = 512;
  double lo = std::log(1e-6), hi = std::log(x_hi);
  for (int i = 0; i < n; ++i) {
    double x = std::exp(lo + (hi - lo) * i / (n - 1));
    double denom = integrated_tail_survival(dist, x);
    if (denom <= 0.0) continue;
    sup = std::max(sup, integrated_tail_density(dist, x) / denom);
  }
  return sup;
}

// Radius of convergence of the integrated-tail MGF.
inline double mgf_radius(const ClaimDistribution& dist) {
  if (const auto* e = std::get_if<Exponential>(&dist)) return e->rate;
  if (const auto* m = std::get_if<ExpMixture>(&dist))
    return *std::min_element(m->rates.begin(), m->rates.end());
  if (const auto* g = std::get_if<GammaClaims>(&dist)) return 1.0 / g->scale;
  return std::numeric_limits<double>::infinity();
}

// k-th derivative of M_I(t) = E[e^{tX}] for X ~ f_I, at t in [0, radius).
// k = 0 gives M_I itself.
inline double integrated_tail_mgf_deriv(const ClaimDistribution& dist, double t,
                                        int k) {
  if (k < 0) throw Error("claims: mgf derivative order must be >= 0");
  if (t < 0.0) throw Error("claims: mgf evaluated at t >= 0 only");
  if (t >= mgf_radius(dist)) throw Error("claims: mgf argument at/beyond radius");

  double fact_k = 1.0;
  for (int i = 2; i <= k; ++i) fact_k *= i;

  if (const auto* e = std::get_if<Exponential>(&dist))
    return e->rate * fact_k / std::pow(e->rate - t, k + 1);

  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    auto b = detail::fi_mixture_weights(*m);
    double s = 0.0;
    for (size_t l = 0; l < m->rates.size(); ++l)
      s += b[l] * m->rates[l] * fact_k / std::pow(m->rates[l] - t, k + 1);
    return s;
  }

  if (const auto* d = std::get_if<Deterministic>(&dist)) {
    double z = d->value;
    if (t * z > 700.0) throw Error("claims: deterministic mgf overflow (t*z > 700)");
    // sum_n t^n z^{n+k} / (n! (n+k+1))
    double term = std::pow(z, k) / (k + 1);
    double sum = term;
    for (int n = 1; n < 100000; ++n) {
      term *= t * z * (n + k) / (double(n) * (n + k + 1));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return sum;
  }

  const auto& g = std::get<GammaClaims>(dist);
  double a = g.shape, s = g.scale, m1 = a * s;
  if (t * s <= 0.99) {
    // sum_n t^n m_{n+k+1} / (n! (n+k+1) m1); ratio t*s*(a+n+k)*(n+k)/(n*(n+k+1)).
    double mk1 = 1.0;  // m_{k+1}
    for (int i = 0; i <= k; ++i) mk1 *= (a + i) * s;
    double term = mk1 / ((k + 1) * m1);
    double sum = term;
    for (int n = 1; n < 1000000; ++n) {
      term *= t * s * (a + n + k) * (n + k) / (double(n) * (n + k + 1));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return sum;
  }
  // Near the radius the series is slow; use t m1 M_I^{(k)} = M_Z^{(k)} - k m1 M_I^{(k-1)}.
  double mi = (std::pow(1.0 - s * t, -a) - 1.0) / (t * m1);
  for (int j = 1; j <= k; ++j) {
    double mz = std::pow(1.0 - s * t, -a - j) * std::pow(s, j);
    for (int i = 0; i < j; ++i) mz *= a + i;
    mi = (mz / m1 - j * mi) / t;
  }
  return mi;
}

// integral_u^infinity x^j f_I(x) dx, closed form per family.
inline double integrated_tail_power_tail(const ClaimDistribution& dist, double u,
                                         int j) {
  if (u < 0.0) throw Error("claims: power tail needs u >= 0");
  if (j < 0) throw Error("claims: power tail order must be >= 0");
  auto exp_tail = [j](double beta, double u_) {
    // integral_u^inf x^j beta e^{-beta x} dx = (j!/beta^j) e^{-bu} sum_{i<=j} (bu)^i/i!
    double fact = 1.0;
    for (int i = 2; i <= j; ++i) fact *= i;
    double partial = 1.0, term = 1.0;
    for (int i = 1; i <= j; ++i) {
      term *= beta * u_ / i;
      partial += term;
    }
    return fact / std::pow(beta, j) * std::exp(-beta * u_) * partial;
  };
  if (const auto* e = std::get_if<Exponential>(&dist)) return exp_tail(e->rate, u);
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    auto b = detail::fi_mixture_weights(*m);
    double s = 0.0;
    for (size_t l = 0; l < m->rates.size(); ++l)
      s += b[l] * exp_tail(m->rates[l], u);
    return s;
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    double a = g->shape, s = g->scale, m1 = a * s;
    double mj1 = 1.0;  // m_{j+1}
    for (int i = 0; i <= j; ++i) mj1 *= (a + i) * s;
    double v = mj1 * boost::math::gamma_q(a + j + 1.0, u / s) -
               std::pow(u, j + 1) * boost::math::gamma_q(a, u / s);
    return std::max(0.0, v / ((j + 1) * m1));
  }
  double z = std::get<Deterministic>(dist).value;
  if (u >= z) return 0.0;
  return (std::pow(z, j + 1) - std::pow(u, j + 1)) / ((j + 1) * z);
}

}  // namespace ruinlab
