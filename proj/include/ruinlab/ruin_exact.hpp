#pragma once

// Ruin probability evaluators: closed forms for exponential / mixture /
// deterministic claims, a discretized-renewal numeric solver for any
// supported family, and the exponential-form approximations (fitted-model,
// Cramer-Lundberg, pure Lundberg, auxiliary exponential).

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ruinlab/claims.hpp"
#include "ruinlab/exppoly.hpp"
#include "ruinlab/lundberg.hpp"
#include "ruinlab/numeric.hpp"
#include "ruinlab/risk_model.hpp"

namespace ruinlab {

enum class PsiProvenance {
  closed_form,
  renewal_numeric,
  devylder,
  cramer_lundberg,
  lundberg_pure,
  auxiliary_exponential,
};

// Immutable u -> psi(u) map. Backed by one of: an exponential-polynomial
// closed form (valid everywhere), a uniform grid with linear interpolation
// and a fitted single-exponential tail beyond the grid, or a plain function.
class PsiEvaluator {
 public:
  PsiEvaluator(PsiProvenance prov, double theta, ExpPoly poly)
      : prov_(prov), theta_(theta), poly_(std::move(poly)) {}

  PsiEvaluator(PsiProvenance prov, double theta, double step,
               std::vector<double> values)
      : prov_(prov), theta_(theta), step_(step), values_(std::move(values)) {
    if (!(step > 0.0) || values_.size() < 2)
      throw Error("psi grid needs step > 0 and at least two nodes");
    // tail: two-point log fit over the last decade of the grid
    size_t n = values_.size() - 1;
    size_t j0 = n - std::max<size_t>(2, static_cast<size_t>(0.1 * n));
    if (values_[j0] > 0.0 && values_[n] > 0.0 && values_[j0] > values_[n]) {
      tail_rate_ = std::log(values_[j0] / values_[n]) /
                   (static_cast<double>(n - j0) * step_);
      tail_coef_ =
          values_[n] * std::exp(tail_rate_ * static_cast<double>(n) * step_);
    }
  }

  PsiEvaluator(PsiProvenance prov, double theta,
               std::function<double(double)> fn)
      : prov_(prov), theta_(theta), fn_(std::move(fn)) {}

  PsiProvenance provenance() const { return prov_; }

  // loading of the model this evaluator describes (the fitted model's for
  // devylder provenance)
  double theta() const { return theta_; }

  double operator()(double u) const {
    if (u < 0.0) throw Error("psi evaluated at u < 0");
    if (poly_) return (*poly_)(u);
    if (!values_.empty()) {
      double pos = u / step_;
      auto n = values_.size() - 1;
      if (pos >= static_cast<double>(n)) {
        if (pos == static_cast<double>(n)) return values_[n];
        return tail_coef_ * std::exp(-tail_rate_ * u);
      }
      auto i = static_cast<size_t>(pos);
      double frac = pos - static_cast<double>(i);
      return values_[i] + frac * (values_[i + 1] - values_[i]);
    }
    return fn_(u);
  }

  bool has_exp_form() const { return poly_.has_value(); }
  const ExpPoly& exp_form() const {
    if (!poly_) throw Error("evaluator has no exponential closed form");
    return *poly_;
  }

  bool has_grid() const { return !values_.empty(); }
  double grid_step() const { return step_; }
  double grid_max() const {
    return step_ * static_cast<double>(values_.size() - 1);
  }
  const std::vector<double>& grid_values() const { return values_; }
  // psi ~ tail_coef e^{-tail_rate u} beyond grid_max (grid evaluators)
  double tail_coef() const { return tail_coef_; }
  double tail_rate() const { return tail_rate_; }

 private:
  PsiProvenance prov_;
  double theta_;
  std::optional<ExpPoly> poly_;
  double step_ = 0.0;
  std::vector<double> values_;
  double tail_coef_ = 0.0;
  double tail_rate_ = 1.0;
  std::function<double(double)> fn_;
};

inline PsiEvaluator psi_exponential_claims(const RiskModel& model) {
  const auto* e = std::get_if<Exponential>(&model.claims());
  if (!e) throw Error("psi_exponential_claims needs exponential claims");
  double theta = model.theta();
  double R = e->rate * theta / (1.0 + theta);
  ExpPoly poly({{1.0 / (1.0 + theta), 0, R}});
  return {PsiProvenance::closed_form, theta, std::move(poly)};
}

// psi(u) = sum_i C_i e^{-r_i u}: the r_i are the n positive solutions of
// sum_l b_l beta_l/(beta_l - r) = 1+theta, one in (0, beta_(1)) (the
// adjustment coefficient) and one between each pair of consecutive rates;
// the C_i come from the partial-fraction residues.
inline PsiEvaluator psi_mixture_closed_form(const RiskModel& model) {
  const auto* mix = std::get_if<ExpMixture>(&model.claims());
  if (!mix) throw Error("psi_mixture_closed_form needs exp_mixture claims");
  const double theta = model.theta();
  const double target = 1.0 + theta;
  const size_t n = mix->rates.size();

  auto bw = detail::fi_mixture_weights(*mix);
  std::vector<std::pair<double, double>> comp(n);  // (beta_l, b_l), ascending
  for (size_t l = 0; l < n; ++l) comp[l] = {mix->rates[l], bw[l]};
  std::sort(comp.begin(), comp.end());

  auto G = [&](double r) {
    double s = 0.0;
    for (const auto& [beta, b] : comp) s += b * beta / (beta - r);
    return s;
  };
  auto fdf = [&](double r) {
    double g = 0.0, dg = 0.0;
    for (const auto& [beta, b] : comp) {
      double d = beta - r;
      g += b * beta / d;
      dg += b * beta / (d * d);
    }
    return std::pair<double, double>(g / target - 1.0, dg / target);
  };

  std::vector<ExpPolyTerm> terms(n);
  double coef_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double lo = (i == 0) ? 0.0 : comp[i - 1].first;
    double hi = comp[i].first;
    double width = hi - lo;
    // walk the bracket ends inward from the poles until the signs are right
    double a = (i == 0) ? 0.0 : lo + 1e-9 * width;
    double b = hi - 1e-9 * width;
    for (int guard = 0; G(a) / target - 1.0 >= 0.0; ++guard) {
      if (guard > 50 || i == 0)
        throw Error("mixture characteristic roots not separable");
      a = lo + (a - lo) / 16.0;
    }
    for (int guard = 0; G(b) / target - 1.0 <= 0.0; ++guard) {
      if (guard > 50)
        throw Error("mixture characteristic roots not separable");
      b = hi - (hi - b) / 16.0;
    }
    auto root = detail::newton_bisect(fdf, a, b, 1e-14);
    if (std::abs(root.f) > 1e-12)
      throw Error("mixture characteristic root residual too large");
    double num = 0.0, den = 0.0;
    for (const auto& [beta, bl] : comp) {
      double d = beta - root.x;
      num += bl / d;
      den += bl * beta / (d * d);
    }
    terms[i] = {num / den, 0, root.x};
    coef_sum += num / den;
  }
  if (std::abs(coef_sum - 1.0 / target) > 1e-8)
    throw Error("mixture partial fractions inconsistent (sum C_i != 1/(1+theta))");
  return {PsiProvenance::closed_form, theta, ExpPoly(std::move(terms))};
}

namespace detail {

// Finite-series expression for constant claims of size z: with v = u/z and
// kappa = 1/(1+theta),
//   psi(u) = 1 - (theta/(1+theta)) sum_{k=0}^{floor(v)} e^{kappa(v-k)}
//            (-kappa(v-k))^k / k!.
// The terms alternate and grow before they cancel; Kahan summation plus a
// cancellation floor keep the result honest, and *underflow is set when the
// series is returned as 0 because no digits survive.
inline double shiu_psi(double z, double theta, double u,
                       bool* underflow = nullptr) {
  if (u < 0.0) throw Error("psi evaluated at u < 0");
  double v = u / z;
  double kappa = 1.0 / (1.0 + theta);
  int n = static_cast<int>(std::floor(v));
  double sum = 0.0, comp = 0.0, abs_sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    double x = kappa * (v - static_cast<double>(k));
    double t;
    if (x == 0.0) {
      t = (k == 0) ? 1.0 : 0.0;
    } else {
      double lt = x + k * std::log(x) - std::lgamma(k + 1.0);
      if (lt > 700.0) {
        if (underflow) *underflow = true;
        return 0.0;
      }
      t = std::exp(lt);
      if (k & 1) t = -t;
    }
    double y = t - comp;
    double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
    abs_sum += std::abs(t);
  }
  double w = theta / (1.0 + theta);
  double psi = 1.0 - w * sum;
  if (psi < 1e-13 * w * abs_sum || psi < 0.0) {
    if (underflow) *underflow = true;
    return 0.0;
  }
  return std::min(psi, 1.0);
}

}  // namespace detail

inline PsiEvaluator psi_deterministic(const RiskModel& model) {
  const auto* d = std::get_if<Deterministic>(&model.claims());
  if (!d) throw Error("psi_deterministic needs deterministic claims");
  double z = d->value;
  double theta = model.theta();
  return {PsiProvenance::closed_form, theta,
          [z, theta](double u) { return detail::shiu_psi(z, theta, u); }};
}

namespace detail {

// Forward solve of psi(u)(1+theta) = Fbar_I(u) + int_0^u psi(u-x) f_I(x) dx
// on a uniform grid. Composite weights: 1 everywhere with order-2 end
// corrections (5/12, 13/12 pattern), Simpson at i=2, trapezoid at i=1; ends
// whose correction stencil spans a density jump node fall back to trapezoid,
// interior jump nodes carry the half-sum of the one-sided limits, and the
// j=i endpoint always uses the left limit (the integral sees f_I(u^-)).
inline std::vector<double> renewal_grid(const RiskModel& model, double u_max,
                                        double h) {
  if (!(h > 0.0) || !(u_max > 0.0))
    throw Error("renewal grid needs positive u_max and step");
  if (u_max / h > 1e7 + 0.5)
    throw Error("renewal grid too large (u_max/step > 1e7)");
  const auto& dist = model.claims();
  const double q = 1.0 + model.theta();
  const auto N = static_cast<size_t>(std::llround(u_max / h));
  if (N < 1) throw Error("renewal grid needs at least one step");

  std::vector<double> fi(N + 1), fl(N + 1), fbar(N + 1);
  for (size_t j = 0; j <= N; ++j) {
    double x = static_cast<double>(j) * h;
    fi[j] = integrated_tail_density(dist, x);
    fl[j] = integrated_tail_density_left(dist, x);
    fbar[j] = integrated_tail_survival(dist, x);
  }
  std::vector<size_t> jumps;
  for (double zj : density_jump_points(dist)) {
    auto k = static_cast<size_t>(std::llround(zj / h));
    if (k <= N &&
        std::abs(static_cast<double>(k) * h - zj) <= 1e-9 * std::max(1.0, zj)) {
      jumps.push_back(k);
      fi[k] = 0.5 * (fl[k] + fi[k]);
    }
  }
  auto is_jump = [&](size_t k) {
    for (size_t j : jumps)
      if (j == k) return true;
    return false;
  };

  std::vector<double> psi(N + 1);
  psi[0] = 1.0 / q;
  const double f0 = fi[0];
  for (size_t i = 1; i <= N; ++i) {
    // unit-weight convolution core sum_{j=1}^{i-1} psi_{i-j} f_j, unrolled
    // into four accumulators (fixed order, deterministic)
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    size_t j = 1;
    for (; j + 3 < i; j += 4) {
      a0 += psi[i - j] * fi[j];
      a1 += psi[i - j - 1] * fi[j + 1];
      a2 += psi[i - j - 2] * fi[j + 2];
      a3 += psi[i - j - 3] * fi[j + 3];
    }
    double conv = (a0 + a1) + (a2 + a3);
    for (; j < i; ++j) conv += psi[i - j] * fi[j];
    conv += psi[0] * fl[i];  // j = i endpoint, left limit

    double w0 = 1.0;
    if (i == 1) {
      w0 -= 0.5;
      conv -= 0.5 * psi[0] * fl[1];
    } else if (i == 2) {
      w0 -= 2.0 / 3.0;
      conv += (1.0 / 3.0) * psi[1] * fi[1];
      conv -= (2.0 / 3.0) * psi[0] * fl[2];
    } else {
      if (is_jump(1)) {
        w0 -= 0.5;
      } else {
        w0 -= 7.0 / 12.0;
        conv += (1.0 / 12.0) * psi[i - 1] * fi[1];
      }
      if (is_jump(i - 1)) {
        conv -= 0.5 * psi[0] * fl[i];
      } else {
        conv -= (7.0 / 12.0) * psi[0] * fl[i];
        conv += (1.0 / 12.0) * psi[1] * fi[i - 1];
      }
    }
    psi[i] = (fbar[i] + h * conv) / (q - h * w0 * f0);
  }
  return psi;
}

}  // namespace detail

inline PsiEvaluator psi_renewal_numeric(const RiskModel& model, double u_max,
                                        double h) {
  return {PsiProvenance::renewal_numeric, model.theta(), h,
          detail::renewal_grid(model, u_max, h)};
}

// Default grid: step scaled by the mean claim, range chosen so the tail
// beyond the grid is below 1e-12 (capped by the grid-size limit).
inline double default_renewal_step(const RiskModel& model) {
  return 1e-3 * model.claim_moment(1);
}

inline double default_renewal_umax(const RiskModel& model) {
  double R = adjustment_coefficient(model).R;
  double u = std::log(1e12) / R;
  u = std::min(u, default_renewal_step(model) * 1e7);
  return std::max(u, 10.0 * model.claim_moment(1));
}

// Exact-grade evaluator for any supported family: closed form where one
// exists, the renewal solver at default resolution for gamma claims.
inline PsiEvaluator psi_exact(const RiskModel& model) {
  if (std::holds_alternative<Exponential>(model.claims()))
    return psi_exponential_claims(model);
  if (std::holds_alternative<ExpMixture>(model.claims()))
    return psi_mixture_closed_form(model);
  if (std::holds_alternative<Deterministic>(model.claims()))
    return psi_deterministic(model);
  return psi_renewal_numeric(model, default_renewal_umax(model),
                             default_renewal_step(model));
}

// alpha e^{-Ru} with alpha = theta / (R M_I'(R)); exact for exponential
// claims.
inline PsiEvaluator cramer_lundberg(const RiskModel& model) {
  double R = adjustment_coefficient(model).R;
  double alpha =
      model.theta() / (R * integrated_tail_mgf_deriv(model.claims(), R, 1));
  return {PsiProvenance::cramer_lundberg, model.theta(),
          ExpPoly({{alpha, 0, R}})};
}

// plain e^{-Ru} reference curve
inline PsiEvaluator psi_lundberg_pure(const RiskModel& model) {
  double R = adjustment_coefficient(model).R;
  return {PsiProvenance::lundberg_pure, model.theta(), ExpPoly({{1.0, 0, R}})};
}

// (1/(1+theta)) e^{-Ru}: exponential shape with the exact loading and exact
// adjustment coefficient
inline PsiEvaluator psi_auxiliary_exponential(const RiskModel& model) {
  double R = adjustment_coefficient(model).R;
  return {PsiProvenance::auxiliary_exponential, model.theta(),
          ExpPoly({{1.0 / (1.0 + model.theta()), 0, R}})};
}

// Fitted-model ruin probability: exponential closed form for order-3 fits,
// renewal solve of the fitted gamma model for order-4.
inline PsiEvaluator devylder_psi(const DeVylderFit& fit) {
  const RiskModel& f = fit.fitted;
  if (fit.family == FitFamily::exponential) {
    double R = std::get<Exponential>(f.claims()).rate * f.theta() /
               (1.0 + f.theta());
    return {PsiProvenance::devylder, f.theta(),
            ExpPoly({{1.0 / (1.0 + f.theta()), 0, R}})};
  }
  return {PsiProvenance::devylder, f.theta(), default_renewal_step(f),
          detail::renewal_grid(f, default_renewal_umax(f),
                               default_renewal_step(f))};
}

inline PsiEvaluator devylder_psi(const RiskModel& model, int k,
                                 FitFamily family) {
  return devylder_psi(devylder_fit(model, k, family));
}

inline PsiEvaluator devylder_psi(const RiskModel& model, int k) {
  return devylder_psi(devylder_fit(model, k));
}

}  // namespace ruinlab
