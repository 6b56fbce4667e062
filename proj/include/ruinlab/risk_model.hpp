#pragma once

// Compound Poisson surplus model and De Vylder-type moment-matched fits.
//
// Model: U_t = u + c t - sum_{i<=N_t} Z_i with N_t Poisson(lambda t) and
// i.i.d. claims Z. The safety loading is theta = c / (lambda m1) - 1 and
// must be positive.
//
// A fit of order k replaces the claim distribution by a two- or
// three-parameter family whose compound process matches the first k moments
// of U_t for every t and u. Order 3 fits an exponential claim law, order 4
// a gamma claim law; lambda and theta transform alongside so that
// lambda * m1 * theta (the drift) and the matched claim moments agree.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ruinlab/claims.hpp"

namespace ruinlab {

class RiskModel {
 public:
  RiskModel(double lambda, double premium_rate, ClaimDistribution claims)
      : lambda_(lambda), premium_rate_(premium_rate), claims_(std::move(claims)) {
    validate(claims_);
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw Error("claim arrival rate must be positive");
    if (!(premium_rate > 0.0) || !std::isfinite(premium_rate))
      throw Error("premium rate must be positive");
    double m1 = moment(claims_, 1);
    theta_ = premium_rate / (lambda * m1) - 1.0;
    if (!(theta_ > 0.0))
      throw Error("safety loading must be positive (premium rate " +
                  std::to_string(premium_rate) + " <= expected claim flow " +
                  std::to_string(lambda * m1) + ")");
  }

  static RiskModel from_loading(double lambda, double theta,
                                ClaimDistribution claims) {
    validate(claims);
    if (!(theta > 0.0) || !std::isfinite(theta))
      throw Error("safety loading must be positive");
    double m1 = moment(claims, 1);
    return RiskModel(lambda, lambda * m1 * (1.0 + theta), std::move(claims));
  }

  // Same claims and arrival rate, new loading.
  RiskModel with_loading(double theta) const {
    return from_loading(lambda_, theta, claims_);
  }

  double lambda() const { return lambda_; }
  double premium_rate() const { return premium_rate_; }
  double theta() const { return theta_; }
  const ClaimDistribution& claims() const { return claims_; }
  double claim_moment(int j) const { return moment(claims_, j); }

 private:
  double lambda_;
  double premium_rate_;
  double theta_;
  ClaimDistribution claims_;
};

enum class FitFamily { exponential, gamma };

struct InfeasibleFit : Error {
  double residual;  // signed distance to the feasible region (<= 0)
  InfeasibleFit(const std::string& what, double r) : Error(what), residual(r) {}
};

struct DeVylderFit {
  int k;
  FitFamily family;
  RiskModel fitted;
  bool large_loading;  // fitted loading >= 10: approximation quality degrades
};

namespace detail {

inline constexpr double kLargeLoading = 10.0;

// Common tail of every fit: given the replacement claim law, carry lambda and
// theta across so that m2..mk of U_t match (claim moments scale by m2t/m2)
// and the drift lambda*m1*theta is preserved.
inline DeVylderFit finish_fit(const RiskModel& model, int k, FitFamily family,
                              ClaimDistribution fitted_claims) {
  double m1 = model.claim_moment(1);
  double m2 = model.claim_moment(2);
  double m1t = moment(fitted_claims, 1);
  double m2t = moment(fitted_claims, 2);
  double theta_t = (m1 * m2t) / (m2 * m1t) * model.theta();
  double lambda_t = (m2 / m2t) * model.lambda();
  RiskModel fitted =
      RiskModel::from_loading(lambda_t, theta_t, std::move(fitted_claims));
  return {k, family, std::move(fitted), theta_t >= kLargeLoading};
}

}  // namespace detail

// Moment-matched fit of order k. k = 3 requires FitFamily::exponential
// (three free parameters), k = 4 requires FitFamily::gamma (four). Throws
// InfeasibleFit when no member of the family has the required moments.
inline DeVylderFit devylder_fit(const RiskModel& model, int k,
                                FitFamily family) {
  if (k == 3) {
    if (family != FitFamily::exponential)
      throw Error("order-3 fit uses the exponential family");
    double m2 = model.claim_moment(2);
    double m3 = model.claim_moment(3);
    double beta = 3.0 * m2 / m3;
    return detail::finish_fit(model, k, family, Exponential{beta});
  }
  if (k == 4) {
    if (family != FitFamily::gamma)
      throw Error("order-4 fit uses the gamma family");
    double m2 = model.claim_moment(2);
    double m3 = model.claim_moment(3);
    double m4 = model.claim_moment(4);
    // Match moment ratios r1 = m3/m2, r2 = m4/m2 of the claim law up to the
    // common scale factor m2t/m2. For gamma(alpha, s):
    //   r1 = (alpha + 2) s, r2 = (alpha + 2)(alpha + 3) s^2,
    // solvable iff r1^2 < r2 < 1.5 r1^2.
    double r1 = m3 / m2;
    double r2 = m4 / m2;
    double den = r2 - r1 * r1;
    double num = 3.0 * r1 * r1 - 2.0 * r2;
    if (!(den > 0.0) || !(num > 0.0)) {
      double resid = std::min(den, num) / (r1 * r1);
      throw InfeasibleFit(
          "order-4 fit infeasible: needs m3^2/m2^2 < m4/m2 < 1.5 m3^2/m2^2 "
          "(normalized margin " +
              std::to_string(resid) + ")",
          resid);
    }
    double alpha = num / den;
    double s = r1 / (alpha + 2.0);
    return detail::finish_fit(model, k, family, GammaClaims{alpha, s});
  }
  throw Error("fit order must be 3 or 4");
}

// Default family for each supported order.
inline DeVylderFit devylder_fit(const RiskModel& model, int k) {
  return devylder_fit(
      model, k, k == 4 ? FitFamily::gamma : FitFamily::exponential);
}

struct MomentMatchReport {
  bool ok;
  double max_residual;
  int worst_order;                 // j attaining max_residual
  std::vector<double> per_order;   // per_order[j-1] = max over t of rel. resid
};

namespace detail {

// E[U_t^n] for n = 1..k via cumulants: kappa_1 = u + lambda m1 theta t,
// kappa_j = (-1)^j lambda t m_j for j >= 2, then the standard
// moments-from-cumulants recursion.
inline std::vector<double> surplus_moments(const RiskModel& model, double u,
                                           double t, int k) {
  std::vector<double> kappa(static_cast<size_t>(k) + 1, 0.0);
  kappa[1] = u + model.lambda() * model.claim_moment(1) * model.theta() * t;
  double sign = 1.0;
  for (int j = 2; j <= k; ++j)
    kappa[static_cast<size_t>(j)] =
        ((j % 2 == 0) ? 1.0 : -1.0) * model.lambda() * t * model.claim_moment(j);
  (void)sign;
  std::vector<double> mom(static_cast<size_t>(k) + 1, 0.0);
  mom[0] = 1.0;
  for (int n = 1; n <= k; ++n) {
    double acc = 0.0;
    double binom = 1.0;  // C(n-1, i-1), starting at i = 1
    for (int i = 1; i <= n; ++i) {
      acc += binom * kappa[static_cast<size_t>(i)] *
             mom[static_cast<size_t>(n - i)];
      binom *= static_cast<double>(n - i) / static_cast<double>(i);
    }
    mom[static_cast<size_t>(n)] = acc;
  }
  mom.erase(mom.begin());
  return mom;
}

}  // namespace detail

// Check that E[U_t^j] agrees between the original and the fitted model for
// j = 1..k at every t in t_grid, starting from initial surplus u. Residuals
// are relative (denominator max(|exact|, 1)).
inline MomentMatchReport verify_moment_match(const RiskModel& model,
                                             const RiskModel& fitted, int k,
                                             const std::vector<double>& t_grid,
                                             double u, double tol = 1e-8) {
  MomentMatchReport rep{true, 0.0, 0,
                        std::vector<double>(static_cast<size_t>(k), 0.0)};
  for (double t : t_grid) {
    auto a = detail::surplus_moments(model, u, t, k);
    auto b = detail::surplus_moments(fitted, u, t, k);
    for (int j = 1; j <= k; ++j) {
      double denom = std::max(std::abs(a[static_cast<size_t>(j - 1)]), 1.0);
      double r = std::abs(a[static_cast<size_t>(j - 1)] -
                          b[static_cast<size_t>(j - 1)]) /
                 denom;
      auto& slot = rep.per_order[static_cast<size_t>(j - 1)];
      slot = std::max(slot, r);
      if (r > rep.max_residual) {
        rep.max_residual = r;
        rep.worst_order = j;
      }
    }
  }
  rep.ok = rep.max_residual < tol;
  return rep;
}

}  // namespace ruinlab
