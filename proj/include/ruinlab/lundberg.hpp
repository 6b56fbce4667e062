#pragma once

// Adjustment coefficient R: the unique positive solution of
//   integral e^{Rx} f_I(x) dx = 1 + theta,
// its first-order expansion in theta, and exponentially weighted moments
// of the integrated tail.

#include <algorithm>
#include <cmath>
#include <utility>

#include "ruinlab/claims.hpp"
#include "ruinlab/numeric.hpp"
#include "ruinlab/risk_model.hpp"

namespace ruinlab {

struct AdjustmentResult {
  double R;
  double bracket_lo;
  double bracket_hi;
  double residual;  // M_I(R)/(1+theta) - 1 at the returned root
  int iterations;
};

// Small-theta expansion: R = (2 m1 / m2) theta + O(theta^2).
inline double first_order_R(const RiskModel& model) {
  return 2.0 * model.claim_moment(1) * model.theta() / model.claim_moment(2);
}

inline AdjustmentResult adjustment_coefficient(const RiskModel& model) {
  const ClaimDistribution& dist = model.claims();
  const double theta = model.theta();
  const double target = 1.0 + theta;

  if (const auto* e = std::get_if<Exponential>(&dist)) {
    // beta/((beta-R)(1+theta)) = 1 solves to R = beta theta/(1+theta)
    double R = e->rate * theta / target;
    double res = integrated_tail_mgf_deriv(dist, R, 0) / target - 1.0;
    return {R, 0.0, e->rate, res, 0};
  }

  // M_I is convex with M_I'(0) = m2/(2 m1), so the tangent at 0 gives
  // M_I(first_order_R) >= 1+theta: [0, first_order_R] brackets the root.
  // Clip to the MGF radius (pole) and the deterministic overflow cap.
  double hi = first_order_R(model);
  double cap = hi;
  double radius = mgf_radius(dist);
  if (std::isfinite(radius)) cap = std::min(cap, radius * (1.0 - 1e-12));
  if (const auto* d = std::get_if<Deterministic>(&dist))
    cap = std::min(cap, 699.0 / d->value);
  hi = cap;

  auto g = [&](double t) {
    return std::pair<double, double>(
        integrated_tail_mgf_deriv(dist, t, 0) / target - 1.0,
        integrated_tail_mgf_deriv(dist, t, 1) / target);
  };
  if (!(g(hi).first >= 0.0))
    throw Error("no adjustment coefficient within the evaluable range");
  auto root = detail::newton_bisect(g, 0.0, hi, 1e-14);
  return {root.x, 0.0, hi, root.f, root.iterations};
}

// integral x^k e^{Rx} f_I(x) dx / (1+theta); k = 0 at the adjustment
// coefficient returns 1 by definition.
inline double exp_weighted_moment(const RiskModel& model, double R, int k) {
  return integrated_tail_mgf_deriv(model.claims(), R, k) / (1.0 + model.theta());
}

// Signed gap R - R_fit between the model's adjustment coefficient and the
// fitted model's; order theta^k for an order-k fit.
inline double adjustment_gap(const RiskModel& model, const DeVylderFit& fit) {
  return adjustment_coefficient(model).R -
         adjustment_coefficient(fit.fitted).R;
}

}  // namespace ruinlab
