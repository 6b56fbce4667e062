#pragma once

// Conditional moments, given that ruin occurs, of the time of ruin t_j(u),
// the deficit at ruin d_j(u), and the surplus immediately before ruin s_j(u),
// plus their De Vylder type approximations (the same functional evaluated on
// the fitted model with its exact psi).
//
// Two evaluation routes, selected by the evaluator's backing:
//  - closed: psi is an exponential polynomial; every integral in the defining
//    formulas stays inside that algebra, so the results carry full closed-form
//    precision.
//  - grid: psi is grid- or function-backed; composite quadrature with Gregory
//    end corrections, tails closed out analytically with the single-exponential
//    asymptote fitted to the last decade of the grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "ruinlab/claims.hpp"
#include "ruinlab/exppoly.hpp"
#include "ruinlab/risk_model.hpp"
#include "ruinlab/ruin_exact.hpp"

namespace ruinlab {

enum class FunctionalKind { time_to_ruin, deficit_at_ruin, surplus_before_ruin };

struct FunctionalRequest {
  FunctionalKind kind = FunctionalKind::time_to_ruin;
  int order = 1;  // j >= 1; time moments capped at 4
  double u = 0.0;
};

namespace detail {

inline constexpr int kMaxTimeOrder = 4;

inline void check_request(FunctionalKind kind, int order, double u) {
  if (order < 1) throw Error("functional order must be >= 1");
  if (kind == FunctionalKind::time_to_ruin && order > kMaxTimeOrder)
    throw Error("time-of-ruin moments supported up to order 4");
  if (u < 0.0) throw Error("functional needs u >= 0");
}

inline double require_positive_psi(double p) {
  if (!(p >= 1e-300))
    throw Error("psi(u) underflows; functional undefined this far out");
  return p;
}

// A negative result can only come from cancellation between the leading term
// and the subtracted constant: clamp rounding-level dips, refuse anything
// larger (the quadrature grid is too coarse for this input).
inline double guard_negative(double v, double scale) {
  if (v < 0.0) {
    if (v < -1e-8 * std::max(scale, 1e-300))
      throw Error("functional went negative; quadrature grid too coarse");
    return 0.0;
  }
  return v;
}

// f_I as an exponential polynomial (exponential / mixture claims only).
inline ExpPoly integrated_tail_poly(const ClaimDistribution& claims) {
  if (const auto* e = std::get_if<Exponential>(&claims))
    return ExpPoly::exponential(e->rate, e->rate);
  if (const auto* m = std::get_if<ExpMixture>(&claims)) {
    auto bw = fi_mixture_weights(*m);
    std::vector<ExpPolyTerm> terms;
    terms.reserve(bw.size());
    for (size_t l = 0; l < bw.size(); ++l)
      terms.push_back({bw[l] * m->rates[l], 0, m->rates[l]});
    return ExpPoly(std::move(terms));
  }
  throw Error("closed-form functionals need exponential or mixture claims");
}

// ---------------------------------------------------------------------------
// closed route

// W_j = psi * t_j stays an exponential polynomial:
//   W_0 = psi,
//   W_j = (j / (lambda m1 theta)) [ (psi conv W_{j-1})
//                                   + int_u^inf W_{j-1}
//                                   - psi(u) int_0^inf W_{j-1} ].
inline ExpPoly time_weight_poly(const ExpPoly& psi, double lam_m1_theta,
                                int order) {
  ExpPoly w = psi;
  for (int j = 1; j <= order; ++j) {
    ExpPoly next =
        convolve(psi, w) + w.tail_poly() + psi.scaled(-w.total_integral());
    w = next.scaled(static_cast<double>(j) / lam_m1_theta);
  }
  return w;
}

inline double time_moment_closed(const RiskModel& model, const ExpPoly& psi,
                                 int order, double u) {
  double lmt = model.lambda() * model.claim_moment(1) * model.theta();
  ExpPoly w = time_weight_poly(psi, lmt, order);
  double pu = require_positive_psi(psi(u));
  return guard_negative(w(u) / pu, std::abs(w(u)) / pu);
}

inline double deficit_moment_closed(const RiskModel& model, const ExpPoly& psi,
                                    int j, double u) {
  double m1 = model.claim_moment(1);
  double th = model.theta();
  double mj = model.claim_moment(j);
  double tau = (j * m1 * th / mj) * psi.shifted_power_tail(u, j - 1);
  for (int i = 0; i + 2 <= j; ++i)
    tau -= binomial(j, i) * (model.claim_moment(j - i) / mj) *
           psi.shifted_power_tail(u, i);
  double pu = require_positive_psi(psi(u));
  double lead = (mj / (m1 * th)) * tau / pu;
  double sub = model.claim_moment(j + 1) / ((j + 1) * m1 * th);
  return guard_negative(lead - sub, std::abs(lead) + sub);
}

inline double surplus_moment_closed(const RiskModel& model, const ExpPoly& psi,
                                    int j, double u) {
  double m1 = model.claim_moment(1);
  double th = model.theta();
  ExpPoly xj_fi = integrated_tail_poly(model.claims()).times_power(j);
  double conv = convolve(psi, xj_fi)(u);
  double tail = integrated_tail_power_tail(model.claims(), u, j);
  double pu = require_positive_psi(psi(u));
  double lead = (conv + tail) / (th * pu);
  double sub = model.claim_moment(j + 1) / ((j + 1) * m1 * th);
  return guard_negative(lead - sub, std::abs(lead) + sub);
}

// ---------------------------------------------------------------------------
// grid route

// Composite quadrature with Gregory end corrections (error O(h^3) for smooth
// integrands) on a uniform grid snapped to [a, b]; deterministic summation.
template <typename F>
double gregory_quad(F&& f, double a, double b, double h_target) {
  if (!(b > a)) return 0.0;
  int m = std::max(4, static_cast<int>(std::ceil((b - a) / h_target)));
  double h = (b - a) / m;
  double sum = 0.0, f0 = 0.0, f1 = 0.0, fm1 = 0.0, fm = 0.0;
  for (int i = 0; i <= m; ++i) {
    double x = (i == m) ? b : a + h * i;
    double v = f(x);
    sum += v;
    if (i == 0) f0 = v;
    if (i == 1) f1 = v;
    if (i == m - 1) fm1 = v;
    if (i == m) fm = v;
  }
  return h * (sum - (7.0 / 12.0) * (f0 + fm) + (1.0 / 12.0) * (f1 + fm1));
}

// int_A^inf (x - u)^i coef e^{-rate x} dx for A >= u.
inline double exp_shifted_tail(double coef, double rate, double A, double u,
                               int i) {
  if (coef == 0.0) return 0.0;
  double c = A - u;
  double s = 0.0;
  for (int k = 0; k <= i; ++k)
    s += binomial(i, k) * std::pow(c, i - k) * factorial(k) /
         std::pow(rate, k + 1);
  return coef * std::exp(-rate * A) * s;
}

// Quadrature horizon and the single-exponential asymptote used beyond it.
struct PsiQuadCtx {
  double h;  // target step
  double u_hi;
  double tail_coef;
  double tail_rate;
};

inline PsiQuadCtx make_quad_ctx(const RiskModel& model,
                                const PsiEvaluator& psi) {
  PsiQuadCtx ctx{};
  if (psi.has_grid()) {
    ctx.h = psi.grid_step();
    ctx.u_hi = psi.grid_max();
    ctx.tail_coef = psi.tail_coef();
    ctx.tail_rate = psi.tail_rate();
    return ctx;
  }
  ctx.h = default_renewal_step(model);
  double m1 = model.claim_moment(1);
  double hi = default_renewal_umax(model);
  // a series-backed psi can round to zero far out; pull the horizon in until
  // it is positive there
  while (hi > 10.0 * m1 && !(psi(hi) > 0.0)) hi *= 0.9;
  ctx.u_hi = hi;
  double x1 = 0.9 * hi;
  double p1 = psi(x1), p2 = psi(hi);
  if (p1 > 0.0 && p2 > 0.0 && p1 > p2) {
    ctx.tail_rate = std::log(p1 / p2) / (hi - x1);
    ctx.tail_coef = p2 * std::exp(ctx.tail_rate * hi);
  } else {
    ctx.tail_coef = 0.0;
    ctx.tail_rate = 1.0;
  }
  return ctx;
}

// W_j = psi * t_j sampled on a uniform grid, with a fitted exponential tail.
struct WeightGrid {
  double h = 0.0;
  std::vector<double> w;
  double tail_coef = 0.0;
  double tail_rate = 1.0;
  double total = 0.0;  // int_0^inf

  double end() const { return h * static_cast<double>(w.size() - 1); }

  double at(double x) const {
    double pos = x / h;
    auto n = w.size() - 1;
    if (pos >= static_cast<double>(n)) {
      if (pos == static_cast<double>(n)) return w[n];
      return tail_coef * std::exp(-tail_rate * x);
    }
    auto i = static_cast<size_t>(pos);
    double frac = pos - static_cast<double>(i);
    return w[i] + frac * (w[i + 1] - w[i]);
  }

  double tail_from(double A) const {  // int_A^inf, A >= end()
    if (tail_coef <= 0.0) return 0.0;
    return tail_coef / tail_rate * std::exp(-tail_rate * A);
  }

  void fit_tail() {
    size_t n = w.size() - 1;
    size_t j0 = n - std::max<size_t>(2, static_cast<size_t>(0.1 * n));
    if (w[j0] > 0.0 && w[n] > 0.0 && w[j0] > w[n]) {
      tail_rate = std::log(w[j0] / w[n]) / (static_cast<double>(n - j0) * h);
      tail_coef = w[n] * std::exp(tail_rate * static_cast<double>(n) * h);
    } else {
      tail_coef = 0.0;
      tail_rate = 1.0;
    }
  }

  void finish_total() {
    size_t n = w.size() - 1;
    double s = 0.0;
    for (double v : w) s += v;
    total = h * (s - (7.0 / 12.0) * (w[0] + w[n]) +
                 (1.0 / 12.0) * (w[1] + w[n - 1])) +
            tail_from(end());
  }
};

// Node budget: the time-moment recursion is O(n^2) per level, so cap the memo
// grid; interpolation off a 20k-node grid keeps quadrature error well inside
// what order >= 2 time moments need.
inline constexpr size_t kMaxWeightNodes = 20000;

inline WeightGrid base_weight_grid(const PsiEvaluator& psi,
                                   const PsiQuadCtx& ctx) {
  WeightGrid g;
  double hw = std::max(ctx.h, ctx.u_hi / static_cast<double>(kMaxWeightNodes));
  auto n = std::max<size_t>(8, static_cast<size_t>(std::ceil(ctx.u_hi / hw)));
  g.h = ctx.u_hi / static_cast<double>(n);
  g.w.resize(n + 1);
  for (size_t i = 0; i <= n; ++i)
    g.w[i] = psi(g.h * static_cast<double>(i));
  g.tail_coef = ctx.tail_coef;
  g.tail_rate = ctx.tail_rate;
  g.finish_total();
  return g;
}

inline WeightGrid next_weight_grid(const WeightGrid& psi_g,
                                   const WeightGrid& prev, int j,
                                   double lam_m1_theta) {
  size_t n = psi_g.w.size() - 1;
  double h = psi_g.h;
  WeightGrid g;
  g.h = h;
  g.w.assign(n + 1, 0.0);

  // suffix[i] = int_{x_i}^inf prev, via running prefix sums
  std::vector<double> suffix(n + 1);
  suffix[0] = prev.total;
  double run = prev.w[0];
  for (size_t i = 1; i <= n; ++i) {
    run += prev.w[i];
    double p;
    if (i == 1)
      p = h * 0.5 * (prev.w[0] + prev.w[1]);
    else if (i == 2)
      p = h / 3.0 * (prev.w[0] + 4.0 * prev.w[1] + prev.w[2]);
    else
      p = h * (run - (7.0 / 12.0) * (prev.w[0] + prev.w[i]) +
               (1.0 / 12.0) * (prev.w[1] + prev.w[i - 1]));
    suffix[i] = prev.total - p;
  }

  for (size_t i = 0; i <= n; ++i) {
    double conv = 0.0;
    if (i == 1) {
      conv = h * 0.5 * (psi_g.w[1] * prev.w[0] + psi_g.w[0] * prev.w[1]);
    } else if (i == 2) {
      conv = h / 3.0 *
             (psi_g.w[2] * prev.w[0] + 4.0 * psi_g.w[1] * prev.w[1] +
              psi_g.w[0] * prev.w[2]);
    } else if (i >= 3) {
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      size_t l = 0;
      for (; l + 3 <= i; l += 4) {
        s0 += psi_g.w[i - l] * prev.w[l];
        s1 += psi_g.w[i - l - 1] * prev.w[l + 1];
        s2 += psi_g.w[i - l - 2] * prev.w[l + 2];
        s3 += psi_g.w[i - l - 3] * prev.w[l + 3];
      }
      for (; l <= i; ++l) s0 += psi_g.w[i - l] * prev.w[l];
      double s = (s0 + s1) + (s2 + s3);
      conv = h * (s -
                  (7.0 / 12.0) *
                      (psi_g.w[i] * prev.w[0] + psi_g.w[0] * prev.w[i]) +
                  (1.0 / 12.0) * (psi_g.w[i - 1] * prev.w[1] +
                                  psi_g.w[1] * prev.w[i - 1]));
    }
    g.w[i] = (conv + suffix[i] - psi_g.w[i] * prev.total) *
             static_cast<double>(j) / lam_m1_theta;
  }
  g.fit_tail();
  g.finish_total();
  return g;
}

inline double time_moment_grid(const RiskModel& model, const PsiEvaluator& psi,
                               int order, double u) {
  PsiQuadCtx ctx = make_quad_ctx(model, psi);
  double lmt = model.lambda() * model.claim_moment(1) * model.theta();
  WeightGrid base = base_weight_grid(psi, ctx);
  WeightGrid prev = base;  // W_{order-1} after the loop
  for (int j = 1; j < order; ++j) prev = next_weight_grid(base, prev, j, lmt);

  double conv = 0.0;
  if (u > 0.0)
    conv = gregory_quad(
        [&](double x) { return psi(std::max(u - x, 0.0)) * prev.at(x); }, 0.0,
        u, base.h);
  double tail = (u < prev.end())
                    ? gregory_quad([&](double x) { return prev.at(x); }, u,
                                   prev.end(), base.h) +
                          prev.tail_from(prev.end())
                    : prev.tail_from(u);
  double pu = require_positive_psi(psi(u));
  double lead = (conv + tail) / pu;
  double v = (lead - prev.total) * static_cast<double>(order) / lmt;
  return guard_negative(v, std::abs(lead) + prev.total);
}

inline double deficit_moment_grid(const RiskModel& model,
                                  const PsiEvaluator& psi, int j, double u) {
  PsiQuadCtx ctx = make_quad_ctx(model, psi);
  double m1 = model.claim_moment(1);
  double th = model.theta();
  double mj = model.claim_moment(j);
  auto shifted_tail = [&](int i) {
    double A = std::max(u, ctx.u_hi);
    double body =
        (u < ctx.u_hi)
            ? gregory_quad(
                  [&](double x) { return std::pow(x - u, i) * psi(x); }, u,
                  ctx.u_hi, ctx.h)
            : 0.0;
    return body + exp_shifted_tail(ctx.tail_coef, ctx.tail_rate, A, u, i);
  };
  double tau = (j * m1 * th / mj) * shifted_tail(j - 1);
  for (int i = 0; i + 2 <= j; ++i)
    tau -= binomial(j, i) * (model.claim_moment(j - i) / mj) * shifted_tail(i);
  double pu = require_positive_psi(psi(u));
  double lead = (mj / (m1 * th)) * tau / pu;
  double sub = model.claim_moment(j + 1) / ((j + 1) * m1 * th);
  return guard_negative(lead - sub, std::abs(lead) + sub);
}

inline double surplus_moment_grid(const RiskModel& model,
                                  const PsiEvaluator& psi, int j, double u) {
  PsiQuadCtx ctx = make_quad_ctx(model, psi);
  double m1 = model.claim_moment(1);
  double th = model.theta();
  double conv = 0.0;
  if (u > 0.0) {
    // split at density jumps so each piece is smooth; the left piece takes
    // the left limit of f_I at its upper endpoint
    auto segment = [&](double a, double b, bool left_limit_at_b) {
      return gregory_quad(
          [&](double x) {
            double fi = (left_limit_at_b && x == b)
                            ? integrated_tail_density_left(model.claims(), x)
                            : integrated_tail_density(model.claims(), x);
            return std::pow(x, j) * fi * psi(std::max(u - x, 0.0));
          },
          a, b, ctx.h);
    };
    double lo = 0.0;
    for (double z : density_jump_points(model.claims()))
      if (z > 1e-12 && z < u * (1.0 - 1e-12)) {
        conv += segment(lo, z, true);
        lo = z;
      }
    conv += segment(lo, u, false);
  }
  double tail = integrated_tail_power_tail(model.claims(), u, j);
  double pu = require_positive_psi(psi(u));
  double lead = (conv + tail) / (th * pu);
  double sub = model.claim_moment(j + 1) / ((j + 1) * m1 * th);
  return guard_negative(lead - sub, std::abs(lead) + sub);
}

}  // namespace detail

// Conditional moment of the chosen functional for the model described by psi
// (model and psi must refer to the same risk process).
inline double ruin_functional(const RiskModel& model, const PsiEvaluator& psi,
                              const FunctionalRequest& req) {
  detail::check_request(req.kind, req.order, req.u);
  const bool closed = psi.has_exp_form();
  switch (req.kind) {
    case FunctionalKind::time_to_ruin:
      return closed ? detail::time_moment_closed(model, psi.exp_form(),
                                                 req.order, req.u)
                    : detail::time_moment_grid(model, psi, req.order, req.u);
    case FunctionalKind::deficit_at_ruin:
      return closed ? detail::deficit_moment_closed(model, psi.exp_form(),
                                                    req.order, req.u)
                    : detail::deficit_moment_grid(model, psi, req.order,
                                                  req.u);
    case FunctionalKind::surplus_before_ruin:
      return closed ? detail::surplus_moment_closed(model, psi.exp_form(),
                                                    req.order, req.u)
                    : detail::surplus_moment_grid(model, psi, req.order,
                                                  req.u);
  }
  throw Error("unknown functional kind");
}

inline double time_moment(const RiskModel& model, const PsiEvaluator& psi,
                          int order, double u) {
  return ruin_functional(model, psi,
                         {FunctionalKind::time_to_ruin, order, u});
}

inline double deficit_moment(const RiskModel& model, const PsiEvaluator& psi,
                             int order, double u) {
  return ruin_functional(model, psi,
                         {FunctionalKind::deficit_at_ruin, order, u});
}

inline double surplus_moment(const RiskModel& model, const PsiEvaluator& psi,
                             int order, double u) {
  return ruin_functional(model, psi,
                         {FunctionalKind::surplus_before_ruin, order, u});
}

// The same functional on an already-computed fit.
inline double devylder_functional(const DeVylderFit& fit,
                                  const FunctionalRequest& req) {
  if (req.kind != FunctionalKind::time_to_ruin && req.order > fit.k - 1)
    throw Error("deficit/surplus order must be <= k-1 for an order-k fit");
  PsiEvaluator psi = psi_exact(fit.fitted);
  return ruin_functional(fit.fitted, psi, req);
}

inline double devylder_functional(const RiskModel& model, int k,
                                  FitFamily family,
                                  const FunctionalRequest& req) {
  return devylder_functional(devylder_fit(model, k, family), req);
}

inline double devylder_functional(const RiskModel& model, int k,
                                  const FunctionalRequest& req) {
  return devylder_functional(devylder_fit(model, k), req);
}

}  // namespace ruinlab
