#pragma once

// Independent stochastic oracle. Two estimators:
//  - pk_psi: exact Pollaczeck-Khinchine sampling of the ruin probability
//    (geometric number of integrated-tail ladder heights);
//  - path_functionals: simulation of the surplus process recording the time
//    of ruin, the deficit at ruin, and the surplus just before ruin.
//
// Sampling is inverse-transform throughout, driven by counter-based
// generators keyed by (seed, sample index): every sample owns its own stream,
// so results are bit-identical under any execution schedule and any worker
// count. Samples are accumulated in fixed 4096-sample blocks and the block
// partials reduced in block order.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "ruinlab/claims.hpp"
#include "ruinlab/lundberg.hpp"
#include "ruinlab/risk_model.hpp"

namespace ruinlab {

struct SimConfig {
  long n_samples = 100000;
  std::uint64_t seed = 1;
  int stream_count = 1;  // worker threads; never changes the numbers
  double horizon = 0.0;  // path mode; 0 = default 1e4/(lambda theta)
};

struct SimEstimate {
  double point = 0.0;
  double std_error = 0.0;
  long n_effective = 0;
  long ruin_count = 0;
};

struct PathFunctionalEstimates {
  SimEstimate psi;
  std::array<SimEstimate, 2> time;     // E[T | ruin], E[T^2 | ruin]
  std::array<SimEstimate, 2> deficit;  // |U_T| moments
  std::array<SimEstimate, 2> surplus;  // U_{T-} moments
  bool censor_flag = false;  // horizon censoring may have hidden > 0.1% of ruins
  double horizon = 0.0;      // the horizon actually used
};

namespace detail {

inline std::uint64_t splitmix_fin(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Per-sample stream: key (seed, sample), draws indexed by an internal counter.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t sample)
      : state_(splitmix_fin(seed + 0x9e3779b97f4a7c15ULL * (sample + 1))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix_fin(state_);
  }

  double next_unif() {  // strictly inside (0, 1)
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

inline double sample_exponential(double rate, CounterRng& rng) {
  return -std::log1p(-rng.next_unif()) / rate;
}

// One claim from F.
inline double sample_claim(const ClaimDistribution& dist, CounterRng& rng) {
  if (const auto* e = std::get_if<Exponential>(&dist))
    return sample_exponential(e->rate, rng);
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    double p = rng.next_unif();
    double acc = 0.0;
    size_t pick = m->rates.size() - 1;
    for (size_t l = 0; l < m->weights.size(); ++l) {
      acc += m->weights[l];
      if (p < acc) {
        pick = l;
        break;
      }
    }
    return sample_exponential(m->rates[pick], rng);
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist))
    return g->scale * boost::math::gamma_p_inv(g->shape, rng.next_unif());
  return std::get<Deterministic>(dist).value;
}

// One draw from the integrated-tail law f_I = survival/m1.
inline double sample_integrated_tail(const ClaimDistribution& dist,
                                     CounterRng& rng) {
  if (const auto* e = std::get_if<Exponential>(&dist))
    return sample_exponential(e->rate, rng);
  if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    auto bw = fi_mixture_weights(*m);
    double p = rng.next_unif();
    double acc = 0.0;
    size_t pick = m->rates.size() - 1;
    for (size_t l = 0; l < bw.size(); ++l) {
      acc += bw[l];
      if (p < acc) {
        pick = l;
        break;
      }
    }
    return sample_exponential(m->rates[pick], rng);
  }
  if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    // stationary-excess law: uniform fraction of a size-biased draw,
    // and size-biasing a gamma only bumps its shape
    double sb =
        g->scale * boost::math::gamma_p_inv(g->shape + 1.0, rng.next_unif());
    return sb * rng.next_unif();
  }
  return std::get<Deterministic>(dist).value * rng.next_unif();
}

inline constexpr long kBlockSamples = 4096;

inline void check_sim_config(const SimConfig& cfg) {
  if (cfg.n_samples < 1000) throw Error("simulation needs n_samples >= 1000");
  if (cfg.stream_count < 1) throw Error("simulation needs stream_count >= 1");
  if (cfg.horizon < 0.0) throw Error("simulation horizon must be positive");
}

// Runs fn(partial, lo, hi) over fixed-size sample blocks on `workers`
// threads; partials land in preallocated slots, so the later in-order
// reduction is schedule-independent.
template <typename Partial, typename BlockFn>
std::vector<Partial> run_blocks(long n, int workers, BlockFn&& fn) {
  long nb = (n + kBlockSamples - 1) / kBlockSamples;
  std::vector<Partial> parts(static_cast<size_t>(nb));
  std::atomic<long> next{0};
  auto work = [&] {
    while (true) {
      long b = next.fetch_add(1);
      if (b >= nb) break;
      long lo = b * kBlockSamples;
      long hi = std::min(n, lo + kBlockSamples);
      fn(parts[static_cast<size_t>(b)], lo, hi);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return parts;
}

// Conditional-moment helper: point = sum_x/c with the standard error implied
// by the next power sum (works for the mean with (sum x, sum x^2) and for the
// second moment with (sum x^2, sum x^4)).
inline SimEstimate conditional_estimate(double sum_x, double sum_xx, long c) {
  double cc = static_cast<double>(c);
  double mean = sum_x / cc;
  double var = (c > 1) ? std::max(0.0, (sum_xx - cc * mean * mean) / (cc - 1.0))
                       : 0.0;
  return {mean, std::sqrt(var / cc), c, c};
}

}  // namespace detail

// psi(u) = P(X_1 + ... + X_K > u), K geometric with success theta/(1+theta)
// and X_i ~ f_I; unbiased with binomial standard error.
inline SimEstimate pk_psi(const RiskModel& model, double u,
                          const SimConfig& cfg) {
  detail::check_sim_config(cfg);
  if (u < 0.0) throw Error("simulation needs u >= 0");
  const double logq = std::log(1.0 / (1.0 + model.theta()));
  struct Partial {
    long hits = 0;
  };
  auto parts = detail::run_blocks<Partial>(
      cfg.n_samples, cfg.stream_count, [&](Partial& p, long lo, long hi) {
        for (long i = lo; i < hi; ++i) {
          detail::CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
          long k = static_cast<long>(std::log(rng.next_unif()) / logq);
          double s = 0.0;
          for (long j = 0; j < k && s <= u; ++j)
            s += detail::sample_integrated_tail(model.claims(), rng);
          if (s > u) ++p.hits;
        }
      });
  long hits = 0;
  for (const auto& p : parts) hits += p.hits;
  double n = static_cast<double>(cfg.n_samples);
  double ph = static_cast<double>(hits) / n;
  return {ph, std::sqrt(ph * (1.0 - ph) / n), cfg.n_samples, hits};
}

// Simulates the surplus process at premium rate c: exponential inter-arrival
// times, claims from F. A path ends on ruin, at the horizon, or once the
// surplus has drifted 30/R above its start (future ruin is then at most
// e^{-30} likely; it counts as survival). Censoring mass: each non-ruined
// path contributes the Lundberg bound e^{-R x} at its exit state, and the
// flag trips when the summed mass could hide more than 0.1% of the observed
// ruins.
inline PathFunctionalEstimates path_functionals(const RiskModel& model,
                                                double u,
                                                const SimConfig& cfg) {
  detail::check_sim_config(cfg);
  if (u < 0.0) throw Error("simulation needs u >= 0");
  const double lam = model.lambda();
  const double c = model.premium_rate();
  const double R = adjustment_coefficient(model).R;
  const double horizon =
      cfg.horizon > 0.0 ? cfg.horizon : 1e4 / (lam * model.theta());
  const double kill = u + 30.0 / R;

  struct Partial {
    double s1[3] = {0, 0, 0};  // sums of T, deficit, surplus over ruins
    double s2[3] = {0, 0, 0};  // squares
    double s4[3] = {0, 0, 0};  // fourth powers (se of the second moments)
    double censor_mass = 0.0;
    long ruins = 0;
  };
  auto parts = detail::run_blocks<Partial>(
      cfg.n_samples, cfg.stream_count, [&](Partial& p, long lo, long hi) {
        for (long i = lo; i < hi; ++i) {
          detail::CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
          double t = 0.0, x = u;
          while (true) {
            double dt = detail::sample_exponential(lam, rng);
            if (t + dt > horizon) {
              p.censor_mass += std::exp(-R * x);
              break;
            }
            t += dt;
            x += c * dt;
            if (x >= kill) {
              p.censor_mass += std::exp(-R * x);
              break;
            }
            double loss = detail::sample_claim(model.claims(), rng);
            if (loss > x) {
              double vals[3] = {t, loss - x, x};
              for (int q = 0; q < 3; ++q) {
                double v = vals[q];
                double v2 = v * v;
                p.s1[q] += v;
                p.s2[q] += v2;
                p.s4[q] += v2 * v2;
              }
              ++p.ruins;
              break;
            }
            x -= loss;
          }
        }
      });

  double s1[3] = {0, 0, 0}, s2[3] = {0, 0, 0}, s4[3] = {0, 0, 0};
  double censor_mass = 0.0;
  long ruins = 0;
  for (const auto& p : parts) {
    for (int q = 0; q < 3; ++q) {
      s1[q] += p.s1[q];
      s2[q] += p.s2[q];
      s4[q] += p.s4[q];
    }
    censor_mass += p.censor_mass;
    ruins += p.ruins;
  }
  double nn = static_cast<double>(cfg.n_samples);
  double ph = static_cast<double>(ruins) / nn;
  if (ruins < 100 || ph < 1e-3)
    throw Error(
        "too few ruined paths for conditional estimates; "
        "increase n_samples or decrease u");

  PathFunctionalEstimates out;
  out.psi = {ph, std::sqrt(ph * (1.0 - ph) / nn), cfg.n_samples, ruins};
  std::array<SimEstimate, 2>* slots[3] = {&out.time, &out.deficit,
                                          &out.surplus};
  for (int q = 0; q < 3; ++q) {
    (*slots[q])[0] = detail::conditional_estimate(s1[q], s2[q], ruins);
    (*slots[q])[1] = detail::conditional_estimate(s2[q], s4[q], ruins);
  }
  out.censor_flag = censor_mass > 1e-3 * static_cast<double>(ruins);
  out.horizon = horizon;
  return out;
}

}  // namespace ruinlab
