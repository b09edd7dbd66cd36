#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgbd/errors.hpp"
#include "sgbd/estimators.hpp"
#include "sgbd/gradients.hpp"
#include "sgbd/matrix.hpp"
#include "sgbd/rng.hpp"

namespace sgbd {

enum class Variant {
  exact_barker,
  v_sgbd,
  c_sgbd,
  e_sgbd,
  exact_ula,
  v_sgld,
  c_sgld,
  e_sgld,
};

inline bool is_barker(Variant v) {
  return v == Variant::exact_barker || v == Variant::v_sgbd || v == Variant::c_sgbd ||
         v == Variant::e_sgbd;
}

inline bool is_exact_variant(Variant v) {
  return v == Variant::exact_barker || v == Variant::exact_ula;
}

/// Noise-handling level shared by both kernel families.
inline FlipEstimator estimator_of(Variant v) {
  switch (v) {
    case Variant::c_sgbd:
    case Variant::c_sgld:
      return FlipEstimator::corrected;
    case Variant::e_sgbd:
    case Variant::e_sgld:
      return FlipEstimator::extreme;
    default:
      return FlipEstimator::vanilla;
  }
}

struct SamplerConfig {
  Variant variant = Variant::exact_barker;
  double step = 0.1;            // sigma
  std::size_t batch_size = 0;   // 0 when the gradient source is not a minibatch
  double beta = 0.1;            // EMA weight of the noise-scale tracker
  TauMode tau_mode = TauMode::estimator_scaled;
  bool with_replacement = false;
  std::size_t burn_in = 0;      // leading steps excluded from the recorded samples
  std::size_t iters = 1;        // recorded samples
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> tau0;  // fixed noise scales (override sources)
  double divergence_limit = 1e12;
};

/// Everything one transition needs and produces: the current location, the
/// per-coordinate noise-scale estimates, the iteration counter driving the
/// stream splits, and the chain's keyed stream source.
struct ChainState {
  std::vector<double> theta;
  std::vector<double> tau_hat;
  std::uint64_t iter = 0;
  RngSeq rng;
  bool tau_fixed = false;  // tau_hat pinned by config, never updated
};

struct ChainOutput {
  Matrix samples;    // iters x d (fewer rows if the chain diverged)
  Matrix tau_trace;  // same shape; zeros for variants without a tracked scale
  bool diverged = false;
  std::size_t diverged_at = 0;        // step index of the first bad state
  std::vector<double> last_state;     // last finite theta
  std::uint64_t seed = 0;
  SamplerConfig config;
  double wall_seconds = 0.0;
};

/// Variance of the artificial noise in the corrected Langevin kernel:
/// max(0, sigma^2 - tau^2 * sigma^4 / 4). Exactly zero from tau = 2/sigma on.
inline double langevin_noise_var(double step, double tau) {
  const double s2 = step * step;
  return std::max(0.0, s2 - tau * tau * s2 * s2 * 0.25);
}

/// One signed Barker increment: draws w ~ N(sigma, (0.1 sigma)^2) (the
/// one-sided form of the bimodal reference distribution, equivalent by
/// symmetry), keeps its sign with the estimator's flipping probability and
/// flips it otherwise. Gradients only steer the sign; |w| never depends on them.
inline double barker_increment(double grad, double tau, double step,
                               FlipEstimator estimator, RngStream& rng) {
  const double w = step + 0.1 * step * rng.normal();
  const double p = apply_flip_estimator(estimator, grad, w, tau);
  return rng.uniform() < p ? w : -w;
}

namespace detail {

inline bool state_ok(std::span<const double> theta, double limit) {
  for (double v : theta) {
    if (!std::isfinite(v) || std::abs(v) > limit) return false;
  }
  return true;
}

/// Shared front half of a transition: one gradient draw, then the
/// noise-scale refresh for corrected variants (batch statistics through the
/// EMA tracker, or the source's known scale).
template <class Source>
void refresh_gradient(ChainState& state, Source& source, const SamplerConfig& cfg,
                      SourceDraw& buf) {
  source.draw(state.theta, state.rng, state.iter, buf);
  if (estimator_of(cfg.variant) != FlipEstimator::corrected || state.tau_fixed) {
    return;
  }
  if (buf.has_batch_stats) {
    TauTracker tracker{cfg.beta, cfg.tau_mode, std::move(state.tau_hat)};
    update_tau(tracker, buf.per_datum, buf.n_data);
    state.tau_hat = std::move(tracker.tau_hat);
  } else if (!buf.known_tau.empty()) {
    state.tau_hat = buf.known_tau;
  }
}

}  // namespace detail

/// One Barker-family transition: per coordinate, draw an increment, keep or
/// flip its sign with the variant's flipping probability, move. The noise
/// scale is refreshed from the batch before any kernel draw.
template <class Source>
void sgbd_step(ChainState& state, Source& source, const SamplerConfig& cfg,
               SourceDraw& buf) {
  if (!is_barker(cfg.variant)) throw ConfigError("sgbd_step: not a Barker variant");
  detail::refresh_gradient(state, source, cfg, buf);
  const FlipEstimator level = estimator_of(cfg.variant);
  for (std::size_t j = 0; j < state.theta.size(); ++j) {
    RngStream ks = state.rng.stream(StreamUse::kernel, state.iter, j);
    state.theta[j] += barker_increment(buf.grad[j], state.tau_hat[j], cfg.step, level, ks);
  }
  ++state.iter;
}

/// One Langevin-family transition: drift by (sigma^2/2) * gradient plus
/// artificial noise whose variance depends on the variant (sigma^2 for the
/// vanilla kernel, max(0, sigma^2 - tau^2 sigma^4/4) for the corrected one,
/// none for the extreme one, which is plain stochastic gradient descent).
template <class Source>
void sgld_step(ChainState& state, Source& source, const SamplerConfig& cfg,
               SourceDraw& buf) {
  if (is_barker(cfg.variant)) throw ConfigError("sgld_step: not a Langevin variant");
  detail::refresh_gradient(state, source, cfg, buf);
  const FlipEstimator level = estimator_of(cfg.variant);
  const double s2 = cfg.step * cfg.step;
  for (std::size_t j = 0; j < state.theta.size(); ++j) {
    RngStream ks = state.rng.stream(StreamUse::kernel, state.iter, j);
    double var = 0.0;
    switch (level) {
      case FlipEstimator::vanilla:
        var = s2;
        break;
      case FlipEstimator::corrected:
        var = langevin_noise_var(cfg.step, state.tau_hat[j]);
        break;
      case FlipEstimator::extreme:
        var = 0.0;
        break;
    }
    const double eps = var > 0.0 ? std::sqrt(var) * ks.normal() : 0.0;
    state.theta[j] += 0.5 * s2 * buf.grad[j] + eps;
  }
  ++state.iter;
}

/// Initial chain state: explicit tau0 pins the noise scales for the whole
/// run; otherwise corrected variants on a minibatch source seed them from one
/// warm-up batch (a single EMA step with weight 1).
template <class Source>
ChainState init_chain_state(Source& source, const SamplerConfig& cfg,
                            std::span<const double> theta0) {
  const std::size_t d = source.dim();
  ChainState state{std::vector<double>(theta0.begin(), theta0.end()),
                   std::vector<double>(d, 0.0), 0, RngSeq(cfg.seed), false};
  if (cfg.tau0) {
    if (cfg.tau0->size() != d) throw ConfigError("tau0 has wrong dimension");
    state.tau_hat = *cfg.tau0;
    state.tau_fixed = true;
  } else if (estimator_of(cfg.variant) == FlipEstimator::corrected &&
             source.tracks_tau()) {
    SourceDraw warm;
    source.draw(state.theta, state.rng, kWarmupIter, warm);
    TauTracker tracker{1.0, cfg.tau_mode, std::vector<double>(d, 0.0)};
    update_tau(tracker, warm.per_datum, warm.n_data);
    state.tau_hat = std::move(tracker.tau_hat);
  }
  return state;
}

/// Runs burn_in + iters transitions from theta0, recording every post-burn-in
/// state. Bit-reproducible for fixed (seed, config, theta0). A non-finite or
/// runaway state stops the chain and flags the output instead of throwing:
/// heavy-tailed noise genuinely produces such runs and the harness wants them
/// recorded.
template <class Source>
ChainOutput run_chain(Source& source, const SamplerConfig& cfg,
                      std::span<const double> theta0) {
  const std::size_t d = source.dim();
  if (!(cfg.step > 0.0)) throw ConfigError("run_chain: step must be > 0");
  if (cfg.iters < 1) throw ConfigError("run_chain: iters must be >= 1");
  if (theta0.size() != d) throw ConfigError("run_chain: theta0 has wrong dimension");

  const auto t0 = std::chrono::steady_clock::now();
  const bool barker = is_barker(cfg.variant);
  const bool corrected = estimator_of(cfg.variant) == FlipEstimator::corrected;
  ChainState state = init_chain_state(source, cfg, theta0);
  const std::vector<double> zeros(d, 0.0);

  ChainOutput out;
  out.samples.resize(0, d);
  out.samples.reserve_rows(cfg.iters);
  out.tau_trace.resize(0, d);
  out.tau_trace.reserve_rows(cfg.iters);
  out.seed = cfg.seed;
  out.config = cfg;

  SourceDraw buf;
  const std::size_t total = cfg.burn_in + cfg.iters;
  for (std::size_t t = 0; t < total; ++t) {
    if (barker) {
      sgbd_step(state, source, cfg, buf);
    } else {
      sgld_step(state, source, cfg, buf);
    }
    if (!detail::state_ok(state.theta, cfg.divergence_limit)) {
      out.diverged = true;
      out.diverged_at = t;
      break;
    }
    out.last_state = state.theta;
    if (t >= cfg.burn_in) {
      out.samples.push_row(state.theta);
      out.tau_trace.push_row(corrected ? std::span<const double>(state.tau_hat)
                                       : std::span<const double>(zeros));
    }
  }

  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace sgbd
