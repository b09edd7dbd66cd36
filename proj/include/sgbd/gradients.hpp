#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sgbd/errors.hpp"
#include "sgbd/estimators.hpp"
#include "sgbd/matrix.hpp"
#include "sgbd/rng.hpp"

namespace sgbd {

/// A differentiable log-density split into n_data() per-datum components whose
/// per-coordinate gradients sum to the full gradient. Targets without data
/// (toy densities) expose a single component equal to the full gradient.
template <class M>
concept TargetModel = requires(const M& m, std::span<const double> theta,
                               std::span<double> out, std::size_t i) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.n_data() } -> std::convertible_to<std::size_t>;
  m.per_datum_grad(i, theta, out);
  m.full_grad(theta, out);
  { m.log_density(theta) } -> std::convertible_to<double>;
};

struct GradientEstimate {
  std::vector<double> value;        // estimated full-gradient vector
  std::vector<double> noise_scale;  // per-coordinate noise scale, 0 for exact sources
};

/// n indices uniform over {0..n_data-1}; the default without-replacement mode
/// uses a partial Fisher-Yates shuffle over a caller-supplied pool.
inline std::vector<std::size_t> draw_batch(std::size_t n_data, std::size_t n,
                                           RngStream& rng, bool with_replacement = false) {
  if (n < 1) throw ConfigError("draw_batch: batch size must be >= 1");
  std::vector<std::size_t> out(n);
  if (with_replacement) {
    for (auto& idx : out) idx = rng.below(n_data);
    return out;
  }
  if (n > n_data) {
    throw ConfigError("draw_batch: batch size exceeds data size without replacement");
  }
  std::vector<std::size_t> pool(n_data);
  for (std::size_t i = 0; i < n_data; ++i) pool[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(n_data - i);
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
  return out;
}

/// (N/n) * sum of per-datum gradients over the batch. The noise_scale field is
/// left at zero; tracking it is the caller's business.
template <TargetModel M>
GradientEstimate minibatch_gradient(const M& model, std::span<const double> theta,
                                    std::span<const std::size_t> batch) {
  if (batch.empty()) throw ConfigError("minibatch_gradient: empty batch");
  const std::size_t d = model.dim();
  GradientEstimate est;
  est.value.assign(d, 0.0);
  est.noise_scale.assign(d, 0.0);
  std::vector<double> g(d);
  for (std::size_t i : batch) {
    model.per_datum_grad(i, theta, g);
    for (std::size_t j = 0; j < d; ++j) est.value[j] += g[j];
  }
  const double scale = static_cast<double>(model.n_data()) / static_cast<double>(batch.size());
  for (auto& v : est.value) v *= scale;
  return est;
}

enum class TauMode { paper_literal, estimator_scaled };

/// Exponential moving average of the per-coordinate gradient noise scale.
/// paper_literal feeds the raw per-datum sample standard deviation into the
/// EMA; estimator_scaled multiplies it by N/sqrt(n) first, matching the
/// standard deviation of the (N/n)-scaled minibatch gradient estimator that
/// the corrected flip probability actually sees.
struct TauTracker {
  double beta = 0.1;
  TauMode mode = TauMode::estimator_scaled;
  std::vector<double> tau_hat;
};

/// One EMA step from a batch of per-datum gradients (rows = batch members).
inline void update_tau(TauTracker& tracker, const Matrix& per_datum, std::size_t n_data) {
  const std::size_t n = per_datum.rows();
  const std::size_t d = per_datum.cols();
  if (n < 2) throw ConfigError("update_tau: need at least 2 batch members");
  if (tracker.tau_hat.size() != d) tracker.tau_hat.assign(d, 0.0);
  const double mult = tracker.mode == TauMode::estimator_scaled
                          ? static_cast<double>(n_data) / std::sqrt(static_cast<double>(n))
                          : 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += per_datum(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dev = per_datum(i, j) - mean;
      ss += dev * dev;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    tracker.tau_hat[j] =
        (1.0 - tracker.beta) * tracker.tau_hat[j] + tracker.beta * mult * sd;
  }
}

/// Symmetric noise added to exact gradients in the toy studies. The scale is
/// the law's natural scale parameter (sd / Laplace b / Cauchy gamma); for
/// Cauchy it is reported as-is even though no variance exists.
struct NoiseInjector {
  NoiseLaw law = NoiseLaw::gaussian;
  double scale = 0.0;
};

template <TargetModel M>
GradientEstimate noisy_exact_gradient(const M& model, std::span<const double> theta,
                                      const NoiseInjector& injector, RngStream& rng) {
  if (!(injector.scale >= 0.0)) {
    throw std::domain_error("noisy_exact_gradient: scale must be >= 0");
  }
  const std::size_t d = model.dim();
  GradientEstimate est;
  est.value.resize(d);
  model.full_grad(theta, est.value);
  est.noise_scale.assign(d, injector.scale);
  if (injector.scale > 0.0) {
    for (std::size_t j = 0; j < d; ++j) {
      est.value[j] += sample_noise(injector.law, injector.scale, rng);
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// Gradient sources driving the samplers. A source knows how to turn the chain
// rng plus an iteration index into one gradient estimate; each randomness
// consumer sits on its own (purpose, iteration, coordinate) stream so that
// sampler variants sharing a seed share every draw they have in common.
// ---------------------------------------------------------------------------

struct SourceDraw {
  std::vector<double> grad;
  Matrix per_datum;               // n x d, filled by minibatch sources
  bool has_batch_stats = false;
  std::size_t n_data = 0;
  std::vector<double> known_tau;  // filled by injected-noise / exact sources
};

inline constexpr std::uint64_t kWarmupIter = ~std::uint64_t{0};

template <TargetModel M>
class ExactGradientSource {
 public:
  explicit ExactGradientSource(const M& model) : model_(&model) {}

  std::size_t dim() const { return model_->dim(); }
  bool tracks_tau() const { return false; }

  void draw(std::span<const double> theta, const RngSeq&, std::uint64_t,
            SourceDraw& out) const {
    out.grad.resize(dim());
    model_->full_grad(theta, out.grad);
    out.has_batch_stats = false;
    out.known_tau.assign(dim(), 0.0);
  }

 private:
  const M* model_;
};

template <TargetModel M>
class InjectedNoiseSource {
 public:
  InjectedNoiseSource(const M& model, NoiseInjector injector)
      : model_(&model), injector_(injector) {}

  std::size_t dim() const { return model_->dim(); }
  bool tracks_tau() const { return false; }

  void draw(std::span<const double> theta, const RngSeq& rng, std::uint64_t iter,
            SourceDraw& out) const {
    const std::size_t d = dim();
    out.grad.resize(d);
    model_->full_grad(theta, out.grad);
    out.has_batch_stats = false;
    out.known_tau.assign(d, injector_.scale);
    if (injector_.scale > 0.0) {
      for (std::size_t j = 0; j < d; ++j) {
        RngStream s = rng.stream(StreamUse::grad_noise, iter, j);
        out.grad[j] += sample_noise(injector_.law, injector_.scale, s);
      }
    }
  }

 private:
  const M* model_;
  NoiseInjector injector_;
};

template <TargetModel M>
class MinibatchSource {
 public:
  MinibatchSource(const M& model, std::size_t batch_size, bool with_replacement = false)
      : model_(&model), batch_size_(batch_size), with_replacement_(with_replacement) {
    if (batch_size_ < 1 || (!with_replacement_ && batch_size_ > model_->n_data())) {
      throw ConfigError("MinibatchSource: batch size must lie in [1, N]");
    }
  }

  std::size_t dim() const { return model_->dim(); }
  bool tracks_tau() const { return true; }

  void draw(std::span<const double> theta, const RngSeq& rng, std::uint64_t iter,
            SourceDraw& out) const {
    const std::size_t d = dim();
    const std::size_t n_total = model_->n_data();
    RngStream bs = iter == kWarmupIter ? rng.stream(StreamUse::warmup)
                                       : rng.stream(StreamUse::batch, iter);
    const auto batch = draw_batch(n_total, batch_size_, bs, with_replacement_);

    out.per_datum.resize(batch.size(), d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      model_->per_datum_grad(batch[i], theta, out.per_datum.row(i));
    }
    out.grad.assign(d, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) out.grad[j] += out.per_datum(i, j);
    }
    const double scale = static_cast<double>(n_total) / static_cast<double>(batch.size());
    for (auto& v : out.grad) v *= scale;
    out.has_batch_stats = true;
    out.n_data = n_total;
    out.known_tau.clear();
  }

 private:
  const M* model_;
  std::size_t batch_size_;
  bool with_replacement_;
};

}  // namespace sgbd
