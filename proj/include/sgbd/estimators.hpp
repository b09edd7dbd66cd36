#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "sgbd/errors.hpp"
#include "sgbd/math.hpp"
#include "sgbd/rng.hpp"

namespace sgbd {

/// Scale matching the logistic CDF to the normal CDF: max_x |F(x) - Phi(x/1.702)|
/// is below 0.0095, which is what makes the shrinkage algebra below tractable.
inline constexpr double kLogisticScale = 1.702;

enum class NoiseLaw { gaussian, laplace, cauchy };
enum class FlipEstimator { vanilla, corrected, extreme };

namespace detail {
inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::domain_error(std::string("non-finite ") + what);
  }
}
}  // namespace detail

/// Probability of keeping the sign of a proposed increment `incr` given the
/// gradient component `grad`: sigmoid(incr * grad). Exactly 0.5 when the
/// product is zero, strictly inside (0,1), no overflow at any magnitude.
inline double flip_prob(double grad, double incr) {
  detail::require_finite(grad, "gradient");
  detail::require_finite(incr, "increment");
  return sigmoid(incr * grad);
}

/// Multiplicative attenuation of the effective gradient under centered
/// gaussian gradient noise of scale `noise_scale`:
/// 1.702 / sqrt(1.702^2 + incr^2 * noise_scale^2). Equals 1 iff the product
/// incr*noise_scale vanishes and decreases strictly in |incr|*noise_scale.
inline double shrink_factor(double incr, double noise_scale) {
  detail::require_finite(incr, "increment");
  if (!(noise_scale >= 0.0)) {
    throw std::domain_error("shrink_factor: noise_scale must be >= 0");
  }
  return kLogisticScale / std::hypot(kLogisticScale, incr * noise_scale);
}

/// Sign-indicator flipping probability: 1 if grad_hat*incr > 0, 0 if < 0,
/// 0.5 at the tie so that the estimator stays skew-symmetric.
inline double extreme_flip_prob(double grad_hat, double incr) {
  detail::require_finite(grad_hat, "gradient");
  detail::require_finite(incr, "increment");
  const double s = grad_hat * incr;
  if (s > 0.0) return 1.0;
  if (s < 0.0) return 0.0;
  return 0.5;
}

/// Noise-aware flipping probability: inflates the stochastic gradient by
/// 1.702/sqrt(1.702^2 - noise_scale^2*incr^2) while |incr| < 1.702/noise_scale,
/// which undoes the gaussian shrinkage in expectation; beyond that threshold
/// (where the inflation diverges) it falls back to the sign indicator.
/// The switch happens slightly early, when 1.702^2 - (incr*noise_scale)^2
/// drops below 1e-12 relative, since the indicator is the limit anyway.
inline double corrected_flip_prob(double grad_hat, double incr, double noise_scale) {
  detail::require_finite(grad_hat, "gradient");
  detail::require_finite(incr, "increment");
  if (!(noise_scale >= 0.0)) {
    throw std::domain_error("corrected_flip_prob: noise_scale must be >= 0");
  }
  if (noise_scale == 0.0) return flip_prob(grad_hat, incr);

  const double q = noise_scale * std::abs(incr);
  const double gap = (kLogisticScale - q) * (kLogisticScale + q);
  if (!(gap > 1e-12 * kLogisticScale * kLogisticScale)) {
    return extreme_flip_prob(grad_hat, incr);
  }
  const double factor = kLogisticScale / std::sqrt(gap);
  return sigmoid(incr * grad_hat * factor);
}

inline double apply_flip_estimator(FlipEstimator est, double grad_hat, double incr,
                                   double noise_scale) {
  switch (est) {
    case FlipEstimator::vanilla:
      return flip_prob(grad_hat, incr);
    case FlipEstimator::corrected:
      return corrected_flip_prob(grad_hat, incr, noise_scale);
    case FlipEstimator::extreme:
      return extreme_flip_prob(grad_hat, incr);
  }
  throw ConfigError("unknown flip estimator");
}

/// Largest gaussian noise scale at which the flipping probability can still
/// be debiased exactly for this (grad, incr) pair:
/// |grad / Phi^-1(flip_prob(grad, incr))|, +inf when grad*incr = 0 (callers
/// compare noise levels against the result, so the sentinel is the useful
/// value there).
inline double breaking_point(double grad, double incr) {
  detail::require_finite(grad, "gradient");
  detail::require_finite(incr, "increment");
  if (grad * incr == 0.0) return std::numeric_limits<double>::infinity();
  const double q = inv_normal_cdf(flip_prob(grad, incr));
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(grad / q);
}

/// Infimum of breaking_point over all gradients: 4*phi(0)/|incr|.
inline double noise_tolerance(double incr) {
  detail::require_finite(incr, "increment");
  if (incr == 0.0) {
    throw std::domain_error("noise_tolerance: increment must be nonzero");
  }
  return 4.0 * kNormalPdf0 / std::abs(incr);
}

/// One draw from a symmetric zero-centered law. `scale` is the law's natural
/// scale parameter: the standard deviation for gaussian, the classical scale
/// b for laplace, gamma for cauchy.
inline double sample_noise(NoiseLaw law, double scale, RngStream& rng) {
  switch (law) {
    case NoiseLaw::gaussian:
      return scale * rng.normal();
    case NoiseLaw::laplace: {
      const double u = rng.uniform();
      return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
    }
    case NoiseLaw::cauchy:
      return scale * std::tan(3.14159265358979323846 * (rng.uniform() - 0.5));
  }
  throw ConfigError("unknown noise law");
}

struct McFlipResult {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo mean and standard error of a flipping-probability estimator
/// applied to grad + eta, eta iid from the chosen symmetric law. Deterministic
/// for a given seed. With noise_scale = 0 the estimator value is returned
/// exactly with zero standard error.
inline McFlipResult mc_expected_flip(double grad, double incr, double noise_scale,
                                     NoiseLaw law, FlipEstimator estimator,
                                     std::size_t draws, std::uint64_t seed) {
  detail::require_finite(grad, "gradient");
  detail::require_finite(incr, "increment");
  if (!(noise_scale >= 0.0)) {
    throw std::domain_error("mc_expected_flip: noise_scale must be >= 0");
  }
  if (draws < 1) throw ConfigError("mc_expected_flip: draws must be >= 1");

  if (noise_scale == 0.0) {
    return {apply_flip_estimator(estimator, grad, incr, noise_scale), 0.0};
  }

  RngStream rng = RngSeq(seed).stream(StreamUse::mc);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const double v =
        apply_flip_estimator(estimator, grad + sample_noise(law, noise_scale, rng),
                             incr, noise_scale);
    const double delta = v - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (v - mean);
  }
  double se = 0.0;
  if (draws > 1) {
    se = std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws));
  }
  return {mean, se};
}

}  // namespace sgbd
