#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sgbd/errors.hpp"
#include "sgbd/math.hpp"
#include "sgbd/matrix.hpp"
#include "sgbd/rng.hpp"

namespace sgbd {

/// d(log pi_alpha)/d(theta) for the skew-normal density 2*phi(theta)*Phi(alpha*theta):
/// -theta + alpha * phi(alpha*theta)/Phi(alpha*theta), with the ratio switched
/// to its asymptotic expansion deep in the left tail (see inverse_mills).
inline double skew_normal_log_grad(double theta, double alpha) {
  return -theta + alpha * inverse_mills(alpha * theta);
}

/// Analytic mean and standard deviation of the skew-normal with shape alpha.
inline std::pair<double, double> skew_normal_moments(double alpha) {
  if (!(alpha >= 0.0)) throw std::domain_error("skew_normal_moments: alpha must be >= 0");
  const double kappa = alpha / std::hypot(1.0, alpha);
  const double two_over_pi = 2.0 / 3.14159265358979323846;
  const double mean = std::sqrt(two_over_pi) * kappa;
  const double sd = std::sqrt(1.0 - two_over_pi * kappa * kappa);
  return {mean, sd};
}

/// One-dimensional skew-normal target, the skewness toy study workhorse.
class SkewNormalTarget {
 public:
  explicit SkewNormalTarget(double alpha) : alpha_(alpha) {
    const auto [m, s] = skew_normal_moments(alpha);
    mean_ = m;
    sd_ = s;
  }

  std::size_t dim() const { return 1; }
  std::size_t n_data() const { return 1; }

  void per_datum_grad(std::size_t, std::span<const double> theta,
                      std::span<double> out) const {
    full_grad(theta, out);
  }

  void full_grad(std::span<const double> theta, std::span<double> out) const {
    out[0] = skew_normal_log_grad(theta[0], alpha_);
  }

  double log_density(std::span<const double> theta) const {
    return -0.5 * theta[0] * theta[0] + log_normal_cdf(alpha_ * theta[0]);
  }

  double alpha() const { return alpha_; }
  double mean() const { return mean_; }
  double sd() const { return sd_; }

 private:
  double alpha_;
  double mean_;
  double sd_;
};

/// Isotropic standard normal in d dimensions.
class StdNormalTarget {
 public:
  explicit StdNormalTarget(std::size_t dim = 1) : dim_(dim) {
    if (dim_ < 1) throw ConfigError("StdNormalTarget: dim must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  std::size_t n_data() const { return 1; }

  void per_datum_grad(std::size_t, std::span<const double> theta,
                      std::span<double> out) const {
    full_grad(theta, out);
  }

  void full_grad(std::span<const double> theta, std::span<double> out) const {
    for (std::size_t j = 0; j < dim_; ++j) out[j] = -theta[j];
  }

  double log_density(std::span<const double> theta) const {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += theta[j] * theta[j];
    return -0.5 * s;
  }

 private:
  std::size_t dim_;
};

/// Bayesian logistic regression with a standard normal prior on the weights.
/// The prior is spread across the per-datum components as -theta/N so that the
/// components sum exactly to the full posterior gradient.
class LogisticRegressionModel {
 public:
  LogisticRegressionModel(Matrix x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() != y_.size() || x_.rows() == 0) {
      throw ConfigError("LogisticRegressionModel: X rows must match y length and be nonzero");
    }
  }

  std::size_t dim() const { return x_.cols(); }
  std::size_t n_data() const { return x_.rows(); }

  double predict_prob(std::span<const double> theta, std::size_t i) const {
    double t = 0.0;
    for (std::size_t j = 0; j < x_.cols(); ++j) t += theta[j] * x_(i, j);
    return sigmoid(t);
  }

  void per_datum_grad(std::size_t i, std::span<const double> theta,
                      std::span<double> out) const {
    const double resid = y_[i] - predict_prob(theta, i);
    const double inv_n = 1.0 / static_cast<double>(n_data());
    for (std::size_t j = 0; j < x_.cols(); ++j) {
      out[j] = -theta[j] * inv_n + x_(i, j) * resid;
    }
  }

  void full_grad(std::span<const double> theta, std::span<double> out) const {
    for (std::size_t j = 0; j < x_.cols(); ++j) out[j] = -theta[j];
    for (std::size_t i = 0; i < x_.rows(); ++i) {
      const double resid = y_[i] - predict_prob(theta, i);
      for (std::size_t j = 0; j < x_.cols(); ++j) out[j] += x_(i, j) * resid;
    }
  }

  double log_density(std::span<const double> theta) const {
    double lp = 0.0;
    for (std::size_t j = 0; j < x_.cols(); ++j) lp -= 0.5 * theta[j] * theta[j];
    for (std::size_t i = 0; i < x_.rows(); ++i) {
      double t = 0.0;
      for (std::size_t j = 0; j < x_.cols(); ++j) t += theta[j] * x_(i, j);
      lp += y_[i] * t - log1pexp(t);
    }
    return lp;
  }

  const Matrix& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

 private:
  Matrix x_;
  std::vector<double> y_;
};

struct LogRegData {
  Matrix x;
  std::vector<double> y;
};

/// Synthetic logistic-regression data: standard normal rows (optionally one
/// column rescaled to induce scale heterogeneity in the posterior) and
/// Bernoulli labels from theta_true. Deterministic per seed.
inline LogRegData synth_logreg_data(std::size_t n, std::size_t d,
                                    std::span<const double> theta_true,
                                    std::uint64_t seed, long scale_col = -1,
                                    double scale_factor = 1.0) {
  if (n < 1 || d < 1) throw ConfigError("synth_logreg_data: need n >= 1 and d >= 1");
  if (theta_true.size() != d) {
    throw ConfigError("synth_logreg_data: theta_true length must equal d");
  }
  RngSeq root(seed);
  RngStream xs = root.stream(StreamUse::data, 0);
  RngStream ys = root.stream(StreamUse::data, 1);
  LogRegData out;
  out.x.resize(n, d);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.x(i, j) = xs.normal();
    if (scale_col >= 0 && static_cast<std::size_t>(scale_col) < d) {
      out.x(i, static_cast<std::size_t>(scale_col)) *= scale_factor;
    }
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += theta_true[j] * out.x(i, j);
    out.y[i] = ys.uniform() < sigmoid(t) ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace sgbd
