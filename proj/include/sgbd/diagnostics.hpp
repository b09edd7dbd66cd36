#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sgbd/errors.hpp"
#include "sgbd/math.hpp"
#include "sgbd/matrix.hpp"
#include "sgbd/models.hpp"

namespace sgbd {

/// Effective sample size, T / (1 + 2 sum rho_k), with the autocovariance sum
/// truncated by Geyer's initial monotone positive sequence on lag pairs.
/// The result is clamped to (0, T]; an antithetic series whose raw estimate
/// would exceed T lands on T. A constant series has no defined ESS.
inline double ess(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 10) throw std::domain_error("ess: need at least 10 samples");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
    throw std::domain_error("ess: series is constant");
  }

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  auto gamma = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      s += (x[i] - mean) * (x[i + lag] - mean);
    }
    return s / static_cast<double>(n);
  };

  const double g0 = gamma(0);
  if (!(g0 > 0.0)) throw std::domain_error("ess: series is constant");

  // tau = -g0 + 2 * sum of monotone-decreasing positive pair sums
  double tau = -g0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = gamma(2 * m) + gamma(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }

  const double t = static_cast<double>(n);
  if (!(tau > 0.0)) return t;
  return std::min(t, t * g0 / tau);
}

struct BiasPair {
  double mean_bias = 0.0;
  double var_bias = 0.0;
};

/// First- and second-order standardized biases against known moments:
/// |mean - true_mean| / sqrt(true_var) and |var - true_var| / sqrt(true_var).
/// The second one divides a variance difference by a standard deviation and is
/// therefore scale-dependent; set var_over_variance for the dimensionless form.
inline BiasPair standardized_bias(std::span<const double> x, double true_mean,
                                  double true_var, bool var_over_variance = false) {
  if (!(true_var > 0.0)) throw std::domain_error("standardized_bias: true_var must be > 0");
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  const double sd = std::sqrt(true_var);
  BiasPair out;
  out.mean_bias = std::abs(mean - true_mean) / sd;
  out.var_bias = std::abs(var - true_var) / (var_over_variance ? true_var : sd);
  return out;
}

/// Empirical q-quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::span<const double> x, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("quantile: q must lie in (0,1)");
  if (x.empty()) throw std::domain_error("quantile: empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double h = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
}

inline double quantile_bias(std::span<const double> x, double q, double true_quantile) {
  return empirical_quantile(x, q) - true_quantile;
}

/// Running mean of chain draws, updated in O(d) per step.
class RunningMean {
 public:
  explicit RunningMean(std::size_t d) : mean_(d, 0.0) {}

  void add(std::span<const double> x) {
    ++count_;
    const double w = 1.0 / static_cast<double>(count_);
    for (std::size_t j = 0; j < mean_.size(); ++j) {
      mean_[j] += (x[j] - mean_[j]) * w;
    }
  }

  const std::vector<double>& value() const { return mean_; }
  std::size_t count() const { return count_; }

 private:
  std::vector<double> mean_;
  std::size_t count_ = 0;
};

inline std::vector<double> ergodic_mean(const Matrix& samples, std::size_t upto) {
  if (upto < 1 || upto > samples.rows()) {
    throw std::domain_error("ergodic_mean: row count out of range");
  }
  RunningMean rm(samples.cols());
  for (std::size_t t = 0; t < upto; ++t) rm.add(samples.row(t));
  return rm.value();
}

enum class LogLossMode { per_sample, ergodic };

/// Held-out binary log-loss curve over chain iterations. Ergodic mode averages
/// the per-draw predicted probabilities before taking the loss (running mean,
/// O(|test|) per step); per-sample mode scores each draw on its own.
/// Probabilities are clamped to [1e-12, 1-1e-12] before the logs; saturated
/// point estimates otherwise produce infinities.
inline std::vector<double> log_loss(const Matrix& samples, const Matrix& x_test,
                                    std::span<const double> y_test, LogLossMode mode) {
  if (x_test.rows() == 0 || x_test.rows() != y_test.size()) {
    throw ConfigError("log_loss: empty or mismatched test set");
  }
  const std::size_t t_max = samples.rows();
  const std::size_t n = x_test.rows();
  const std::size_t d = x_test.cols();

  std::vector<double> probs(n, 0.0);
  std::vector<double> curve(t_max);
  for (std::size_t t = 0; t < t_max; ++t) {
    const auto theta = samples.row(t);
    double loss = 0.0;
    const double w = 1.0 / static_cast<double>(t + 1);
    for (std::size_t i = 0; i < n; ++i) {
      double lin = 0.0;
      for (std::size_t j = 0; j < d; ++j) lin += theta[j] * x_test(i, j);
      const double s = sigmoid(lin);
      double p;
      if (mode == LogLossMode::ergodic) {
        probs[i] += (s - probs[i]) * w;
        p = probs[i];
      } else {
        p = s;
      }
      p = std::clamp(p, 1e-12, 1.0 - 1e-12);
      loss -= y_test[i] * std::log(p) + (1.0 - y_test[i]) * std::log1p(-p);
    }
    curve[t] = loss / static_cast<double>(n);
  }
  return curve;
}

struct TruthSpec {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> q95;  // optional, may be empty
};

struct CoordStats {
  double mean = 0.0;
  double var = 0.0;
  double ess = 0.0;  // NaN when undefined
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double bias_mean = 0.0;  // NaN when no truth supplied
  double bias_var = 0.0;
};

struct ChainStats {
  std::vector<CoordStats> coords;
  bool diverged = false;
};

inline ChainStats compute_chain_stats(const Matrix& samples,
                                      const std::optional<TruthSpec>& truth = {}) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ChainStats stats;
  stats.coords.resize(samples.cols());
  for (std::size_t j = 0; j < samples.cols(); ++j) {
    const auto col = samples.col(j);
    CoordStats& c = stats.coords[j];
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    c.mean = mean;
    c.var = col.size() > 1 ? ss / static_cast<double>(col.size() - 1) : 0.0;
    try {
      c.ess = ess(col);
    } catch (const std::domain_error&) {
      c.ess = nan;
    }
    c.q05 = empirical_quantile(col, 0.05);
    c.q50 = empirical_quantile(col, 0.50);
    c.q95 = empirical_quantile(col, 0.95);
    if (truth && j < truth->mean.size()) {
      const auto bp = standardized_bias(col, truth->mean[j], truth->var[j]);
      c.bias_mean = bp.mean_bias;
      c.bias_var = bp.var_bias;
    } else {
      c.bias_mean = nan;
      c.bias_var = nan;
    }
  }
  return stats;
}

inline double median_ess(const ChainStats& stats) {
  std::vector<double> v;
  for (const auto& c : stats.coords) {
    if (std::isfinite(c.ess)) v.push_back(c.ess);
  }
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace sgbd
