#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgbd/diagnostics.hpp"
#include "sgbd/rng.hpp"
#include "test_support.hpp"

using namespace sgbd;

TEST_CASE("ess: iid draws score near the sample size") {
  RngStream r(1);
  std::vector<double> x(10000);
  for (auto& v : x) v = r.normal();
  const double e = ess(x);
  CHECK(e / 10000.0 > 0.8);
  CHECK(e / 10000.0 <= 1.0);  // clamped to T
}

TEST_CASE("ess: AR(1) with coefficient 0.9") {
  RngStream r(2);
  const std::size_t n = 100000;
  std::vector<double> x(n);
  double prev = 0.0;
  for (auto& v : x) {
    prev = 0.9 * prev + std::sqrt(1.0 - 0.81) * r.normal();
    v = prev;
  }
  const double expect = static_cast<double>(n) * (1.0 - 0.9) / (1.0 + 0.9);
  CHECK(ess(x) == doctest::Approx(expect).epsilon(0.30));
}

TEST_CASE("ess: antithetic series clamps to T, constants are degenerate") {
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 == 0 ? 1.0 : -1.0;
  CHECK(ess(alt) == 1000.0);

  std::vector<double> flat(1000, 3.14);
  CHECK_THROWS_AS(ess(flat), std::domain_error);
  std::vector<double> tiny{1, 2, 3};
  CHECK_THROWS_AS(ess(tiny), std::domain_error);
}

TEST_CASE("ess: invariant under affine maps") {
  RngStream r(3);
  std::vector<double> x(5000), y(5000);
  double prev = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    prev = 0.5 * prev + r.normal();
    x[i] = prev;
    y[i] = -3.0 * prev + 11.0;
  }
  CHECK(ess(x) == doctest::Approx(ess(y)).epsilon(1e-9));
}

TEST_CASE("standardized_bias: defining cases") {
  std::vector<double> x{-1.0, 1.0};  // mean 0, var 2
  auto exact = standardized_bias(x, 0.0, 2.0);
  CHECK(exact.mean_bias == 0.0);
  CHECK(exact.var_bias == 0.0);

  auto off = standardized_bias(x, std::sqrt(2.0), 2.0);
  CHECK(off.mean_bias == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(standardized_bias(x, 0.0, 0.0), std::domain_error);
}

TEST_CASE("standardized_bias: large iid sample is nearly unbiased") {
  RngStream r(4);
  std::vector<double> x(100000);
  for (auto& v : x) v = 2.0 + 3.0 * r.normal();
  auto b = standardized_bias(x, 2.0, 9.0);
  CHECK(b.mean_bias < 0.02);
  CHECK(b.var_bias < 0.02 * 3.0);  // variance difference over sd carries a sd unit

  auto alt = standardized_bias(x, 2.0, 9.0, /*var_over_variance=*/true);
  CHECK(alt.var_bias < 0.02);
}

TEST_CASE("quantile_bias: translation equivariance and normal oracle") {
  RngStream r(5);
  const std::size_t n = 100000;
  std::vector<double> x(n), shifted(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = r.normal();
    shifted[i] = x[i] + 2.5;
  }
  CHECK(std::abs(quantile_bias(x, 0.95, 1.6449)) < 0.03);
  CHECK(quantile_bias(shifted, 0.95, 1.6449) ==
        doctest::Approx(quantile_bias(x, 0.95, 1.6449) + 2.5).epsilon(1e-12));

  // quantile function evaluated on a uniform grid reproduces itself
  std::vector<double> grid(9999);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = inv_normal_cdf(static_cast<double>(i + 1) / 10000.0);
  }
  CHECK(std::abs(quantile_bias(grid, 0.95, inv_normal_cdf(0.95))) < 1e-3);
}

TEST_CASE("log_loss: closed-form values") {
  Matrix x_test(2, 1);
  x_test(0, 0) = 1000.0;   // saturates the sigmoid -> p = 1
  x_test(1, 0) = -1000.0;  // p = 0
  std::vector<double> y{1.0, 0.0};

  Matrix chain(1, 1);
  chain(0, 0) = 1.0;
  auto perfect = log_loss(chain, x_test, y, LogLossMode::per_sample);
  CHECK(perfect[0] == doctest::Approx(0.0).epsilon(1e-9));

  Matrix zero_chain(3, 1);
  auto half = log_loss(zero_chain, x_test, y, LogLossMode::ergodic);
  for (double v : half) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix empt(0, 1);
  std::vector<double> no_y;
  Matrix xe(0, 1);
  CHECK_THROWS_AS(log_loss(chain, xe, no_y, LogLossMode::ergodic), ConfigError);
}

TEST_CASE("log_loss: ergodic equals per-sample at the first draw") {
  RngStream r(6);
  Matrix x_test(20, 3);
  std::vector<double> y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 3; ++j) x_test(i, j) = r.normal();
    y[i] = r.uniform() < 0.5 ? 0.0 : 1.0;
  }
  Matrix chain(5, 3);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t j = 0; j < 3; ++j) chain(t, j) = r.normal();
  }
  auto erg = log_loss(chain, x_test, y, LogLossMode::ergodic);
  auto per = log_loss(chain, x_test, y, LogLossMode::per_sample);
  CHECK(erg[0] == per[0]);
  CHECK(erg.size() == 5);
}

TEST_CASE("ergodic_mean: incremental matches batch recomputation") {
  RngStream r(7);
  Matrix chain(137, 2);
  for (std::size_t t = 0; t < chain.rows(); ++t) {
    chain(t, 0) = r.normal();
    chain(t, 1) = 10.0 + r.normal();
  }
  auto one = ergodic_mean(chain, 1);
  CHECK(one[0] == chain(0, 0));
  CHECK(one[1] == chain(0, 1));

  for (std::size_t t : {5ul, 57ul, 137ul}) {
    auto inc = ergodic_mean(chain, t);
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < t; ++k) s += chain(k, j);
      CHECK(std::abs(inc[j] - s / static_cast<double>(t)) < 1e-12);
    }
  }

  Matrix constant(50, 1, 4.2);
  CHECK(ergodic_mean(constant, 50)[0] == doctest::Approx(4.2).epsilon(1e-15));
}

TEST_CASE("compute_chain_stats fills biases only when truth is given") {
  RngStream r(8);
  Matrix chain(2000, 2);
  for (std::size_t t = 0; t < chain.rows(); ++t) {
    chain(t, 0) = r.normal();
    chain(t, 1) = 5.0 + 2.0 * r.normal();
  }
  auto bare = compute_chain_stats(chain);
  CHECK(std::isnan(bare.coords[0].bias_mean));
  CHECK(bare.coords[1].mean == doctest::Approx(5.0).epsilon(0.05));
  CHECK(bare.coords[0].ess > 0.0);

  TruthSpec truth;
  truth.mean = {0.0, 5.0};
  truth.var = {1.0, 4.0};
  auto with = compute_chain_stats(chain, truth);
  CHECK(with.coords[0].bias_mean < 0.1);
  CHECK(with.coords[1].bias_var < 0.5);
  CHECK(median_ess(with) > 0.0);
}
