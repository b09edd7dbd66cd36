#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgbd/diagnostics.hpp"
#include "sgbd/models.hpp"
#include "sgbd/samplers.hpp"
#include "test_support.hpp"

using namespace sgbd;

namespace {

std::vector<double> zeros(std::size_t d) { return std::vector<double>(d, 0.0); }

/// Anti-restoring toy gradient: log-density gradient +theta, so drift-following
/// kernels blow up. Used only to exercise divergence handling.
class ExplodingModel {
 public:
  std::size_t dim() const { return 1; }
  std::size_t n_data() const { return 1; }
  void per_datum_grad(std::size_t, std::span<const double> t, std::span<double> o) const {
    o[0] = t[0];
  }
  void full_grad(std::span<const double> t, std::span<double> o) const { o[0] = t[0]; }
  double log_density(std::span<const double> t) const { return 0.5 * t[0] * t[0]; }
};

}  // namespace

TEST_CASE("barker_increment: saturated gradient locks the sign") {
  RngStream r(1);
  for (int i = 0; i < 2000; ++i) {
    CHECK(barker_increment(1e12, 0.0, 0.5, FlipEstimator::vanilla, r) > 0.0);
  }
}

TEST_CASE("barker_increment: zero gradient flips a fair coin") {
  RngStream r(2);
  const int n = 100000;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    pos += barker_increment(0.0, 0.0, 0.5, FlipEstimator::vanilla, r) > 0.0 ? 1 : 0;
  }
  const double se = 0.5 * std::sqrt(static_cast<double>(n));
  CHECK(std::abs(pos - n / 2) < 3.0 * se);
}

TEST_CASE("barker_increment: empirical keep frequency matches the estimator") {
  // replay the same increment stream to recover each w and its keep probability
  for (auto [grad, tau] : {std::pair{2.0, 0.0}, std::pair{-4.0, 1.5}, std::pair{0.7, 0.4}}) {
    for (FlipEstimator est : {FlipEstimator::vanilla, FlipEstimator::corrected,
                              FlipEstimator::extreme}) {
      const std::uint64_t key = 7700 + static_cast<std::uint64_t>(est) * 13;
      RngStream live(key);
      RngStream replay(key);
      const int n = 60000;
      double keeps = 0.0, expect = 0.0;
      for (int i = 0; i < n; ++i) {
        const double inc = barker_increment(grad, tau, 0.8, est, live);
        const double w = 0.8 + 0.08 * replay.normal();
        replay.uniform();  // consume the flip draw to stay aligned
        keeps += inc > 0.0 ? 1.0 : 0.0;
        expect += apply_flip_estimator(est, grad, w, tau);
      }
      keeps /= n;
      expect /= n;
      const double se = std::sqrt(0.25 / n);
      CHECK(std::abs(keeps - expect) < 3.5 * se);
    }
  }
}

TEST_CASE("increment size is independent of the gradient") {
  // compare |increment| distributions at gradient 0 and 100
  RngStream a(11), b(12);
  const int n = 100000;
  std::vector<double> small(n), large(n);
  for (int i = 0; i < n; ++i) {
    small[i] = std::abs(barker_increment(0.0, 0.0, 0.3, FlipEstimator::vanilla, a));
    large[i] = std::abs(barker_increment(100.0, 0.0, 0.3, FlipEstimator::vanilla, b));
  }
  CHECK(testsup::ks_two_sample_pvalue(small, large) > 0.01);
}

TEST_CASE("langevin_noise_var: corrected variance formula") {
  CHECK(langevin_noise_var(0.1, 10.0) == doctest::Approx(0.0075).epsilon(1e-12));
  CHECK(langevin_noise_var(0.5, 4.0) == 0.0);   // tau = 2/sigma exactly
  CHECK(langevin_noise_var(0.5, 5.0) == 0.0);   // clamped beyond the tolerance
  CHECK(langevin_noise_var(0.5, 0.0) == 0.25);  // vanilla variance
}

TEST_CASE("kernel equivalences are seed-for-seed exact") {
  StdNormalTarget model(3);
  auto data = synth_logreg_data(60, 3, std::vector<double>{0.3, -0.2, 0.1}, 5);
  LogisticRegressionModel logreg(data.x, data.y);

  SamplerConfig base;
  base.step = 0.25;
  base.burn_in = 0;
  base.iters = 1000;
  base.seed = 1234;

  SUBCASE("v-sgbd with zero injected noise equals exact-barker") {
    ExactGradientSource exact(model);
    InjectedNoiseSource noisy(model, {NoiseLaw::gaussian, 0.0});
    SamplerConfig a = base;
    a.variant = Variant::exact_barker;
    SamplerConfig b = base;
    b.variant = Variant::v_sgbd;
    CHECK(run_chain(exact, a, zeros(3)).samples == run_chain(noisy, b, zeros(3)).samples);
  }

  SUBCASE("c-sgbd with tau pinned to zero equals v-sgbd") {
    MinibatchSource s1(logreg, 10), s2(logreg, 10);
    SamplerConfig a = base;
    a.variant = Variant::v_sgbd;
    SamplerConfig b = base;
    b.variant = Variant::c_sgbd;
    b.beta = 0.0;
    b.tau0 = zeros(3);
    CHECK(run_chain(s1, a, zeros(3)).samples == run_chain(s2, b, zeros(3)).samples);
  }

  SUBCASE("c-sgld with tau pinned to zero equals v-sgld") {
    MinibatchSource s1(logreg, 10), s2(logreg, 10);
    SamplerConfig a = base;
    a.variant = Variant::v_sgld;
    SamplerConfig b = base;
    b.variant = Variant::c_sgld;
    b.beta = 0.0;
    b.tau0 = zeros(3);
    CHECK(run_chain(s1, a, zeros(3)).samples == run_chain(s2, b, zeros(3)).samples);
  }

  SUBCASE("e-sgld equals c-sgld at and beyond the noise tolerance") {
    for (double tau : {4.0, 5.0}) {  // 2/sigma = 4 at sigma = 0.5
      InjectedNoiseSource s1(model, {NoiseLaw::gaussian, 1.0});
      InjectedNoiseSource s2(model, {NoiseLaw::gaussian, 1.0});
      SamplerConfig a = base;
      a.step = 0.5;
      a.variant = Variant::e_sgld;
      SamplerConfig b = base;
      b.step = 0.5;
      b.variant = Variant::c_sgld;
      b.tau0 = std::vector<double>(3, tau);
      CHECK(run_chain(s1, a, zeros(3)).samples == run_chain(s2, b, zeros(3)).samples);
    }
  }
}

TEST_CASE("single transitions match the chain runner step for step") {
  StdNormalTarget model(2);
  InjectedNoiseSource src(model, {NoiseLaw::gaussian, 0.7});
  SamplerConfig cfg;
  cfg.variant = Variant::v_sgbd;
  cfg.step = 0.3;
  cfg.burn_in = 0;
  cfg.iters = 5;
  cfg.seed = 99;
  const std::vector<double> theta0{0.4, -0.2};
  const auto out = run_chain(src, cfg, theta0);

  ChainState state = init_chain_state(src, cfg, theta0);
  SourceDraw buf;
  for (std::size_t t = 0; t < 5; ++t) {
    sgbd_step(state, src, cfg, buf);
    CHECK(state.theta[0] == out.samples(t, 0));
    CHECK(state.theta[1] == out.samples(t, 1));
  }
  CHECK(state.iter == 5);

  SamplerConfig lcfg = cfg;
  lcfg.variant = Variant::v_sgld;
  const auto lout = run_chain(src, lcfg, theta0);
  ChainState lstate = init_chain_state(src, lcfg, theta0);
  for (std::size_t t = 0; t < 5; ++t) sgld_step(lstate, src, lcfg, buf);
  CHECK(lstate.theta[0] == lout.samples(4, 0));

  // family mismatch is rejected
  CHECK_THROWS_AS(sgld_step(state, src, cfg, buf), ConfigError);
  CHECK_THROWS_AS(sgbd_step(lstate, src, lcfg, buf), ConfigError);
}

TEST_CASE("one-step law of c-sgld with known noise matches exact-ula") {
  StdNormalTarget model(1);
  const double sigma = 0.5, tau = 1.0;
  const std::vector<double> theta0{1.7};
  const int n = 100000;
  std::vector<double> ula(n), csgld(n);

  for (int i = 0; i < n; ++i) {
    ExactGradientSource exact(model);
    SamplerConfig a;
    a.variant = Variant::exact_ula;
    a.step = sigma;
    a.iters = 1;
    a.seed = 100000u + static_cast<std::uint64_t>(i);
    ula[i] = run_chain(exact, a, theta0).samples(0, 0);

    InjectedNoiseSource noisy(model, {NoiseLaw::gaussian, tau});
    SamplerConfig b;
    b.variant = Variant::c_sgld;
    b.step = sigma;
    b.iters = 1;
    b.seed = 900000u + static_cast<std::uint64_t>(i);
    csgld[i] = run_chain(noisy, b, theta0).samples(0, 0);
  }
  CHECK(testsup::ks_two_sample_pvalue(ula, csgld) > 0.01);
}

TEST_CASE("run_chain: shape, determinism, divergence") {
  StdNormalTarget model(2);
  ExactGradientSource src(model);

  SUBCASE("single iteration records exactly one row") {
    SamplerConfig cfg;
    cfg.variant = Variant::exact_barker;
    cfg.step = 0.3;
    cfg.iters = 1;
    cfg.seed = 9;
    auto out = run_chain(src, cfg, zeros(2));
    CHECK(out.samples.rows() == 1);
    CHECK(out.samples.cols() == 2);
    CHECK((out.samples(0, 0) != 0.0 || out.samples(0, 1) != 0.0));
  }

  SUBCASE("identical seed and config give identical output") {
    SamplerConfig cfg;
    cfg.variant = Variant::v_sgld;
    cfg.step = 0.2;
    cfg.iters = 500;
    cfg.burn_in = 100;
    cfg.seed = 77;
    auto a = run_chain(src, cfg, zeros(2));
    auto b = run_chain(src, cfg, zeros(2));
    CHECK(a.samples == b.samples);
    CHECK(a.tau_trace == b.tau_trace);
  }

  SUBCASE("runaway chain is flagged, not thrown") {
    ExplodingModel bad;
    ExactGradientSource esrc(bad);
    SamplerConfig cfg;
    cfg.variant = Variant::e_sgld;  // pure drift, doubles theta every step
    cfg.step = 2.0;
    cfg.iters = 10000;
    cfg.seed = 3;
    auto out = run_chain(esrc, cfg, std::vector<double>{1.0});
    CHECK(out.diverged);
    CHECK(out.diverged_at < 100);
    CHECK(out.samples.rows() < 100);
    CHECK(std::isfinite(out.last_state[0]));
  }
}

TEST_CASE("exact-barker keeps the standard normal moments at sigma = 0.1") {
  StdNormalTarget model(1);
  ExactGradientSource src(model);
  SamplerConfig cfg;
  cfg.variant = Variant::exact_barker;
  cfg.step = 0.1;
  cfg.burn_in = 100000;
  cfg.iters = 100000;
  cfg.seed = 5;
  auto out = run_chain(src, cfg, zeros(1));
  REQUIRE_FALSE(out.diverged);
  const auto col = out.samples.col(0);
  CHECK(std::abs(testsup::mean_of(col)) < 0.05);
  CHECK(std::abs(testsup::variance_of(col) - 1.0) < 0.1);
}

TEST_CASE("sgbd chain with zero-noise source matches vanilla moments") {
  // v-sgbd on N(0,1) with exact gradients at a moderate step keeps variance near 1
  StdNormalTarget model(1);
  InjectedNoiseSource src(model, {NoiseLaw::gaussian, 0.0});
  SamplerConfig cfg;
  cfg.variant = Variant::v_sgbd;
  cfg.step = 0.1;
  cfg.burn_in = 100000;
  cfg.iters = 100000;
  cfg.seed = 8;
  auto out = run_chain(src, cfg, zeros(1));
  const auto col = out.samples.col(0);
  CHECK(std::abs(testsup::mean_of(col)) < 0.05);
  CHECK(std::abs(testsup::variance_of(col) - 1.0) < 0.1);
}
