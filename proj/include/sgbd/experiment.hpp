#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sgbd/csv.hpp"
#include "sgbd/diagnostics.hpp"
#include "sgbd/errors.hpp"
#include "sgbd/estimators.hpp"
#include "sgbd/gradients.hpp"
#include "sgbd/models.hpp"
#include "sgbd/samplers.hpp"

#ifndef SGBD_BUILD_ID
#define SGBD_BUILD_ID "unknown"
#endif

namespace sgbd {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// String <-> enum maps shared by configs and CSV output
// ---------------------------------------------------------------------------

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::exact_barker: return "exact-barker";
    case Variant::v_sgbd: return "v-sgbd";
    case Variant::c_sgbd: return "c-sgbd";
    case Variant::e_sgbd: return "e-sgbd";
    case Variant::exact_ula: return "exact-ula";
    case Variant::v_sgld: return "v-sgld";
    case Variant::c_sgld: return "c-sgld";
    case Variant::e_sgld: return "e-sgld";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::exact_barker, Variant::v_sgbd, Variant::c_sgbd,
                    Variant::e_sgbd, Variant::exact_ula, Variant::v_sgld,
                    Variant::c_sgld, Variant::e_sgld}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown sampler variant: " + s);
}

inline std::string to_string(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::gaussian: return "gaussian";
    case NoiseLaw::laplace: return "laplace";
    case NoiseLaw::cauchy: return "cauchy";
  }
  return "?";
}

inline NoiseLaw law_from_string(const std::string& s) {
  for (NoiseLaw law : {NoiseLaw::gaussian, NoiseLaw::laplace, NoiseLaw::cauchy}) {
    if (to_string(law) == s) return law;
  }
  throw ConfigError("unknown noise law: " + s);
}

inline TauMode tau_mode_from_string(const std::string& s) {
  if (s == "estimator-scaled") return TauMode::estimator_scaled;
  if (s == "paper-literal") return TauMode::paper_literal;
  throw ConfigError("unknown tau mode: " + s);
}

inline std::string to_string(TauMode m) {
  return m == TauMode::estimator_scaled ? "estimator-scaled" : "paper-literal";
}

// ---------------------------------------------------------------------------
// Strict JSON access helpers: unknown keys rejected, wrong types reported
// ---------------------------------------------------------------------------

namespace cfgdetail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
  }
}

inline const json& need(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(ctx + ": missing key '" + key + "'");
  return *it;
}

template <class T>
T as(const json& j, const std::string& ctx) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + ": wrong value type");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& ctx) {
  return as<T>(need(j, key, ctx), ctx + "." + key);
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return as<T>(*it, ctx + "." + key);
}

}  // namespace cfgdetail

// ---------------------------------------------------------------------------
// Model building
// ---------------------------------------------------------------------------

/// Logistic-regression data import: header row `y,x1..xd`, one observation per
/// line, labels in {0,1}.
inline LogRegData load_logreg_csv(const fs::path& path) {
  CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "y" || t.header.size() < 2) {
    throw ConfigError("logreg csv: expected header y,x1..xd in " + path.string());
  }
  const std::size_t d = t.header.size() - 1;
  LogRegData data;
  data.x.resize(t.rows.size(), d);
  data.y.resize(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != d + 1) throw ConfigError("logreg csv: ragged row");
    data.y[i] = std::stod(t.rows[i][0]);
    if (data.y[i] != 0.0 && data.y[i] != 1.0) {
      throw ConfigError("logreg csv: labels must be 0 or 1");
    }
    for (std::size_t j = 0; j < d; ++j) data.x(i, j) = std::stod(t.rows[i][j + 1]);
  }
  return data;
}

using AnyModel = std::variant<SkewNormalTarget, StdNormalTarget, LogisticRegressionModel>;

struct BuiltModel {
  AnyModel model;
  std::optional<double> target_sd;       // defined for the 1-d toy targets
  std::optional<TruthSpec> analytic;     // analytic moments when available
  Matrix x_test;                         // held-out rows (logreg only)
  std::vector<double> y_test;
};

inline std::size_t model_dim(const BuiltModel& bm) {
  return std::visit([](const auto& m) { return m.dim(); }, bm.model);
}

/// Builds the model described by a `model` config object. `data_seed` feeds
/// synthetic data generation and train/test splitting.
inline BuiltModel build_model(const json& j, std::uint64_t data_seed) {
  using namespace cfgdetail;
  const std::string ctx = "model";
  const auto name = get<std::string>(j, "name", ctx);

  if (name == "skew-normal") {
    check_keys(j, {"name", "alpha"}, ctx);
    const double alpha = get<double>(j, "alpha", ctx);
    SkewNormalTarget m(alpha);
    BuiltModel bm{m, m.sd(), TruthSpec{}, {}, {}};
    bm.analytic->mean = {m.mean()};
    bm.analytic->var = {m.sd() * m.sd()};
    return bm;
  }

  if (name == "std-normal") {
    check_keys(j, {"name", "dim"}, ctx);
    const auto dim = get_or<std::size_t>(j, "dim", 1, ctx);
    StdNormalTarget m(dim);
    BuiltModel bm{m, 1.0, TruthSpec{}, {}, {}};
    bm.analytic->mean.assign(dim, 0.0);
    bm.analytic->var.assign(dim, 1.0);
    bm.analytic->q95.assign(dim, 1.6448536269514722);
    return bm;
  }

  if (name == "logreg") {
    check_keys(j, {"name", "data"}, ctx);
    const json& dj = need(j, "data", ctx);
    check_keys(dj, {"synthetic", "csv", "test_fraction"}, "model.data");

    LogRegData all;
    std::size_t test_n = 0;
    if (dj.contains("synthetic")) {
      const json& sj = dj["synthetic"];
      check_keys(sj,
                 {"n", "d", "theta_true", "test_n", "scale_col", "scale_factor", "seed"},
                 "model.data.synthetic");
      const auto n = get<std::size_t>(sj, "n", "synthetic");
      const auto d = get<std::size_t>(sj, "d", "synthetic");
      test_n = get_or<std::size_t>(sj, "test_n", 0, "synthetic");
      auto theta_true = get<std::vector<double>>(sj, "theta_true", "synthetic");
      if (theta_true.size() != d) {
        throw ConfigError("model.data.synthetic: theta_true length must equal d");
      }
      const auto scale_col = get_or<long>(sj, "scale_col", -1, "synthetic");
      const auto scale_factor = get_or<double>(sj, "scale_factor", 1.0, "synthetic");
      const auto seed = get_or<std::uint64_t>(sj, "seed", data_seed, "synthetic");
      all = synth_logreg_data(n + test_n, d, theta_true, seed, scale_col, scale_factor);
    } else if (dj.contains("csv")) {
      all = load_logreg_csv(get<std::string>(dj, "csv", "model.data"));
      const double frac = get_or<double>(dj, "test_fraction", 0.0, "model.data");
      if (frac < 0.0 || frac >= 1.0) {
        throw ConfigError("model.data.test_fraction must lie in [0,1)");
      }
      test_n = static_cast<std::size_t>(frac * static_cast<double>(all.x.rows()));
    } else {
      throw ConfigError("model.data: need either 'synthetic' or 'csv'");
    }

    const std::size_t n_total = all.x.rows();
    if (test_n >= n_total) throw ConfigError("model.data: test split leaves no training rows");
    const std::size_t n_train = n_total - test_n;
    const std::size_t d = all.x.cols();

    // deterministic shuffle so csv imports get a random split too
    std::vector<std::size_t> order(n_total);
    for (std::size_t i = 0; i < n_total; ++i) order[i] = i;
    RngStream shuffle = RngSeq(data_seed).stream(StreamUse::data, 2);
    for (std::size_t i = n_total - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.below(i + 1)]);
    }

    Matrix x_train(n_train, d), x_test(test_n, d);
    std::vector<double> y_train(n_train), y_test(test_n);
    for (std::size_t i = 0; i < n_train; ++i) {
      for (std::size_t jj = 0; jj < d; ++jj) x_train(i, jj) = all.x(order[i], jj);
      y_train[i] = all.y[order[i]];
    }
    for (std::size_t i = 0; i < test_n; ++i) {
      for (std::size_t jj = 0; jj < d; ++jj) x_test(i, jj) = all.x(order[n_train + i], jj);
      y_test[i] = all.y[order[n_train + i]];
    }

    BuiltModel bm{LogisticRegressionModel(std::move(x_train), std::move(y_train)),
                  std::nullopt, std::nullopt, std::move(x_test), std::move(y_test)};
    return bm;
  }

  throw ConfigError("unknown model name: " + name);
}

// ---------------------------------------------------------------------------
// Sampler + source specification
// ---------------------------------------------------------------------------

struct NoiseSpec {
  NoiseLaw law = NoiseLaw::gaussian;
  double scale = 0.0;
  bool scale_in_sd_units = false;
};

inline NoiseSpec parse_noise(const json& j) {
  using namespace cfgdetail;
  check_keys(j, {"law", "scale", "unit"}, "noise");
  NoiseSpec n;
  n.law = law_from_string(get<std::string>(j, "law", "noise"));
  n.scale = get<double>(j, "scale", "noise");
  if (!(n.scale >= 0.0)) throw ConfigError("noise.scale must be >= 0");
  const auto unit = get_or<std::string>(j, "unit", "absolute", "noise");
  if (unit == "target-sd") {
    n.scale_in_sd_units = true;
  } else if (unit != "absolute") {
    throw ConfigError("noise.unit must be 'absolute' or 'target-sd'");
  }
  return n;
}

/// Sampler config fields shared by every kind. `step_in_sd_units` postpones
/// conversion until the model's sd is known.
struct SamplerSpec {
  SamplerConfig cfg;
  bool step_in_sd_units = false;
};

inline SamplerSpec parse_sampler(const json& j, bool require_variant_and_step = true) {
  using namespace cfgdetail;
  check_keys(j,
             {"variant", "step", "step_unit", "iters", "burn_in", "batch_size", "beta",
              "tau_mode", "replacement", "tau0"},
             "sampler");
  SamplerSpec spec;
  SamplerConfig& c = spec.cfg;
  if (require_variant_and_step) {
    c.variant = variant_from_string(get<std::string>(j, "variant", "sampler"));
    c.step = get<double>(j, "step", "sampler");
    if (!(c.step > 0.0)) throw ConfigError("sampler.step must be > 0");
  } else if (j.contains("variant") || j.contains("step")) {
    throw ConfigError("sampler: 'variant' and 'step' belong to the grid in this kind");
  }
  const auto unit = get_or<std::string>(j, "step_unit", "absolute", "sampler");
  if (unit == "target-sd") {
    spec.step_in_sd_units = true;
  } else if (unit != "absolute") {
    throw ConfigError("sampler.step_unit must be 'absolute' or 'target-sd'");
  }
  c.iters = get<std::size_t>(j, "iters", "sampler");
  if (c.iters < 1) throw ConfigError("sampler.iters must be >= 1");
  c.burn_in = get_or<std::size_t>(j, "burn_in", c.iters / 2, "sampler");
  c.batch_size = get_or<std::size_t>(j, "batch_size", 0, "sampler");
  c.beta = get_or<double>(j, "beta", 0.1, "sampler");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw ConfigError("sampler.beta must lie in [0,1]");
  c.tau_mode =
      tau_mode_from_string(get_or<std::string>(j, "tau_mode", "estimator-scaled", "sampler"));
  c.with_replacement = get_or<bool>(j, "replacement", false, "sampler");
  if (j.contains("tau0")) {
    c.tau0 = as<std::vector<double>>(j["tau0"], "sampler.tau0");
  }
  return spec;
}

/// Instantiates the gradient source implied by (noise?, batch_size) and runs
/// `fn(source)`. Exactly one source kind may apply.
template <class Fn>
void with_source(const BuiltModel& bm, const SamplerConfig& cfg,
                 const std::optional<NoiseSpec>& noise, Fn&& fn) {
  const bool minibatch = cfg.batch_size > 0;
  if (minibatch && noise) {
    throw ConfigError("choose either a minibatch source or injected noise, not both");
  }
  if (is_exact_variant(cfg.variant) && (minibatch || (noise && noise->scale > 0.0))) {
    throw ConfigError("exact sampler variants take exact gradients only");
  }
  std::visit(
      [&](const auto& model) {
        if (minibatch) {
          MinibatchSource src(model, cfg.batch_size, cfg.with_replacement);
          fn(src);
        } else if (noise) {
          double scale = noise->scale;
          if (noise->scale_in_sd_units) {
            if (!bm.target_sd) {
              throw ConfigError("noise.unit 'target-sd' needs a model with analytic sd");
            }
            scale *= *bm.target_sd;
          }
          InjectedNoiseSource src(model, NoiseInjector{noise->law, scale});
          fn(src);
        } else {
          ExactGradientSource src(model);
          fn(src);
        }
      },
      bm.model);
}

inline double resolve_step(const BuiltModel& bm, const SamplerSpec& spec, double raw_step) {
  if (!spec.step_in_sd_units) return raw_step;
  if (!bm.target_sd) {
    throw ConfigError("sampler.step_unit 'target-sd' needs a model with analytic sd");
  }
  return raw_step * *bm.target_sd;
}

inline std::optional<TruthSpec> parse_truth(const json& cfg, const BuiltModel& bm) {
  using namespace cfgdetail;
  if (!cfg.contains("truth")) return std::nullopt;
  const json& t = cfg["truth"];
  if (t.is_string()) {
    if (t.get<std::string>() != "analytic") {
      throw ConfigError("truth: expected \"analytic\" or an object");
    }
    if (!bm.analytic) throw ConfigError("truth: model has no analytic moments");
    return bm.analytic;
  }
  check_keys(t, {"mean", "var", "q95"}, "truth");
  TruthSpec out;
  out.mean = get<std::vector<double>>(t, "mean", "truth");
  out.var = get<std::vector<double>>(t, "var", "truth");
  out.q95 = get_or<std::vector<double>>(t, "q95", {}, "truth");
  if (out.mean.size() != model_dim(bm) || out.var.size() != out.mean.size()) {
    throw ConfigError("truth: mean/var length must equal the model dimension");
  }
  return out;
}

inline std::vector<double> parse_init(const json& cfg, std::size_t dim) {
  using namespace cfgdetail;
  if (!cfg.contains("init")) return std::vector<double>(dim, 0.0);
  auto v = as<std::vector<double>>(cfg["init"], "init");
  if (v.size() != dim) throw ConfigError("init: wrong length");
  return v;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

inline void write_meta(const fs::path& out_dir, const json& config, std::uint64_t seed,
                       double wall_seconds, const std::vector<std::string>& outputs) {
  json meta;
  meta["kind"] = config.at("kind");
  meta["seed"] = seed;
  meta["build"] = SGBD_BUILD_ID;
  meta["wall_seconds"] = wall_seconds;
  meta["outputs"] = outputs;
  meta["config"] = config;
  std::ofstream out(out_dir / "meta.json", std::ios::binary);
  if (!out) throw IoError("cannot write meta.json in " + out_dir.string());
  out << meta.dump(2) << "\n";
}

inline void ensure_out_dir(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());
  // probe writability before any sampling happens
  const fs::path probe = out_dir / ".write_probe";
  {
    std::ofstream f(probe, std::ios::binary);
    if (!f) throw IoError("output directory not writable: " + out_dir.string());
  }
  fs::remove(probe, ec);
}

inline void write_samples_csv(const fs::path& path, const Matrix& m, std::size_t burn_in,
                              const char* value_prefix) {
  CsvWriter w(path);
  std::vector<std::string> head{"iter"};
  for (std::size_t j = 0; j < m.cols(); ++j) {
    head.push_back(std::string(value_prefix) + "_" + std::to_string(j + 1));
  }
  w.header(head);
  std::vector<std::string> fields(m.cols() + 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    fields[0] = std::to_string(burn_in + i + 1);
    for (std::size_t j = 0; j < m.cols(); ++j) fields[j + 1] = csv_num(m(i, j));
    w.row(fields);
  }
  w.flush_checked();
}

inline void write_diagnostics_csv(const fs::path& path, const ChainStats& stats) {
  CsvWriter w(path);
  w.header({"coordinate", "mean", "var", "ess", "q05", "q50", "q95", "bias_mean",
            "bias_var"});
  for (std::size_t j = 0; j < stats.coords.size(); ++j) {
    const auto& c = stats.coords[j];
    w.row({std::to_string(j + 1), csv_num(c.mean), csv_num(c.var), csv_num(c.ess),
           csv_num(c.q05), csv_num(c.q50), csv_num(c.q95), csv_num(c.bias_mean),
           csv_num(c.bias_var)});
  }
  w.flush_checked();
}

// ---------------------------------------------------------------------------
// Experiment kinds
// ---------------------------------------------------------------------------

/// kind = run: one chain -> samples.csv, tau_trace.csv (corrected variants),
/// diagnostics.csv, meta.json. Returns 3 when the chain diverged (partial
/// outputs retained), 0 otherwise.
inline int cmd_run(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg, {"kind", "seed", "model", "noise", "sampler", "init", "truth"}, "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  RngSeq root(seed);
  BuiltModel bm = build_model(need(cfg, "model", "config"), root.child_seed(1001));
  SamplerSpec spec = parse_sampler(need(cfg, "sampler", "config"));
  spec.cfg.step = resolve_step(bm, spec, spec.cfg.step);
  spec.cfg.seed = seed;
  std::optional<NoiseSpec> noise;
  if (cfg.contains("noise")) noise = parse_noise(cfg["noise"]);
  const auto truth = parse_truth(cfg, bm);
  const auto theta0 = parse_init(cfg, model_dim(bm));

  ChainOutput out;
  with_source(bm, spec.cfg, noise,
              [&](auto& src) { out = run_chain(src, spec.cfg, theta0); });

  std::vector<std::string> files{"samples.csv", "diagnostics.csv"};
  write_samples_csv(out_dir / "samples.csv", out.samples, spec.cfg.burn_in, "theta");
  if (estimator_of(spec.cfg.variant) == FlipEstimator::corrected) {
    write_samples_csv(out_dir / "tau_trace.csv", out.tau_trace, spec.cfg.burn_in, "tau");
    files.push_back("tau_trace.csv");
  }
  write_diagnostics_csv(out_dir / "diagnostics.csv",
                        compute_chain_stats(out.samples, truth));

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, files);
  return out.diverged ? 3 : 0;
}

/// kind = curve: Monte Carlo estimator curves over a grid of increments,
/// all three estimators on common noise draws -> estimator_curve.csv.
inline int cmd_curve(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg, {"kind", "seed", "grad", "noise_scale", "z_grid", "laws", "draws"},
             "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  const double grad = get<double>(cfg, "grad", "config");
  const double tau = get<double>(cfg, "noise_scale", "config");
  if (!(tau >= 0.0)) throw ConfigError("noise_scale must be >= 0");
  const json& zj = need(cfg, "z_grid", "config");
  check_keys(zj, {"min", "max", "points"}, "z_grid");
  const double z_min = get<double>(zj, "min", "z_grid");
  const double z_max = get<double>(zj, "max", "z_grid");
  const auto z_points = get<std::size_t>(zj, "points", "z_grid");
  if (z_points < 2 || !(z_max > z_min)) throw ConfigError("z_grid: need points >= 2, max > min");
  const auto draws = get<std::size_t>(cfg, "draws", "config");
  if (draws < 10000) throw ConfigError("draws must be >= 10000");
  auto law_names = get_or<std::vector<std::string>>(cfg, "laws", {"gaussian"}, "config");
  std::vector<NoiseLaw> laws;
  for (const auto& s : law_names) laws.push_back(law_from_string(s));

  RngSeq root(seed);
  CsvWriter w(out_dir / "estimator_curve.csv");
  if (tau > 0.0) {
    w.comment("marker,band_lo," + csv_num(-kLogisticScale / tau));
    w.comment("marker,band_hi," + csv_num(kLogisticScale / tau));
  }
  w.header({"law", "z", "p_true", "e_vanilla", "e_corrected", "e_extreme", "mc_se"});

  for (std::size_t li = 0; li < laws.size(); ++li) {
    for (std::size_t k = 0; k < z_points; ++k) {
      const double z =
          z_min + (z_max - z_min) * static_cast<double>(k) / static_cast<double>(z_points - 1);
      const std::uint64_t point_seed = root.child_seed(li, k);
      const auto ev = mc_expected_flip(grad, z, tau, laws[li], FlipEstimator::vanilla,
                                       draws, point_seed);
      const auto ec = mc_expected_flip(grad, z, tau, laws[li], FlipEstimator::corrected,
                                       draws, point_seed);
      const auto ee = mc_expected_flip(grad, z, tau, laws[li], FlipEstimator::extreme,
                                       draws, point_seed);
      const double se = std::max({ev.std_error, ec.std_error, ee.std_error});
      w.row({to_string(laws[li]), csv_num(z), csv_num(flip_prob(grad, z)),
             csv_num(ev.mean), csv_num(ec.mean), csv_num(ee.mean), csv_num(se)});
    }
  }
  w.flush_checked();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, {"estimator_curve.csv"});
  return 0;
}

namespace expdetail {

struct SweepRow {
  std::string variant;
  double step = 0.0;
  double noise_scale = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  double median_ess = 0.0;
  double mean_bias_mean = std::numeric_limits<double>::quiet_NaN();
  double mean_bias_var = std::numeric_limits<double>::quiet_NaN();
  double rel_bias_mean = std::numeric_limits<double>::quiet_NaN();
  double q95_bias = std::numeric_limits<double>::quiet_NaN();
  double max_abs_theta = 0.0;
  bool diverged = false;
};

/// Runs one sweep point and reduces the chain to a summary row.
inline SweepRow summarize_chain(const ChainOutput& out,
                                const std::optional<TruthSpec>& truth) {
  SweepRow row;
  row.diverged = out.diverged;
  if (out.samples.rows() == 0) return row;
  const auto stats = compute_chain_stats(out.samples, truth);
  row.median_ess = median_ess(stats);
  row.mean = stats.coords[0].mean;
  for (std::size_t i = 0; i < out.samples.rows(); ++i) {
    for (std::size_t j = 0; j < out.samples.cols(); ++j) {
      row.max_abs_theta = std::max(row.max_abs_theta, std::abs(out.samples(i, j)));
    }
  }
  if (truth) {
    double bm = 0.0, bv = 0.0;
    for (const auto& c : stats.coords) {
      bm += c.bias_mean;
      bv += c.bias_var;
    }
    row.mean_bias_mean = bm / static_cast<double>(stats.coords.size());
    row.mean_bias_var = bv / static_cast<double>(stats.coords.size());
    if (truth->mean.size() == 1 && truth->mean[0] != 0.0) {
      row.rel_bias_mean = std::abs(row.mean - truth->mean[0]) / std::abs(truth->mean[0]);
    }
    if (!truth->q95.empty()) {
      row.q95_bias = quantile_bias(out.samples.col(0), 0.95, truth->q95[0]);
    }
  }
  return row;
}

template <class PointFn>
std::vector<SweepRow> run_points_parallel(std::size_t count, PointFn&& fn) {
  std::vector<std::future<SweepRow>> futures;
  futures.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    futures.push_back(std::async(std::launch::async, fn, i));
  }
  std::vector<SweepRow> rows;
  rows.reserve(count);
  for (auto& f : futures) rows.push_back(f.get());
  return rows;
}

}  // namespace expdetail

/// kind = sweep: cartesian grid of (variant, step, noise scale) on one model,
/// one summary row per point -> sweep.csv. Points run in parallel with
/// independently derived seeds.
inline int cmd_sweep(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg,
             {"kind", "seed", "model", "noise", "variants", "steps", "sampler", "init",
              "truth"},
             "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  RngSeq root(seed);
  BuiltModel bm = build_model(need(cfg, "model", "config"), root.child_seed(1001));
  SamplerSpec base = parse_sampler(need(cfg, "sampler", "config"),
                                   /*require_variant_and_step=*/false);

  auto variant_names = get<std::vector<std::string>>(cfg, "variants", "config");
  auto steps = get<std::vector<double>>(cfg, "steps", "config");
  if (variant_names.empty() || steps.empty()) {
    throw ConfigError("sweep: variants and steps must be nonempty");
  }
  std::vector<Variant> variants;
  for (const auto& s : variant_names) variants.push_back(variant_from_string(s));

  std::optional<NoiseLaw> law;
  std::vector<double> noise_scales{std::numeric_limits<double>::quiet_NaN()};
  if (cfg.contains("noise")) {
    const json& nj = cfg["noise"];
    check_keys(nj, {"law", "scales", "unit"}, "noise");
    law = law_from_string(get<std::string>(nj, "law", "noise"));
    noise_scales = get<std::vector<double>>(nj, "scales", "noise");
    const auto unit = get_or<std::string>(nj, "unit", "absolute", "noise");
    if (unit == "target-sd") {
      if (!bm.target_sd) throw ConfigError("noise.unit 'target-sd' needs analytic sd");
      for (auto& s : noise_scales) s *= *bm.target_sd;
    } else if (unit != "absolute") {
      throw ConfigError("noise.unit must be 'absolute' or 'target-sd'");
    }
  }

  const auto truth = parse_truth(cfg, bm);
  const auto theta0 = parse_init(cfg, model_dim(bm));

  struct Point {
    Variant variant;
    double step;
    double noise_scale;  // NaN = no injected noise
  };
  std::vector<Point> points;
  for (Variant v : variants) {
    for (double s : steps) {
      for (double ns : noise_scales) {
        points.push_back({v, resolve_step(bm, base, s), ns});
      }
    }
  }

  auto rows = expdetail::run_points_parallel(points.size(), [&](std::size_t i) {
    const Point& p = points[i];
    SamplerConfig pc = base.cfg;
    pc.variant = p.variant;
    pc.step = p.step;
    pc.seed = root.child_seed(i);
    std::optional<NoiseSpec> noise;
    if (law && !std::isnan(p.noise_scale)) {
      noise = NoiseSpec{*law, p.noise_scale, false};
    }
    ChainOutput out;
    with_source(bm, pc, noise, [&](auto& src) { out = run_chain(src, pc, theta0); });
    auto row = expdetail::summarize_chain(out, truth);
    row.variant = to_string(p.variant);
    row.step = p.step;
    row.noise_scale = p.noise_scale;
    return row;
  });

  CsvWriter w(out_dir / "sweep.csv");
  w.header({"variant", "step", "noise_scale", "median_ess", "mean_bias_mean",
            "mean_bias_var", "q95_bias", "max_abs_theta", "diverged"});
  for (const auto& r : rows) {
    w.row({r.variant, csv_num(r.step), csv_num(r.noise_scale), csv_num(r.median_ess),
           csv_num(r.mean_bias_mean), csv_num(r.mean_bias_var), csv_num(r.q95_bias),
           csv_num(r.max_abs_theta), r.diverged ? "1" : "0"});
  }
  w.flush_checked();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, {"sweep.csv"});
  return 0;
}

/// kind = skew-study: skew-normal targets over a grid of shape parameters,
/// gaussian gradient noise scaled to the target sd, step sizes as multiples of
/// the target sd -> skew_study.csv.
inline int cmd_skew_study(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg,
             {"kind", "seed", "alphas", "variants", "step_mults", "noise_mult", "iters",
              "burn_in"},
             "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  auto alphas = get<std::vector<double>>(cfg, "alphas", "config");
  auto variant_names = get<std::vector<std::string>>(cfg, "variants", "config");
  auto step_mults = get<std::vector<double>>(cfg, "step_mults", "config");
  const double noise_mult = get_or<double>(cfg, "noise_mult", 1.0, "config");
  const auto iters = get<std::size_t>(cfg, "iters", "config");
  const auto burn_in = get_or<std::size_t>(cfg, "burn_in", iters / 2, "config");
  if (alphas.empty() || variant_names.empty() || step_mults.empty()) {
    throw ConfigError("skew-study: alphas, variants and step_mults must be nonempty");
  }
  std::vector<Variant> variants;
  for (const auto& s : variant_names) variants.push_back(variant_from_string(s));

  struct Point {
    double alpha;
    Variant variant;
    double step_mult;
  };
  std::vector<Point> points;
  for (double a : alphas) {
    for (Variant v : variants) {
      for (double m : step_mults) points.push_back({a, v, m});
    }
  }

  RngSeq root(seed);
  auto rows = expdetail::run_points_parallel(points.size(), [&](std::size_t i) {
    const Point& p = points[i];
    SkewNormalTarget model(p.alpha);
    TruthSpec truth;
    truth.mean = {model.mean()};
    truth.var = {model.sd() * model.sd()};

    SamplerConfig pc;
    pc.variant = p.variant;
    pc.step = p.step_mult * model.sd();
    pc.iters = iters;
    pc.burn_in = burn_in;
    pc.seed = root.child_seed(i);

    InjectedNoiseSource src(model, {NoiseLaw::gaussian, noise_mult * model.sd()});
    const std::vector<double> theta0{0.0};
    auto out = run_chain(src, pc, theta0);
    auto row = expdetail::summarize_chain(out, truth);
    row.variant = to_string(p.variant);
    row.step = pc.step;
    row.alpha = p.alpha;
    row.noise_scale = noise_mult * model.sd();
    return row;
  });

  CsvWriter w(out_dir / "skew_study.csv");
  w.header({"alpha", "variant", "step", "noise_scale", "mean", "rel_bias_mean",
            "bias_mean", "bias_var", "ess", "diverged"});
  for (const auto& r : rows) {
    w.row({csv_num(r.alpha), r.variant, csv_num(r.step), csv_num(r.noise_scale),
           csv_num(r.mean), csv_num(r.rel_bias_mean), csv_num(r.mean_bias_mean),
           csv_num(r.mean_bias_var), csv_num(r.median_ess), r.diverged ? "1" : "0"});
  }
  w.flush_checked();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, {"skew_study.csv"});
  return 0;
}

/// kind = heavytail-study: standard normal target, laplace or cauchy gradient
/// noise over a scale grid -> heavytail_study.csv with 95th-quantile biases.
inline int cmd_heavytail_study(const json& cfg, const fs::path& out_dir,
                               std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg,
             {"kind", "seed", "law", "noise_scales", "steps", "variants", "iters",
              "burn_in"},
             "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  const NoiseLaw law = law_from_string(get<std::string>(cfg, "law", "config"));
  auto noise_scales = get<std::vector<double>>(cfg, "noise_scales", "config");
  auto steps = get<std::vector<double>>(cfg, "steps", "config");
  auto variant_names = get<std::vector<std::string>>(cfg, "variants", "config");
  const auto iters = get<std::size_t>(cfg, "iters", "config");
  const auto burn_in = get_or<std::size_t>(cfg, "burn_in", iters / 2, "config");
  std::vector<Variant> variants;
  for (const auto& s : variant_names) variants.push_back(variant_from_string(s));
  if (noise_scales.empty() || steps.empty() || variants.empty()) {
    throw ConfigError("heavytail-study: grids must be nonempty");
  }

  StdNormalTarget model(1);
  TruthSpec truth;
  truth.mean = {0.0};
  truth.var = {1.0};
  truth.q95 = {1.6448536269514722};

  struct Point {
    double noise_scale;
    double step;
    Variant variant;
  };
  std::vector<Point> points;
  for (double ns : noise_scales) {
    for (double s : steps) {
      for (Variant v : variants) points.push_back({ns, s, v});
    }
  }

  RngSeq root(seed);
  auto rows = expdetail::run_points_parallel(points.size(), [&](std::size_t i) {
    const Point& p = points[i];
    SamplerConfig pc;
    pc.variant = p.variant;
    pc.step = p.step;
    pc.iters = iters;
    pc.burn_in = burn_in;
    pc.seed = root.child_seed(i);
    InjectedNoiseSource src(model, {law, p.noise_scale});
    const std::vector<double> theta0{0.0};
    auto out = run_chain(src, pc, theta0);
    auto row = expdetail::summarize_chain(out, truth);
    row.variant = to_string(p.variant);
    row.step = p.step;
    row.noise_scale = p.noise_scale;
    return row;
  });

  CsvWriter w(out_dir / "heavytail_study.csv");
  w.header({"law", "noise_scale", "step", "variant", "q95_bias", "max_abs_theta",
            "median_ess", "diverged"});
  for (const auto& r : rows) {
    w.row({to_string(law), csv_num(r.noise_scale), csv_num(r.step), r.variant,
           csv_num(r.q95_bias), csv_num(r.max_abs_theta), csv_num(r.median_ess),
           r.diverged ? "1" : "0"});
  }
  w.flush_checked();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, {"heavytail_study.csv"});
  return 0;
}

/// kind = logreg-study: minibatch samplers on (synthetic or imported) logistic
/// regression against an exact-gradient reference chain; held-out log-loss
/// curves per configuration plus a summary table.
inline int cmd_logreg_study(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
  using namespace cfgdetail;
  check_keys(cfg,
             {"kind", "seed", "data", "variants", "steps", "batch_size", "beta",
              "tau_mode", "iters", "burn_in", "reference"},
             "config");
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(out_dir);

  RngSeq root(seed);
  json model_json{{"name", "logreg"}, {"data", need(cfg, "data", "config")}};
  BuiltModel bm = build_model(model_json, root.child_seed(1001));
  if (bm.y_test.empty()) {
    throw ConfigError("logreg-study: a nonempty test split is required");
  }

  auto variant_names = get<std::vector<std::string>>(cfg, "variants", "config");
  auto steps = get<std::vector<double>>(cfg, "steps", "config");
  const auto batch_size = get<std::size_t>(cfg, "batch_size", "config");
  const double beta = get_or<double>(cfg, "beta", 0.1, "config");
  const TauMode tau_mode =
      tau_mode_from_string(get_or<std::string>(cfg, "tau_mode", "estimator-scaled", "config"));
  const auto iters = get<std::size_t>(cfg, "iters", "config");
  const auto burn_in = get_or<std::size_t>(cfg, "burn_in", iters / 2, "config");
  if (variant_names.empty() || steps.empty()) {
    throw ConfigError("logreg-study: variants and steps must be nonempty");
  }
  std::vector<Variant> variants;
  for (const auto& s : variant_names) variants.push_back(variant_from_string(s));

  double ref_step = *std::min_element(steps.begin(), steps.end());
  std::size_t ref_iters = iters, ref_burn = burn_in;
  if (cfg.contains("reference")) {
    const json& rj = cfg["reference"];
    check_keys(rj, {"step", "iters", "burn_in"}, "reference");
    ref_step = get_or<double>(rj, "step", ref_step, "reference");
    ref_iters = get_or<std::size_t>(rj, "iters", iters, "reference");
    ref_burn = get_or<std::size_t>(rj, "burn_in", burn_in, "reference");
  }

  const std::size_t d = model_dim(bm);
  const std::vector<double> theta0(d, 0.0);
  const auto& model = std::get<LogisticRegressionModel>(bm.model);

  struct ComboResult {
    std::string name;
    double step;
    double final_ergodic = std::numeric_limits<double>::quiet_NaN();
    double final_sample = std::numeric_limits<double>::quiet_NaN();
    double median_ess = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::vector<double> curve_ergodic, curve_sample;
  };

  struct Point {
    Variant variant;
    double step;
    bool is_reference;
  };
  std::vector<Point> points;
  for (Variant v : variants) {
    for (double s : steps) points.push_back({v, s, false});
  }
  points.push_back({Variant::exact_barker, ref_step, true});

  std::vector<std::future<ComboResult>> futures;
  for (std::size_t i = 0; i < points.size(); ++i) {
    futures.push_back(std::async(std::launch::async, [&, i]() {
      const Point& p = points[i];
      SamplerConfig pc;
      pc.variant = p.variant;
      pc.step = p.step;
      pc.iters = p.is_reference ? ref_iters : iters;
      pc.burn_in = p.is_reference ? ref_burn : burn_in;
      pc.beta = beta;
      pc.tau_mode = tau_mode;
      pc.seed = root.child_seed(i);
      if (!p.is_reference) pc.batch_size = batch_size;

      ComboResult res;
      res.name = p.is_reference ? "reference" : to_string(p.variant);
      res.step = p.step;
      ChainOutput out;
      if (p.is_reference) {
        ExactGradientSource src(model);
        out = run_chain(src, pc, theta0);
      } else {
        MinibatchSource src(model, batch_size);
        out = run_chain(src, pc, theta0);
      }
      res.diverged = out.diverged;
      if (out.samples.rows() > 0) {
        res.curve_ergodic = log_loss(out.samples, bm.x_test, bm.y_test, LogLossMode::ergodic);
        res.curve_sample = log_loss(out.samples, bm.x_test, bm.y_test, LogLossMode::per_sample);
        res.final_ergodic = res.curve_ergodic.back();
        res.final_sample = res.curve_sample.back();
        res.median_ess = median_ess(compute_chain_stats(out.samples));
      }
      return res;
    }));
  }

  std::vector<ComboResult> results;
  for (auto& f : futures) results.push_back(f.get());

  std::vector<std::string> files;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string fname = "logloss_" + r.name + "_s" + std::to_string(i) + ".csv";
    CsvWriter w(out_dir / fname);
    w.header({"iter", "log_loss_ergodic", "log_loss_sample"});
    for (std::size_t t = 0; t < r.curve_ergodic.size(); ++t) {
      w.row({std::to_string(t + 1), csv_num(r.curve_ergodic[t]),
             csv_num(r.curve_sample[t])});
    }
    w.flush_checked();
    files.push_back(fname);
  }

  const double ref_final = results.back().final_ergodic;
  CsvWriter w(out_dir / "summary.csv");
  w.header({"variant", "step", "final_log_loss_ergodic", "final_log_loss_sample",
            "median_ess", "delta_vs_reference", "diverged"});
  for (const auto& r : results) {
    w.row({r.name, csv_num(r.step), csv_num(r.final_ergodic), csv_num(r.final_sample),
           csv_num(r.median_ess), csv_num(r.final_ergodic - ref_final),
           r.diverged ? "1" : "0"});
  }
  w.flush_checked();
  files.push_back("summary.csv");

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_meta(out_dir, cfg, seed, wall, files);
  return 0;
}

// ---------------------------------------------------------------------------
// Top-level dispatch
// ---------------------------------------------------------------------------

/// Which CLI subcommand executes each experiment kind.
inline std::string subcommand_of_kind(const std::string& kind) {
  if (kind == "run" || kind == "logreg-study") return "run";
  if (kind == "sweep" || kind == "skew-study" || kind == "heavytail-study") return "sweep";
  if (kind == "curve") return "curve";
  throw ConfigError("unknown experiment kind: " + kind);
}

/// Parses, validates and executes a config. Returns the process exit code
/// contract: 0 success, 3 chain divergence (run kind). Config and IO problems
/// throw ConfigError / IoError.
inline int run_experiment(const json& cfg, const fs::path& out_dir,
                          std::optional<std::uint64_t> seed_override = {}) {
  using namespace cfgdetail;
  if (!cfg.is_object()) throw ConfigError("config root must be an object");
  const auto kind = get<std::string>(cfg, "kind", "config");
  std::uint64_t seed = get<std::uint64_t>(cfg, "seed", "config");
  if (seed_override) seed = *seed_override;

  json effective = cfg;
  effective["seed"] = seed;

  if (kind == "run") return cmd_run(effective, out_dir, seed);
  if (kind == "curve") return cmd_curve(effective, out_dir, seed);
  if (kind == "sweep") return cmd_sweep(effective, out_dir, seed);
  if (kind == "skew-study") return cmd_skew_study(effective, out_dir, seed);
  if (kind == "heavytail-study") return cmd_heavytail_study(effective, out_dir, seed);
  if (kind == "logreg-study") return cmd_logreg_study(effective, out_dir, seed);
  throw ConfigError("unknown experiment kind: " + kind);
}

inline json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace sgbd
