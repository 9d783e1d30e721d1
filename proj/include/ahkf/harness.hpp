#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ahkf/fem.hpp"
#include "ahkf/filters.hpp"
#include "ahkf/io.hpp"
#include "ahkf/mesh.hpp"
#include "ahkf/pod.hpp"
#include "ahkf/priors.hpp"
#include "ahkf/qge.hpp"
#include "ahkf/rng.hpp"

namespace ahkf {

/// Twin-experiment configuration, parsed from a flat key=value file. Every
/// resolved key is echoed into the JSON summary.
struct ExperimentConfig {
  int mesh = 41;
  QgeParams qge;
  std::string filter = "ml";   // enkf | ml | mf | reference-ml | reference-mf |
                               // memoryless-ml | memoryless-mf
  std::string prior = "smooth";  // smooth | invariant
  int prior_modes = 64;
  double prior_jitter = 0.0;
  int n_principal = 16;
  int n_ancillary = 200;
  double eps_r = 1e-3;
  int windows = 100;
  double window_length = 1.0;
  double sigma = 1e-4;
  double spinup = 50.0;
  double archive_length = 20.0;
  std::uint64_t seed = 1;
  int replicates = 4;
  int levels = 1;

  static const std::set<std::string>& filter_kinds() {
    static const std::set<std::string> kinds{"enkf",         "ml",           "mf",
                                             "reference-ml", "reference-mf",
                                             "memoryless-ml", "memoryless-mf"};
    return kinds;
  }

  void validate() const {
    if (!filter_kinds().count(filter))
      throw std::invalid_argument("config: unknown filter '" + filter + "'");
    if (prior != "smooth" && prior != "invariant")
      throw std::invalid_argument("config: unknown prior '" + prior + "'");
    if (mesh < 21 || n_principal < 2 || n_ancillary < 2 || windows < 1 || replicates < 1 ||
        prior_modes < 1)
      throw std::invalid_argument("config: sizes must be positive");
    if (eps_r <= 0.0 || window_length <= 0.0 || sigma < 0.0 || spinup < 0.0 ||
        archive_length < 0.0 || prior_jitter < 0.0)
      throw std::invalid_argument("config: nonpositive scalar parameter");
    if (levels != 1)
      throw std::invalid_argument("config: only the two-level filters run end-to-end");
    if (prior == "invariant" && archive_length <= 0.0)
      throw std::invalid_argument("config: invariant prior needs archive_length > 0");
  }

  json to_json() const {
    return json{{"mesh", mesh},
                {"ro", qge.ro},
                {"re", qge.re},
                {"dt", qge.dt},
                {"newton_tol", qge.newton_tol},
                {"newton_max_iter", qge.newton_max_iter},
                {"filter", filter},
                {"prior", prior},
                {"prior_modes", prior_modes},
                {"prior_jitter", prior_jitter},
                {"n_principal", n_principal},
                {"n_ancillary", n_ancillary},
                {"eps_r", eps_r},
                {"windows", windows},
                {"window_length", window_length},
                {"sigma", sigma},
                {"spinup", spinup},
                {"archive_length", archive_length},
                {"seed", seed},
                {"replicates", replicates},
                {"levels", levels}};
  }

  /// Hash of the truth-determining subset (mesh, dynamics, horizon); filter
  /// settings deliberately excluded so all filters share one cached truth.
  std::uint64_t truth_hash() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d|%.17g|%.17g|%.17g|%.17g|%d|%d|%.17g|%.17g|%.17g",
                  mesh, qge.ro, qge.re, qge.dt, qge.newton_tol, qge.newton_max_iter, windows,
                  window_length, spinup, archive_length);
    return detail::fnv1a(buf);
  }

  std::uint64_t config_hash() const {
    return detail::fnv1a(to_json().dump());
  }
};

inline ExperimentConfig parse_config(const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  auto geti = [](const std::string& v) { return std::stoi(v); };
  auto getd = [](const std::string& v) { return std::stod(v); };
  for (const auto& [key, value] : kv) {
    if (key == "mesh") c.mesh = geti(value);
    else if (key == "ro") c.qge.ro = getd(value);
    else if (key == "re") c.qge.re = getd(value);
    else if (key == "dt") c.qge.dt = getd(value);
    else if (key == "newton_tol") c.qge.newton_tol = getd(value);
    else if (key == "newton_max_iter") c.qge.newton_max_iter = geti(value);
    else if (key == "filter") c.filter = value;
    else if (key == "prior") c.prior = value;
    else if (key == "prior_modes") c.prior_modes = geti(value);
    else if (key == "prior_jitter") c.prior_jitter = getd(value);
    else if (key == "n_principal") c.n_principal = geti(value);
    else if (key == "n_ancillary") c.n_ancillary = geti(value);
    else if (key == "eps_r") c.eps_r = getd(value);
    else if (key == "windows") c.windows = geti(value);
    else if (key == "window_length") c.window_length = getd(value);
    else if (key == "sigma") c.sigma = getd(value);
    else if (key == "spinup") c.spinup = getd(value);
    else if (key == "archive_length") c.archive_length = getd(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "replicates") c.replicates = geti(value);
    else if (key == "levels") c.levels = geti(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_key_value(path));
}

/// Truth trajectory over the assimilation horizon (t0 = end of spin-up, one
/// state per sub-step) plus the attractor archive collected afterwards.
struct TruthData {
  Trajectory trajectory;
  InvariantArchive archive;

  int substeps_per_window = 0;

  const Vec& at_window(int k) const {
    return trajectory.states[static_cast<std::size_t>(k) * substeps_per_window];
  }
};

inline TruthData generate_truth(const QgeModel& model, const ExperimentConfig& config,
                                bool with_archive = false) {
  const double dt = model.params().dt;
  Vec w = model.solve_stationary().first;
  if (config.spinup > 0.0) w = model.flow(w, config.spinup).last();

  TruthData truth;
  truth.substeps_per_window = static_cast<int>(std::llround(config.window_length / dt));
  truth.trajectory = model.flow(w, config.windows * config.window_length, config.spinup);

  if (with_archive && config.archive_length > 0.0) {
    Trajectory tail = model.flow(truth.trajectory.last(), config.archive_length,
                                 truth.trajectory.time(truth.trajectory.size() - 1));
    truth.archive.t_start = tail.t0;
    truth.archive.t_end = tail.time(tail.size() - 1);
    truth.archive.snapshots.assign(tail.states.begin() + 1, tail.states.end());
  }
  return truth;
}

struct MeasurementRecord {
  int k = 0;
  Vec data;
  double truth_norm = 0.0;
};

/// Noisy lattice observations of the truth at every window boundary,
/// k = 0..windows, on a stream disjoint from all filter streams.
inline std::vector<MeasurementRecord> generate_measurements(const FemOperators& fem,
                                                            const TruthData& truth,
                                                            const ExperimentConfig& config,
                                                            std::uint64_t replicate) {
  StreamFactory streams{config.seed, replicate};
  std::vector<MeasurementRecord> out;
  out.reserve(config.windows + 1);
  for (int k = 0; k <= config.windows; ++k) {
    const Vec& w_true = truth.at_window(k);
    MeasurementRecord rec;
    rec.k = k;
    rec.data = observe(fem, w_true);
    if (config.sigma > 0.0) {
      RngStream s = streams.make("measurement", 0, static_cast<std::uint64_t>(k));
      rec.data += config.sigma * s.normal_vector(rec.data.size());
    }
    rec.truth_norm = v_norm(fem, w_true);
    out.push_back(std::move(rec));
  }
  return out;
}

struct StepRecord {
  int k = 0;
  double err_pre = 0.0;
  double err_post = 0.0;
  int rom_dim = 0;
  double wall_seconds = 0.0;
};

struct ExperimentRecord {
  std::uint64_t replicate = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline double relative_error(const FemOperators& fem, const std::vector<Vec>& ensemble,
                             const Vec& truth) {
  Vec mean = ensemble_mean(ensemble);
  return v_norm(fem, mean - truth) / v_norm(fem, truth);
}

struct FilterMode {
  bool enkf = false;
  FilterKind kind = FilterKind::ML;
  bool memoryless = false;
  bool pinned_full = false;
};

inline FilterMode filter_mode(const std::string& name) {
  FilterMode m;
  if (name == "enkf") { m.enkf = true; return m; }
  m.kind = name.ends_with("mf") ? FilterKind::MF : FilterKind::ML;
  m.memoryless = name.starts_with("memoryless");
  m.pinned_full = name.starts_with("reference");
  return m;
}

}  // namespace detail

/// Shared immutable context for one experiment: discretization, dynamics, and
/// the prior ingredients (built once, reused across replicates).
struct RunContext {
  std::shared_ptr<const FemOperators> fem;
  std::shared_ptr<const QgeModel> model;
  std::shared_ptr<const LaplacianEigenbasis> eigenbasis;
  std::shared_ptr<const InvariantArchive> archive;  // only for the invariant prior
};

inline std::vector<Vec> sample_prior(const RunContext& ctx, const ExperimentConfig& config,
                                     RngStream& stream, int count) {
  if (config.prior == "smooth") return sample_smooth_prior(*ctx.eigenbasis, stream, count);
  return sample_invariant_prior(*ctx.archive, stream, count, config.prior_jitter,
                                ctx.eigenbasis.get());
}

/// One replicate of the analysis/predict loop. Row k records the forecast
/// error before the analysis at t_k, the error after it, the dimension of
/// the reduced space used to cross [t_k, t_{k+1}], and the step wall time.
inline ExperimentRecord run_filter(const RunContext& ctx, const ExperimentConfig& config,
                                   const TruthData& truth,
                                   const std::vector<MeasurementRecord>& measurements,
                                   std::uint64_t replicate, int threads = 1) {
  const FemOperators& fem = *ctx.fem;
  FilterOps fops = filter_ops_from_fem(fem);
  StreamFactory streams{config.seed, replicate};
  detail::FilterMode mode = detail::filter_mode(config.filter);

  ExperimentRecord rec;
  rec.replicate = replicate;
  rec.seed = config.seed;
  rec.config_hash = config.config_hash();

  RngStream prior_p = streams.make("prior-principal");
  RngStream prior_a = streams.make("prior-ancillary");

  EnsembleSet es;
  es.principal = sample_prior(ctx, config, prior_p, config.n_principal);
  if (!mode.enkf) {
    es.ancillary = sample_prior(ctx, config, prior_a, config.n_ancillary);
    es.control = es.principal;
    es.v_space = make_full_space_sentinel(fem.dof_count());
    es.w_space = make_empty_space(fem.dof_count());
  }

  PredictOptions opt;
  opt.eps_r = config.eps_r;
  opt.kind = mode.kind;
  opt.memoryless = mode.memoryless;
  opt.pinned_full = mode.pinned_full;
  opt.threads = threads;

  for (int k = 0; k <= config.windows; ++k) {
    auto tic = std::chrono::steady_clock::now();
    StepRecord step;
    step.k = k;
    step.err_pre = detail::relative_error(fem, es.principal, truth.at_window(k));
    try {
      es.step_index = k;
      if (mode.enkf) {
        enkf_analysis(fops, es.principal, measurements[k].data, config.sigma, streams, k);
      } else if (mode.kind == FilterKind::ML) {
        ml_analysis(fops, es, measurements[k].data, config.sigma, streams);
      } else {
        mf_analysis(fops, es, measurements[k].data, config.sigma, streams);
      }
      step.err_post = detail::relative_error(fem, es.principal, truth.at_window(k));

      if (k < config.windows) {
        if (mode.enkf) {
          enkf_predict(*ctx.model, es.principal, config.window_length, threads);
          step.rom_dim = 0;
        } else {
          PredictDiagnostics diag;
          es = predict(fem, *ctx.model, es, config.window_length, opt, &diag);
          step.rom_dim = diag.rom_dim;
        }
      }
    } catch (const NonConvergence& e) {
      rec.aborted = true;
      rec.abort_reason = std::string("non-convergence at window ") + std::to_string(k) + ": " +
                         e.what();
      rec.steps.push_back(step);
      break;
    }
    step.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    rec.steps.push_back(step);
  }
  return rec;
}

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  double pos = q * (static_cast<double>(v.size()) - 1.0);
  auto lo = static_cast<std::size_t>(pos);
  auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Median post-analysis error over the last quarter of the recorded steps.
inline double final_quarter_error(const ExperimentRecord& rec) {
  if (rec.steps.empty()) return std::nan("");
  std::vector<double> tail;
  std::size_t quarter = std::max<std::size_t>(1, rec.steps.size() / 4);
  std::size_t start = rec.steps.size() - quarter;
  for (std::size_t i = start; i < rec.steps.size(); ++i) tail.push_back(rec.steps[i].err_post);
  return quantile(tail, 0.5);
}

}  // namespace detail

/// Writes one CSV per replicate plus summary.json with pooled quantiles and
/// the fully resolved config.
inline void emit_results(const std::vector<ExperimentRecord>& records,
                         const std::filesystem::path& out_dir, const ExperimentConfig& config) {
  std::filesystem::create_directories(out_dir);

  std::vector<double> final_quarter;
  std::vector<double> all_err_post;
  std::vector<double> all_rom_dim;
  json per_replicate = json::array();

  for (const auto& rec : records) {
    CsvTable table;
    table.header = {"k", "err_pre", "err_post", "rom_dim", "wall_seconds"};
    for (const auto& s : rec.steps) {
      table.rows.push_back({static_cast<double>(s.k), s.err_pre, s.err_post,
                            static_cast<double>(s.rom_dim), s.wall_seconds});
      all_err_post.push_back(s.err_post);
      all_rom_dim.push_back(s.rom_dim);
    }
    write_csv(out_dir / ("replicate_" + std::to_string(rec.replicate) + ".csv"), table);

    json r{{"replicate", rec.replicate},
           {"seed", rec.seed},
           {"config_hash", rec.config_hash},
           {"steps", rec.steps.size()},
           {"aborted", rec.aborted}};
    if (rec.aborted) r["abort_reason"] = rec.abort_reason;
    if (!rec.steps.empty()) {
      double fq = detail::final_quarter_error(rec);
      r["final_quarter_median_err"] = fq;
      final_quarter.push_back(fq);
    }
    per_replicate.push_back(std::move(r));
  }

  json summary{{"schema_version", kSchemaVersion},
               {"config", config.to_json()},
               {"config_hash", config.config_hash()},
               {"replicate_count", records.size()},
               {"replicates", per_replicate},
               {"final_quarter_median_err",
                {{"q25", detail::quantile(final_quarter, 0.25)},
                 {"q50", detail::quantile(final_quarter, 0.5)},
                 {"q75", detail::quantile(final_quarter, 0.75)}}},
               {"err_post",
                {{"q25", detail::quantile(all_err_post, 0.25)},
                 {"q50", detail::quantile(all_err_post, 0.5)},
                 {"q75", detail::quantile(all_err_post, 0.75)}}},
               {"rom_dim_median", detail::quantile(all_rom_dim, 0.5)}};

  std::ofstream out(out_dir / "summary.json", std::ios::trunc);
  out << summary.dump(2) << '\n';
  if (!out) throw std::runtime_error("emit_results: cannot write summary.json");
}

/// Disk cache for the Laplacian eigenbasis, keyed by mesh hash and mode count.
inline LaplacianEigenbasis cached_eigenbasis(const FemOperators& fem, int n_modes) {
  char name[64];
  std::snprintf(name, sizeof(name), "eigenbasis-%016llx-%d",
                static_cast<unsigned long long>(fem.mesh.hash()), n_modes);
  std::filesystem::path base = cache_dir() / name;

  if (std::filesystem::exists(base.string() + ".json")) {
    json meta;
    std::vector<Vec> snaps = read_snapshots(base, &meta);
    LaplacianEigenbasis basis;
    basis.eigenvalues = Vec(n_modes);
    auto vals = meta.at("eigenvalues").get<std::vector<double>>();
    for (int i = 0; i < n_modes; ++i) basis.eigenvalues[i] = vals[i];
    basis.eigenvectors.resize(fem.dof_count(), n_modes);
    for (int i = 0; i < n_modes; ++i) basis.eigenvectors.col(i) = snaps[i];
    return basis;
  }

  LaplacianEigenbasis basis = build_laplacian_eigenbasis(fem, n_modes);
  std::vector<Vec> cols;
  cols.reserve(n_modes);
  for (int i = 0; i < n_modes; ++i) cols.push_back(basis.eigenvectors.col(i));
  std::vector<double> vals(basis.eigenvalues.data(), basis.eigenvalues.data() + n_modes);
  write_snapshots(base, cols, json{{"eigenvalues", vals}, {"mesh_hash", fem.mesh.hash()}});
  return basis;
}

/// Disk cache for the truth trajectory and archive, keyed by the
/// truth-determining part of the config.
inline TruthData cached_truth(const QgeModel& model, const ExperimentConfig& config,
                              bool with_archive) {
  char name[64];
  std::snprintf(name, sizeof(name), "truth-%016llx%s",
                static_cast<unsigned long long>(config.truth_hash()),
                with_archive ? "-arch" : "");
  std::filesystem::path base = cache_dir() / name;

  if (std::filesystem::exists(base.string() + ".json")) {
    json meta;
    std::vector<Vec> snaps = read_snapshots(base, &meta);
    TruthData truth;
    truth.substeps_per_window = meta.at("substeps_per_window").get<int>();
    truth.trajectory.t0 = meta.at("t0").get<double>();
    truth.trajectory.dt = meta.at("dt").get<double>();
    auto traj_len = meta.at("trajectory_length").get<std::size_t>();
    truth.trajectory.states.assign(snaps.begin(), snaps.begin() + traj_len);
    truth.archive.snapshots.assign(snaps.begin() + traj_len, snaps.end());
    truth.archive.t_start = meta.at("archive_t_start").get<double>();
    truth.archive.t_end = meta.at("archive_t_end").get<double>();
    return truth;
  }

  TruthData truth = generate_truth(model, config, with_archive);
  std::vector<Vec> snaps = truth.trajectory.states;
  snaps.insert(snaps.end(), truth.archive.snapshots.begin(), truth.archive.snapshots.end());
  write_snapshots(base, snaps,
                  json{{"substeps_per_window", truth.substeps_per_window},
                       {"t0", truth.trajectory.t0},
                       {"dt", truth.trajectory.dt},
                       {"trajectory_length", truth.trajectory.states.size()},
                       {"archive_t_start", truth.archive.t_start},
                       {"archive_t_end", truth.archive.t_end},
                       {"truth_hash", config.truth_hash()}});
  return truth;
}

/// Full experiment: truth, measurements, all replicates, results on disk.
inline std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config,
                                                    const std::filesystem::path& out_dir,
                                                    int threads = 1, bool use_cache = true) {
  config.validate();
  Mesh mesh = build_mesh(config.mesh, config.mesh);
  auto fem = std::make_shared<FemOperators>(assemble_operators(mesh, config.qge));
  auto model = std::make_shared<QgeModel>(fem, config.qge);

  const bool with_archive = config.prior == "invariant";
  RunContext ctx;
  ctx.fem = fem;
  ctx.model = model;

  TruthData truth = use_cache ? cached_truth(*model, config, with_archive)
                              : generate_truth(*model, config, with_archive);
  if (config.prior == "smooth" || config.prior_jitter > 0.0)
    ctx.eigenbasis = std::make_shared<LaplacianEigenbasis>(
        use_cache ? cached_eigenbasis(*fem, config.prior_modes)
                  : build_laplacian_eigenbasis(*fem, config.prior_modes));
  if (with_archive) ctx.archive = std::make_shared<InvariantArchive>(truth.archive);

  std::vector<ExperimentRecord> records;
  for (int r = 0; r < config.replicates; ++r) {
    auto measurements = generate_measurements(*fem, truth, config, r);
    records.push_back(run_filter(ctx, config, truth, measurements, r, threads));
  }
  emit_results(records, out_dir, config);
  return records;
}

}  // namespace ahkf
