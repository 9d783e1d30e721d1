// Twin-experiment command line driver.

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ahkf/harness.hpp"

namespace {

ahkf::ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    ahkf::ExperimentConfig c;
    c.validate();
    return c;
  }
  return ahkf::load_config(config_path);
}

int cmd_truth(const std::string& config_path, const std::string& out_dir) {
  ahkf::ExperimentConfig config = load_or_default(config_path);
  ahkf::Mesh mesh = ahkf::build_mesh(config.mesh, config.mesh);
  auto fem = std::make_shared<ahkf::FemOperators>(ahkf::assemble_operators(mesh, config.qge));
  ahkf::QgeModel model(fem, config.qge);

  ahkf::TruthData truth = ahkf::cached_truth(model, config, true);
  std::printf("truth_hash %016" PRIx64 "\n", config.truth_hash());
  std::printf("trajectory_states %zu\n", truth.trajectory.states.size());
  std::printf("archive_snapshots %zu\n", truth.archive.snapshots.size());
  if (!out_dir.empty()) {
    ahkf::write_snapshots(std::filesystem::path(out_dir) / "truth", truth.trajectory.states,
                          ahkf::json{{"t0", truth.trajectory.t0},
                                     {"dt", truth.trajectory.dt},
                                     {"truth_hash", config.truth_hash()}});
    std::printf("written %s/truth.f64\n", out_dir.c_str());
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, std::optional<int> replicates, int threads) {
  ahkf::ExperimentConfig config = load_or_default(config_path);
  if (seed) config.seed = *seed;
  if (replicates) config.replicates = *replicates;
  config.validate();

  auto records = ahkf::run_experiment(config, out_dir, threads);
  int failures = 0;
  for (const auto& rec : records) {
    if (rec.aborted) {
      ++failures;
      std::printf("replicate %" PRIu64 " aborted: %s\n", rec.replicate, rec.abort_reason.c_str());
    } else {
      std::printf("replicate %" PRIu64 " final-quarter median err %.6e\n", rec.replicate,
                  ahkf::detail::final_quarter_error(rec));
    }
  }
  std::printf("results in %s\n", out_dir.c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& out_dir) {
  std::ifstream in(std::filesystem::path(out_dir) / "summary.json");
  if (!in) {
    std::fprintf(stderr, "report: no summary.json in %s\n", out_dir.c_str());
    return 1;
  }
  ahkf::json summary = ahkf::json::parse(in);
  std::printf("schema_version %d\n", summary.at("schema_version").get<int>());
  std::printf("filter %s  replicates %zu\n",
              summary.at("config").at("filter").get<std::string>().c_str(),
              summary.at("replicate_count").get<std::size_t>());
  auto fq = summary.at("final_quarter_median_err");
  std::printf("final-quarter median err: q25 %.6e  q50 %.6e  q75 %.6e\n",
              fq.at("q25").get<double>(), fq.at("q50").get<double>(), fq.at("q75").get<double>());
  std::printf("rom dim median %.1f\n", summary.at("rom_dim_median").get<double>());

  // recompute the pooled median from the CSVs as a consistency check
  std::vector<double> pooled;
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    if (entry.path().extension() != ".csv") continue;
    ahkf::CsvTable table = ahkf::read_csv(entry.path());
    for (const auto& row : table.rows) pooled.push_back(row[2]);
  }
  std::printf("err_post median recomputed from CSVs: %.6e (summary %.6e)\n",
              ahkf::detail::quantile(pooled, 0.5),
              summary.at("err_post").at("q50").get<double>());
  return 0;
}

int cmd_selftest() {
  int passed = 0;
  int failed = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%-42s %s\n", name, ok ? "pass" : "FAIL");
    (ok ? passed : failed) += 1;
  };

  ahkf::Mesh mesh = ahkf::build_mesh(21, 21);
  check("mesh: node/triangle/interior counts",
        mesh.node_count() == 441 && mesh.triangles.size() == 800 && mesh.interior_count() == 361);

  ahkf::QgeParams params;
  auto fem = std::make_shared<ahkf::FemOperators>(ahkf::assemble_operators(mesh, params));
  ahkf::QgeModel model(fem, params);

  auto [w0, psi0] = model.solve_stationary();
  ahkf::Vec r1 = -fem->ddx * psi0 + (params.ro / params.re) * (fem->stiffness * w0) - fem->load;
  ahkf::Vec r2 = fem->stiffness * psi0 - fem->mass * w0;
  check("solver: stationary residual below 1e-10",
        std::sqrt(r1.squaredNorm() + r2.squaredNorm()) <= 1e-10);

  ahkf::Trajectory whole = model.flow(w0, 1.0);
  ahkf::Vec half = model.flow(model.flow(w0, 0.5).last(), 0.5).last();
  check("solver: flow composition bitwise", whole.last() == half);

  ahkf::RngStream rng(7, 0, "selftest");
  std::vector<ahkf::Vec> snaps;
  for (int p = 0; p < 12; ++p) snaps.push_back(rng.normal_vector(fem->dof_count()));
  ahkf::PodResult pr = ahkf::pod(fem->mass, snaps, 1e-3);
  double mse = 0.0;
  ahkf::ReducedSpace space = ahkf::make_reduced_space(*fem, pr.basis);
  for (const auto& s : snaps) {
    ahkf::Vec d = s - ahkf::project_onto(*fem, space, s);
    mse += ahkf::v_inner(*fem, d, d);
  }
  mse /= static_cast<double>(snaps.size());
  check("pod: projection error equals discarded sum",
        std::abs(mse - pr.discarded_energy) <= 1e-10 * std::max(1.0, pr.discarded_energy));

  ahkf::FilterOps fops = ahkf::filter_ops_from_fem(*fem);
  std::vector<ahkf::Vec> ens;
  for (int n = 0; n < 5; ++n) ens.push_back(rng.normal_vector(fem->dof_count()));
  ahkf::Mat q = ahkf::single_cov(fops, ens, ahkf::CovKind::StateMeasurement);
  ahkf::Vec mean = ahkf::detail::ensemble_mean(ens);
  ahkf::Mat oracle = ahkf::Mat::Zero(q.rows(), q.cols());
  for (const auto& w : ens)
    oracle += (w - mean) * (fops.measure(w) - fops.measure(mean)).transpose() / 4.0;
  check("filters: covariance matches two-loop oracle", (q - oracle).norm() <= 1e-12 * oracle.norm());

  std::printf("selftest: %d passed, %d failed\n", passed, failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hierarchical ensemble Kalman filtering on the QG equations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  int threads = 1;

  CLI::App* truth = app.add_subcommand("truth", "Generate and cache the truth trajectory");
  truth->add_option("--config", config_path, "Config file (key=value)");
  truth->add_option("--out", out_dir, "Also dump the trajectory here");

  CLI::App* run = app.add_subcommand("run", "Run a twin experiment");
  run->add_option("--config", config_path, "Config file (key=value)");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--replicates", replicates, "Override the replicate count");
  run->add_option("--threads", threads, "Member-level threads");

  CLI::App* report = app.add_subcommand("report", "Summarize a result directory");
  report->add_option("--out", out_dir, "Result directory")->required();

  app.add_subcommand("selftest", "Run built-in consistency checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("truth")) return cmd_truth(config_path, out_dir);
    if (app.got_subcommand("run")) return cmd_run(config_path, out_dir, seed, replicates, threads);
    if (app.got_subcommand("report")) return cmd_report(out_dir);
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "{\"error\": \"%s\"}\n", e.what());
    return 2;
  }
}
