// Acceptance gate: each criterion prints exactly one "criterion N: PASS|FAIL"
// line. Criterion numbers are selected on the command line; with no arguments
// every criterion runs. Exit code 0 iff all selected criteria pass.
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "ahkf/harness.hpp"
#include "ahkf/telescopic.hpp"

using namespace ahkf;

namespace {

namespace fs = std::filesystem;

// pinned tolerances
constexpr double kPodRelTol = 1e-10;        // criterion 1
constexpr double kCovTol = 1e-12;           // criterion 2
constexpr double kPsdTol = 1e-12;           // criterion 3
constexpr double kOrderLo = 1.5;            // criterion 4
constexpr double kOrderHi = 2.5;
constexpr double kVarRelTol = 0.05;         // criterion 5
constexpr double kLambdaRelTol = 0.02;
constexpr double kRefFactor = 3.0;          // criteria 7a, 8
constexpr double kEnkfFactor = 10.0;        // criterion 7b
constexpr double kTelTol = 1e-12;           // criterion 10

// desk-scale study shared by criteria 7, 8, 9 (mesh, windows, ensemble sizes,
// eps_r and replicate count pinned by the acceptance contract)
constexpr int kDeskMesh = 41;
constexpr int kDeskWindows = 100;
constexpr int kDeskPrincipal = 16;
constexpr int kDeskAncillary = 200;
constexpr double kDeskEpsR = 1e-3;
constexpr int kDeskReplicates = 4;

ExperimentConfig desk_config(const std::string& filter, double eps_r = kDeskEpsR) {
  ExperimentConfig c;
  c.mesh = kDeskMesh;
  c.windows = kDeskWindows;
  c.n_principal = kDeskPrincipal;
  c.n_ancillary = kDeskAncillary;
  c.eps_r = eps_r;
  c.replicates = kDeskReplicates;
  c.filter = filter;
  c.sigma = 1e-4;
  c.seed = 42;
  // free parameters of the study: the truth segment starts inside the active
  // regime of the dynamics and the ensembles sample the invariant measure
  // characterized over a post-horizon archive, de-degenerated by a smooth
  // jitter spanning the leading Laplacian modes
  c.prior = "invariant";
  c.prior_modes = 256;
  c.prior_jitter = 3.0;
  c.spinup = 1500.0;
  c.archive_length = 40.0;
  return c;
}

// long-window variant: three time units between analyses stress the surrogate
// enough that the spread-linked tolerance binds on the final-quarter error
ExperimentConfig desk_config_long(const std::string& filter, double eps_r = kDeskEpsR) {
  ExperimentConfig c = desk_config(filter, eps_r);
  c.window_length = 3.0;
  c.prior_modes = 64;
  return c;
}

struct DeskResult {
  double median_final_quarter = 0.0;
  double median_rom_dim = 0.0;
};

std::map<std::string, DeskResult> g_desk;

/// Runs one desk configuration (memoized in-process and reused from a prior
/// invocation's output directory when the resolved config hash matches; the
/// runs are deterministic, so reuse is bitwise equivalent to rerunning).
const DeskResult& desk_run(const std::string& tag, const ExperimentConfig& config) {
  auto it = g_desk.find(tag);
  if (it != g_desk.end()) return it->second;

  fs::path out = fs::path("acceptance-out") / tag;
  std::ifstream prior(out / "summary.json");
  if (prior.good()) {
    json summary = json::parse(prior, nullptr, false);
    if (!summary.is_discarded() &&
        summary.value("config_hash", std::uint64_t{0}) == config.config_hash()) {
      bool aborted = false;
      for (const auto& r : summary.at("replicates"))
        aborted |= r.value("aborted", false);
      if (!aborted) {
        DeskResult r;
        r.median_final_quarter = summary.at("final_quarter_median_err").at("q50").get<double>();
        r.median_rom_dim = summary.at("rom_dim_median").get<double>();
        std::printf("  [%s] reusing recorded run: median final-quarter err %.6e, rom dim %.1f\n",
                    tag.c_str(), r.median_final_quarter, r.median_rom_dim);
        return g_desk.emplace(tag, r).first->second;
      }
    }
  }

  auto records = run_experiment(config, out);

  std::vector<double> fq;
  std::vector<double> rom;
  for (const auto& rec : records) {
    if (rec.aborted) {
      std::printf("  [%s] replicate %llu aborted: %s\n", tag.c_str(),
                  static_cast<unsigned long long>(rec.replicate), rec.abort_reason.c_str());
      continue;
    }
    fq.push_back(detail::final_quarter_error(rec));
    for (const auto& s : rec.steps) rom.push_back(s.rom_dim);
  }
  DeskResult r;
  r.median_final_quarter = detail::quantile(fq, 0.5);
  r.median_rom_dim = detail::quantile(rom, 0.5);
  std::printf("  [%s] median final-quarter err %.6e, median rom dim %.1f\n", tag.c_str(),
              r.median_final_quarter, r.median_rom_dim);
  return g_desk.emplace(tag, r).first->second;
}

bool check(bool ok, const char* what) {
  if (!ok) std::printf("  failed: %s\n", what);
  return ok;
}

// ---------------------------------------------------------------- criterion 1

bool criterion_pod_optimality() {
  auto ops = assemble_operators(build_mesh(21, 21));
  RngStream rng(11, 0, "acc-pod");
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    int count = 5 + static_cast<int>(rng.uniform_index(26));  // <= 30 snapshots
    std::vector<Vec> snaps;
    double total = 0.0;
    for (int i = 0; i < count; ++i) {
      snaps.push_back(rng.normal_vector(ops.dof_count()));
      total += v_inner(ops, snaps.back(), snaps.back());
    }
    total /= count;
    double tol = total * rng.uniform() * 0.5;  // discard a random energy share
    PodResult r = pod(ops.mass, snaps, tol);
    ReducedSpace space = make_reduced_space(ops, r.basis);

    double mse = 0.0;
    for (const Vec& s : snaps) {
      Vec resid = s - project_onto(ops, space, s);
      mse += v_inner(ops, resid, resid);
    }
    mse /= count;
    ok &= check(std::abs(mse - r.discarded_energy) <= kPodRelTol * total,
                "mean squared projection error != discarded eigenvalue sum");
    ok &= check(r.discarded_energy <= tol + kPodRelTol * total, "tolerance rule violated");
  }
  return ok;
}

// ---------------------------------------------------------------- criterion 2

Mat brute_cov(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  Vec ma = Vec::Zero(a.front().size());
  Vec mb = Vec::Zero(b.front().size());
  for (const Vec& v : a) ma += v;
  for (const Vec& v : b) mb += v;
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  Mat c = Mat::Zero(a.front().size(), b.front().size());
  for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - ma) * (b[i] - mb).transpose();
  return c / (static_cast<double>(a.size()) - 1.0);
}

bool criterion_covariance_oracles() {
  RngStream rng(13, 0, "acc-cov");
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    int n_dof = 2 + static_cast<int>(rng.uniform_index(11));  // <= 12
    int n_obs = 1 + static_cast<int>(rng.uniform_index(5));   // <= 5
    int count = 2 + static_cast<int>(rng.uniform_index(7));   // <= 8

    FilterOps ops;
    std::vector<Eigen::Triplet<double>> tm;
    for (int i = 0; i < n_dof; ++i) tm.emplace_back(i, i, 0.5 + rng.uniform());
    ops.mass.resize(n_dof, n_dof);
    ops.mass.setFromTriplets(tm.begin(), tm.end());
    std::vector<Eigen::Triplet<double>> to;
    for (int r = 0; r < n_obs; ++r)
      for (int c = 0; c < n_dof; ++c) to.emplace_back(r, c, rng.normal());
    ops.obs.resize(n_obs, n_dof);
    ops.obs.setFromTriplets(to.begin(), to.end());

    EnsembleSet es;
    auto fill = [&](std::vector<Vec>& e, int n) {
      for (int i = 0; i < n; ++i) e.push_back(rng.normal_vector(n_dof));
    };
    fill(es.principal, count);
    fill(es.control, count);
    fill(es.ancillary, count + 2);

    auto meas = [&](const std::vector<Vec>& e) {
      std::vector<Vec> m;
      for (const Vec& w : e) m.push_back(ops.measure(w));
      return m;
    };

    ok &= check((single_cov(ops, es.principal, CovKind::StateMeasurement) -
                 brute_cov(es.principal, meas(es.principal)))
                        .lpNorm<Eigen::Infinity>() <= kCovTol,
                "single state-measurement covariance");
    ok &= check((single_cov(ops, es.principal, CovKind::MeasurementMeasurement) -
                 brute_cov(meas(es.principal), meas(es.principal)))
                        .lpNorm<Eigen::Infinity>() <= kCovTol,
                "single measurement-measurement covariance");
    ok &= check((cross_cov(ops, es.principal, es.control, CovKind::StateMeasurement) -
                 brute_cov(es.principal, meas(es.control)))
                        .lpNorm<Eigen::Infinity>() <= kCovTol,
                "cross covariance");

    auto [q_ml, p_ml] = ml_covariances(ops, es);
    Mat q_ml_o = brute_cov(es.principal, meas(es.principal)) -
                 brute_cov(es.control, meas(es.control)) +
                 brute_cov(es.ancillary, meas(es.ancillary));
    Mat p_ml_o = brute_cov(meas(es.principal), meas(es.principal)) -
                 brute_cov(meas(es.control), meas(es.control)) +
                 brute_cov(meas(es.ancillary), meas(es.ancillary));
    ok &= check((q_ml - q_ml_o).lpNorm<Eigen::Infinity>() <= kCovTol, "multi-level Q");
    ok &= check((p_ml - p_ml_o).lpNorm<Eigen::Infinity>() <= kCovTol, "multi-level P");

    auto mm = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
      return brute_cov(meas(a), meas(b));
    };
    auto [q_mf, p_mf] = mf_covariances(ops, es);
    Mat q_mf_o = brute_cov(es.principal, meas(es.principal)) +
                 0.25 * (brute_cov(es.control, meas(es.control)) +
                         brute_cov(es.ancillary, meas(es.ancillary))) -
                 0.5 * (brute_cov(es.principal, meas(es.control)) +
                        brute_cov(es.control, meas(es.principal)));
    Mat p_mf_o = mm(es.principal, es.principal) +
                 0.25 * (mm(es.control, es.control) + mm(es.ancillary, es.ancillary)) -
                 0.5 * (mm(es.principal, es.control) + mm(es.control, es.principal));
    ok &= check((q_mf - q_mf_o).lpNorm<Eigen::Infinity>() <= kCovTol, "multi-fidelity Q");
    ok &= check((p_mf - p_mf_o).lpNorm<Eigen::Infinity>() <= kCovTol, "multi-fidelity P");
  }
  return ok;
}

// ---------------------------------------------------------------- criterion 3

bool criterion_psd_regularization() {
  RngStream rng(17, 0, "acc-psd");
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_index(6));
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    Mat p_tilde = a + a.transpose();
    Mat q_tilde(n + 3, n);
    for (int i = 0; i < n + 3; ++i)
      for (int j = 0; j < n; ++j) q_tilde(i, j) = rng.normal();

    auto [q, p] = psd_regularize(q_tilde, p_tilde);
    Eigen::SelfAdjointEigenSolver<Mat> post(0.5 * (p + p.transpose()));
    ok &= check(post.eigenvalues().minCoeff() >= -kPsdTol, "output not PSD");

    Eigen::SelfAdjointEigenSolver<Mat> in(p_tilde);
    Mat p_oracle = in.eigenvectors() * Vec(in.eigenvalues().cwiseMax(0.0)).asDiagonal() *
                   in.eigenvectors().transpose();
    ok &= check((p - p_oracle).lpNorm<Eigen::Infinity>() <= kPsdTol, "eigen-oracle mismatch");

    Mat p_psd = p_tilde * p_tilde.transpose() + 1e-3 * Mat::Identity(n, n);
    auto [q2, p2] = psd_regularize(q_tilde, p_psd);
    ok &= check((p2 - p_psd).lpNorm<Eigen::Infinity>() <= kPsdTol, "PSD P changed");
    ok &= check((q2 - q_tilde).lpNorm<Eigen::Infinity>() <= kPsdTol, "PSD Q changed");
  }
  return ok;
}

// ---------------------------------------------------------------- criterion 4

bool criterion_solver_order() {
  auto ops = std::make_shared<FemOperators>(assemble_operators(build_mesh(21, 21)));
  Vec w0 = QgeModel(ops, {}).solve_stationary().first;
  LaplacianEigenbasis basis = build_laplacian_eigenbasis(*ops, 16);
  RngStream rng(19, 0, "acc-order");
  w0 += 0.2 * sample_smooth_prior(basis, rng, 1).front();

  auto run = [&](double dt) {
    QgeParams p;
    p.dt = dt;
    QgeModel model(ops, p);
    Vec w = w0;
    int n = static_cast<int>(std::llround(1.0 / dt));
    for (int s = 0; s < n; ++s) w = model.step(w);
    return w;
  };
  Vec ref = run(0.1 / 8.0);
  double e1 = (run(0.1) - ref).norm();
  double e2 = (run(0.05) - ref).norm();
  double order = std::log2(e1 / e2);
  std::printf("  observed order %.3f (e_dt %.3e, e_dt/2 %.3e)\n", order, e1, e2);
  return check(order > kOrderLo && order < kOrderHi, "observed order outside 2.0 +- 0.5");
}

// ---------------------------------------------------------------- criterion 5

bool criterion_prior_spectrum() {
  auto ops = assemble_operators(build_mesh(41, 41));
  double exact = 2.0 * std::numbers::pi * std::numbers::pi;
  LaplacianEigenbasis basis = build_laplacian_eigenbasis(ops, 64);
  double lambda1 = basis.eigenvalues[0];
  std::printf("  lambda_1 %.6f vs 2 pi^2 %.6f (rel %.4f)\n", lambda1, exact,
              std::abs(lambda1 - exact) / exact);
  bool ok = check(std::abs(lambda1 - exact) <= kLambdaRelTol * exact, "lambda_1 off 2 pi^2");

  RngStream rng(23, 0, "acc-prior");
  const int count = 10000;
  double second_moment = 0.0;
  Vec weighted = ops.mass * basis.eigenvectors.col(0);
  for (int n = 0; n < count; ++n) {
    Vec s = sample_smooth_prior(basis, rng, 1).front();
    double c = weighted.dot(s);
    second_moment += c * c;
  }
  second_moment /= count;
  std::printf("  sample variance along xi_1 %.6e vs 1/lambda_1 %.6e\n", second_moment,
              1.0 / lambda1);
  ok &= check(std::abs(second_moment - 1.0 / lambda1) <= kVarRelTol / lambda1,
              "variance along xi_1 off 1/lambda_1");
  return ok;
}

// ---------------------------------------------------------------- criterion 6

bool criterion_reference_equivalence() {
  ExperimentConfig config;
  config.mesh = 21;
  config.windows = 10;
  config.n_principal = 8;
  config.n_ancillary = 40;
  config.prior_modes = 32;
  config.spinup = 10.0;
  config.archive_length = 0.0;
  config.replicates = 1;
  config.seed = 7;
  config.filter = "reference-ml";

  auto fem = std::make_shared<FemOperators>(assemble_operators(build_mesh(21, 21), config.qge));
  auto model = std::make_shared<QgeModel>(fem, config.qge);
  auto eigenbasis = std::make_shared<LaplacianEigenbasis>(
      build_laplacian_eigenbasis(*fem, config.prior_modes));

  RunContext ctx;
  ctx.fem = fem;
  ctx.model = model;
  ctx.eigenbasis = eigenbasis;

  TruthData truth = generate_truth(*model, config);
  auto meas = generate_measurements(*fem, truth, config, 0);
  ExperimentRecord rec = run_filter(ctx, config, truth, meas, 0);
  if (rec.aborted) return check(false, "reference run aborted");

  // independent loop spelling out the reference multi-level filter: the
  // surrogate is the full model, every projection is the identity, and the
  // control forecast restarts from the updated principal states
  FilterOps fops = filter_ops_from_fem(*fem);
  StreamFactory streams{config.seed, 0};
  RngStream prior_p = streams.make("prior-principal");
  RngStream prior_a = streams.make("prior-ancillary");

  EnsembleSet es;
  es.principal = sample_smooth_prior(*eigenbasis, prior_p, config.n_principal);
  es.ancillary = sample_smooth_prior(*eigenbasis, prior_a, config.n_ancillary);
  es.control = es.principal;
  es.v_space = make_full_space_sentinel(fem->dof_count());
  es.w_space = es.v_space;

  bool ok = true;
  for (int k = 0; k <= config.windows; ++k) {
    double err_pre = detail::relative_error(*fem, es.principal, truth.at_window(k));
    es.step_index = k;
    ml_analysis(fops, es, meas[k].data, config.sigma, streams);
    double err_post = detail::relative_error(*fem, es.principal, truth.at_window(k));

    ok &= check(err_pre == rec.steps[k].err_pre, "forecast error trace diverged");
    ok &= check(err_post == rec.steps[k].err_post, "analysis error trace diverged");
    if (!ok) {
      std::printf("  window %d: oracle (%.17g, %.17g) vs harness (%.17g, %.17g)\n", k, err_pre,
                  err_post, rec.steps[k].err_pre, rec.steps[k].err_post);
      break;
    }
    if (k == config.windows) break;

    for (Vec& w : es.principal) w = model->flow(w, config.window_length).last();
    for (std::size_t n = 0; n < es.control.size(); ++n)
      es.control[n] = model->flow(es.control[n], config.window_length).last();
    for (Vec& w : es.ancillary) w = model->flow(w, config.window_length).last();
  }
  return ok;
}

// ------------------------------------------------------------ criteria 7/8/9

bool criterion_desk_comparison() {
  const auto& ml = desk_run("ml", desk_config("ml"));
  const auto& mf = desk_run("mf", desk_config("mf"));
  const auto& ref_ml = desk_run("reference-ml", desk_config("reference-ml"));
  const auto& ref_mf = desk_run("reference-mf", desk_config("reference-mf"));
  const auto& enkf = desk_run("enkf", desk_config("enkf"));

  bool ok = true;
  ok &= check(ml.median_final_quarter <= kRefFactor * ref_ml.median_final_quarter,
              "multi-level error more than 3x the reference");
  ok &= check(mf.median_final_quarter <= kRefFactor * ref_mf.median_final_quarter,
              "multi-fidelity error more than 3x the reference");
  ok &= check(ml.median_final_quarter <= enkf.median_final_quarter / kEnkfFactor,
              "multi-level error not 10x below the baseline");
  ok &= check(mf.median_final_quarter <= enkf.median_final_quarter / kEnkfFactor,
              "multi-fidelity error not 10x below the baseline");
  return ok;
}

bool criterion_tolerance_monotonicity() {
  const auto& loose = desk_run("long-ml-1e-1", desk_config_long("ml", 1e-1));
  const auto& mid = desk_run("long-ml-1e-2", desk_config_long("ml", 1e-2));
  const auto& tight = desk_run("long-ml", desk_config_long("ml"));
  const auto& ref_ml = desk_run("long-reference-ml", desk_config_long("reference-ml"));

  bool ok = true;
  ok &= check(mid.median_final_quarter <= loose.median_final_quarter,
              "error increased from eps_r 1e-1 to 1e-2");
  ok &= check(tight.median_final_quarter <= mid.median_final_quarter,
              "error increased from eps_r 1e-2 to 1e-3");
  ok &= check(tight.median_final_quarter <= kRefFactor * ref_ml.median_final_quarter,
              "eps_r 1e-3 error more than 3x the reference");
  return ok;
}

bool criterion_inflation_deflation() {
  // short windows starve the per-window snapshot pool, so the carried space
  // is the only mechanism that can keep the surrogate basis rich
  auto carried_cfg = desk_config("ml");
  carried_cfg.window_length = 0.2;
  auto memoryless_cfg = desk_config("memoryless-ml");
  memoryless_cfg.window_length = 0.2;
  const auto& carried = desk_run("short-ml", carried_cfg);
  const auto& memoryless = desk_run("short-memoryless-ml", memoryless_cfg);

  bool ok = true;
  ok &= check(carried.median_final_quarter <= memoryless.median_final_quarter,
              "inflation-deflation error above the memory-less error");
  ok &= check(carried.median_rom_dim >= memoryless.median_rom_dim,
              "inflation-deflation reduced space smaller than the memory-less one");
  return ok;
}

// --------------------------------------------------------------- criterion 10

bool criterion_telescopic() {
  auto ops = std::make_shared<FemOperators>(assemble_operators(build_mesh_relaxed(7, 7)));
  QgeModel model(ops, {});
  Vec base = model.solve_stationary().first;
  RngStream rng(29, 0, "acc-tel");
  auto ensemble = [&](int count) {
    std::vector<Vec> e;
    for (int i = 0; i < count; ++i) e.push_back(base + 0.1 * rng.normal_vector(ops->dof_count()));
    return e;
  };

  EnsembleSet es;
  es.principal = ensemble(4);
  es.control = es.principal;
  es.ancillary = ensemble(8);
  es.v_space = make_full_space_sentinel(ops->dof_count());
  es.w_space = make_empty_space(ops->dof_count());

  LevelEnsembles le;
  le.principal = {es.ancillary, es.principal};
  le.control = {{}, es.control};
  le.v_spaces = {es.v_space};
  le.w_spaces = {es.w_space};

  LevelConfig cfg;
  cfg.levels = 1;
  cfg.sizes = {8, 4};
  cfg.eps_r = {1e-3};

  bool ok = true;
  for (FilterKind kind : {FilterKind::ML, FilterKind::MF}) {
    PredictOptions opt;
    opt.eps_r = 1e-3;
    opt.kind = kind;
    EnsembleSet two = predict(*ops, model, es, 1.0, opt);
    LevelEnsembles tel = telescopic_predict(*ops, model, le, 1.0, cfg, kind);
    for (std::size_t n = 0; n < two.principal.size(); ++n) {
      ok &= check(tel.principal[1][n] == two.principal[n], "principal states differ");
      ok &= check(tel.control[1][n] == two.control[n], "control states differ");
    }
    for (std::size_t m = 0; m < two.ancillary.size(); ++m)
      ok &= check(tel.principal[0][m] == two.ancillary[m], "ancillary states differ");
    ok &= check(tel.v_spaces[0].basis == two.v_space.basis, "inflated bases differ");
    ok &= check(tel.w_spaces[0].basis == two.w_space.basis, "deflated bases differ");
  }

  // degenerate two-level hierarchy: with identical ensembles on every level
  // the telescoping terms cancel and the formulas reduce to closed forms
  auto shared = ensemble(6);
  LevelEnsembles deg;
  deg.principal = {shared, shared, shared};
  deg.control = {{}, shared, shared};
  deg.v_spaces = {make_empty_space(ops->dof_count()), make_empty_space(ops->dof_count())};
  deg.w_spaces = deg.v_spaces;

  double energy = detail::centered_energy(ops->mass, shared) /
                  (static_cast<double>(shared.size()) - 1.0);
  double trace_ml = 2.0 * energy;
  auto ml = telescopic_tolerance_ml(ops->mass, deg, {1e-3, 1e-2});
  ok &= check(std::abs(ml[0] - 1e-3 * trace_ml) <= kTelTol * trace_ml, "ML tolerance level 0");
  ok &= check(std::abs(ml[1] - 1e-2 * trace_ml) <= kTelTol * trace_ml, "ML tolerance level 1");

  double trace_mf = 2.0 * (energy / 16.0 + 0.25 * energy / 4.0 + 0.25 * energy);
  auto mf = telescopic_tolerance_mf(ops->mass, deg, {1e-3, 1e-2});
  ok &= check(std::abs(mf[0] - 1e-3 * trace_mf) <= kTelTol * trace_mf, "MF tolerance level 0");
  ok &= check(std::abs(mf[1] - 1e-2 * trace_mf) <= kTelTol * trace_mf, "MF tolerance level 1");
  return ok;
}

struct Criterion {
  int number;
  const char* name;
  bool (*fn)();
};

const Criterion kCriteria[] = {
    {1, "POD optimality", criterion_pod_optimality},
    {2, "covariance oracles", criterion_covariance_oracles},
    {3, "PSD regularization", criterion_psd_regularization},
    {4, "solver order", criterion_solver_order},
    {5, "prior spectrum", criterion_prior_spectrum},
    {6, "reference equivalence", criterion_reference_equivalence},
    {7, "desk-scale filter comparison", criterion_desk_comparison},
    {8, "tolerance monotonicity", criterion_tolerance_monotonicity},
    {9, "inflation-deflation vs memory-less", criterion_inflation_deflation},
    {10, "telescopic regression", criterion_telescopic},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all_ok = true;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("  exception: %s\n", e.what());
    }
    std::printf("criterion %d: %s (%s)\n", c.number, ok ? "PASS" : "FAIL", c.name);
    std::fflush(stdout);
    all_ok &= ok;
  }
  return all_ok ? 0 : 1;
}
