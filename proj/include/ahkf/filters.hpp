#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ahkf/fem.hpp"
#include "ahkf/parallel.hpp"
#include "ahkf/pod.hpp"
#include "ahkf/qge.hpp"
#include "ahkf/rng.hpp"
#include "ahkf/rom.hpp"

namespace ahkf {

/// Inner product and measurement operator, decoupled from the FEM assembly so
/// small synthetic instances exercise the same estimator code.
struct FilterOps {
  SparseMat mass;  // N x N symmetric positive definite
  SparseMat obs;   // N_D x N linear measurement operator

  int state_dim() const { return static_cast<int>(mass.rows()); }
  int obs_dim() const { return static_cast<int>(obs.rows()); }

  Vec measure(const Vec& w) const { return obs * w; }

  Vec project(const ReducedSpace& space, const Vec& x) const {
    if (space.full_space) return x;
    return space.basis * (space.basis.transpose() * (mass * x));
  }
};

inline FilterOps filter_ops_from_fem(const FemOperators& fem) {
  FilterOps f;
  f.mass = fem.mass;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(fem.obs_dofs.size());
  for (std::size_t k = 0; k < fem.obs_dofs.size(); ++k)
    t.emplace_back(static_cast<int>(k), fem.obs_dofs[k], 1.0);
  f.obs.resize(static_cast<int>(fem.obs_dofs.size()), fem.dof_count());
  f.obs.setFromTriplets(t.begin(), t.end());
  return f;
}

/// Principal / control / ancillary ensembles at one assimilation time, in full
/// coordinates, plus the current inflated and deflated spaces.
struct EnsembleSet {
  std::vector<Vec> principal;
  std::vector<Vec> control;
  std::vector<Vec> ancillary;
  ReducedSpace v_space;
  ReducedSpace w_space;
  int step_index = 0;
};

enum class CovKind { StateMeasurement, MeasurementMeasurement };

namespace detail {

inline Mat stack(const std::vector<Vec>& ens) {
  Mat x(ens.front().size(), static_cast<Eigen::Index>(ens.size()));
  for (std::size_t n = 0; n < ens.size(); ++n) x.col(n) = ens[n];
  return x;
}

inline Mat centered(const Mat& x) {
  return x.colwise() - Vec(x.rowwise().mean());
}

}  // namespace detail

/// Unbiased centered cross-covariance between paired ensembles (pairing by
/// member index). With kind=StateMeasurement the rows are states of `a` and
/// the columns measurements of `b`; MeasurementMeasurement measures both.
inline Mat cross_cov(const FilterOps& ops, const std::vector<Vec>& a,
                     const std::vector<Vec>& b, CovKind kind) {
  if (a.size() != b.size()) throw std::invalid_argument("cross_cov: size mismatch");
  if (a.size() < 2) throw std::invalid_argument("cross_cov: need at least 2 members");
  Mat xa = detail::stack(a);
  if (kind == CovKind::MeasurementMeasurement) xa = ops.obs * xa;
  Mat yb = ops.obs * detail::stack(b);
  return detail::centered(xa) * detail::centered(yb).transpose() /
         (static_cast<double>(a.size()) - 1.0);
}

inline Mat single_cov(const FilterOps& ops, const std::vector<Vec>& ens, CovKind kind) {
  return cross_cov(ops, ens, ens, kind);
}

/// Telescopic two-level combination: principal minus control plus ancillary.
inline std::pair<Mat, Mat> ml_covariances(const FilterOps& ops, const EnsembleSet& es) {
  if (es.ancillary.size() < 2)
    throw std::invalid_argument("ml_covariances: ancillary ensemble too small");
  Mat q = single_cov(ops, es.principal, CovKind::StateMeasurement) -
          single_cov(ops, es.control, CovKind::StateMeasurement) +
          single_cov(ops, es.ancillary, CovKind::StateMeasurement);
  Mat p = single_cov(ops, es.principal, CovKind::MeasurementMeasurement) -
          single_cov(ops, es.control, CovKind::MeasurementMeasurement) +
          single_cov(ops, es.ancillary, CovKind::MeasurementMeasurement);
  return {q, p};
}

/// Projection of the covariance pair onto the PSD cone of the measurement
/// covariance: eigenmodes of P with negative eigenvalues are moved to the
/// kernel of both operators.
inline std::pair<Mat, Mat> psd_regularize(const Mat& q_tilde, const Mat& p_tilde) {
  Mat p_sym = 0.5 * (p_tilde + p_tilde.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(p_sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("psd_regularize: eigensolver failed");
  const Vec& lam = es.eigenvalues();
  const Mat& vecs = es.eigenvectors();
  int first_nonneg = 0;
  while (first_nonneg < lam.size() && lam[first_nonneg] < 0.0) ++first_nonneg;
  Mat keep = vecs.rightCols(lam.size() - first_nonneg);
  Vec keep_lam = lam.tail(lam.size() - first_nonneg);
  Mat p = keep * keep_lam.asDiagonal() * keep.transpose();
  Mat q = (q_tilde * keep) * keep.transpose();
  return {q, p};
}

/// Control-variates combination; the cross terms pair principal and control
/// members by index. No PSD regularization here.
inline std::pair<Mat, Mat> mf_covariances(const FilterOps& ops, const EnsembleSet& es) {
  if (es.ancillary.size() < 2)
    throw std::invalid_argument("mf_covariances: ancillary ensemble too small");
  auto combine = [&](CovKind kind) {
    return Mat(single_cov(ops, es.principal, kind) +
               0.25 * (single_cov(ops, es.control, kind) + single_cov(ops, es.ancillary, kind)) -
               0.5 * (cross_cov(ops, es.principal, es.control, kind) +
                      cross_cov(ops, es.control, es.principal, kind)));
  };
  return {combine(CovKind::StateMeasurement), combine(CovKind::MeasurementMeasurement)};
}

/// Kalman gain K = Q (P + noise)^{-1} through a symmetric factorization.
struct GainOperators {
  Mat q;
  Mat p;
  Mat gain;
};

inline GainOperators make_gain(Mat q, Mat p, double noise_variance) {
  if (!(noise_variance > 0.0)) throw std::invalid_argument("make_gain: noise variance must be positive");
  Mat sys = p + noise_variance * Mat::Identity(p.rows(), p.cols());
  Eigen::LDLT<Mat> ldlt(0.5 * (sys + sys.transpose()));
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("make_gain: factorization failed");
  GainOperators g;
  g.gain = ldlt.solve(q.transpose()).transpose();
  g.q = std::move(q);
  g.p = std::move(p);
  return g;
}

namespace detail {

/// Perturbed data draws for one ensemble: column n is data + noise_std * z_n.
inline Mat perturbed_data(const Vec& data, double noise_std, const StreamFactory& streams,
                          std::string_view label, std::size_t count, int step) {
  Mat d(data.size(), static_cast<Eigen::Index>(count));
  for (std::size_t n = 0; n < count; ++n) {
    RngStream s = streams.make(label, n, static_cast<std::uint64_t>(step));
    d.col(n) = data + noise_std * s.normal_vector(data.size());
  }
  return d;
}

inline Vec ensemble_mean(const std::vector<Vec>& ens) {
  Vec m = Vec::Zero(ens.front().size());
  for (const Vec& w : ens) m += w;
  return m / static_cast<double>(ens.size());
}

}  // namespace detail

/// Multi-level analysis: telescopic covariances, PSD regularization, shared
/// perturbed data between principal and control (by member index), and
/// projection of the control/ancillary increments onto the current space.
inline void ml_analysis(const FilterOps& ops, EnsembleSet& es, const Vec& data,
                        double sigma, const StreamFactory& streams) {
  auto [q_tilde, p_tilde] = ml_covariances(ops, es);
  auto [q, p] = psd_regularize(q_tilde, p_tilde);
  GainOperators g = make_gain(std::move(q), std::move(p), sigma * sigma);

  Mat d_p = detail::perturbed_data(data, sigma, streams, "analysis-principal",
                                   es.principal.size(), es.step_index);
  for (std::size_t n = 0; n < es.principal.size(); ++n) {
    es.principal[n] += g.gain * (d_p.col(n) - ops.measure(es.principal[n]));
    es.control[n] += ops.project(es.v_space, g.gain * (d_p.col(n) - ops.measure(es.control[n])));
  }
  Mat d_a = detail::perturbed_data(data, sigma, streams, "analysis-ancillary",
                                   es.ancillary.size(), es.step_index);
  for (std::size_t m = 0; m < es.ancillary.size(); ++m)
    es.ancillary[m] += ops.project(es.v_space, g.gain * (d_a.col(m) - ops.measure(es.ancillary[m])));
}

/// Multi-fidelity analysis: control-variates covariances, half-variance noise
/// in the gain and the data perturbations, then re-centering of all three
/// ensembles on the control-variates mean.
inline void mf_analysis(const FilterOps& ops, EnsembleSet& es, const Vec& data,
                        double sigma, const StreamFactory& streams,
                        bool psd_regularize_covariances = false) {
  auto [q, p] = mf_covariances(ops, es);
  if (psd_regularize_covariances) std::tie(q, p) = psd_regularize(q, p);
  GainOperators g = make_gain(std::move(q), std::move(p), 0.5 * sigma * sigma);

  const double noise_std = sigma / std::sqrt(2.0);
  Mat d_p = detail::perturbed_data(data, noise_std, streams, "analysis-principal",
                                   es.principal.size(), es.step_index);
  for (std::size_t n = 0; n < es.principal.size(); ++n) {
    es.principal[n] += g.gain * (d_p.col(n) - ops.measure(es.principal[n]));
    es.control[n] += ops.project(es.v_space, g.gain * (d_p.col(n) - ops.measure(es.control[n])));
  }
  Mat d_a = detail::perturbed_data(data, noise_std, streams, "analysis-ancillary",
                                   es.ancillary.size(), es.step_index);
  for (std::size_t m = 0; m < es.ancillary.size(); ++m)
    es.ancillary[m] += ops.project(es.v_space, g.gain * (d_a.col(m) - ops.measure(es.ancillary[m])));

  // re-centering keeps control and ancillary sharing a mean consistent with
  // the principal ensemble
  Vec mean_p = detail::ensemble_mean(es.principal);
  Vec mean_c = detail::ensemble_mean(es.control);
  Vec mean_a = detail::ensemble_mean(es.ancillary);
  Vec mean_mf = mean_p + 0.5 * (mean_a - mean_c);
  Vec mean_mf_proj = ops.project(es.v_space, mean_mf);
  for (Vec& w : es.principal) w += mean_mf - mean_p;
  for (Vec& w : es.control) w += mean_mf_proj - mean_c;
  for (Vec& w : es.ancillary) w += mean_mf_proj - mean_a;
}

/// Classic single-ensemble EnKF analysis (the baseline filter).
inline void enkf_analysis(const FilterOps& ops, std::vector<Vec>& ensemble, const Vec& data,
                          double sigma, const StreamFactory& streams, int step) {
  Mat q = single_cov(ops, ensemble, CovKind::StateMeasurement);
  Mat p = single_cov(ops, ensemble, CovKind::MeasurementMeasurement);
  GainOperators g = make_gain(std::move(q), std::move(p), sigma * sigma);
  Mat d = detail::perturbed_data(data, sigma, streams, "analysis-principal",
                                 ensemble.size(), step);
  for (std::size_t n = 0; n < ensemble.size(); ++n)
    ensemble[n] += g.gain * (d.col(n) - ops.measure(ensemble[n]));
}

inline void enkf_predict(const QgeModel& model, std::vector<Vec>& ensemble,
                         double t_window, int threads = 1) {
  parallel_for(ensemble.size(), threads,
               [&](std::size_t n) { ensemble[n] = model.flow(ensemble[n], t_window).last(); });
}

enum class FilterKind { ML, MF };

struct PredictOptions {
  double eps_r = 1e-3;
  FilterKind kind = FilterKind::ML;
  bool memoryless = false;    // discard the carried space each window
  bool pinned_full = false;   // reference filter: the surrogate is the full model
  double inflate_ratio = 0.5; // split of eps_k between inflation and deflation
  int threads = 1;
};

struct PredictDiagnostics {
  double eps_k = 0.0;
  int rom_dim = 0;
  int deflated_dim = 0;
  bool degenerate = false;
};

/// Prediction step of the adaptive reduced-basis hierarchical filters:
/// full-model forecast of the principal ensemble, variance-linked tolerance,
/// space inflation from high-fidelity residuals, surrogate forecast of the
/// control (from projected principal states) and ancillary ensembles, then
/// deflation from the low-fidelity trajectories.
inline EnsembleSet predict(const FemOperators& fem, const QgeModel& model,
                           const EnsembleSet& es, double t_window, const PredictOptions& opt,
                           PredictDiagnostics* diag = nullptr) {
  const auto np = es.principal.size();
  const auto na = es.ancillary.size();
  EnsembleSet out;
  out.step_index = es.step_index + 1;
  out.principal.resize(np);
  out.control.resize(np);
  out.ancillary.resize(na);

  // principal: full model, keeping every sub-step for training
  std::vector<Trajectory> hf_traj(np);
  parallel_for(np, opt.threads,
               [&](std::size_t n) { hf_traj[n] = model.flow(es.principal[n], t_window); });
  for (std::size_t n = 0; n < np; ++n) out.principal[n] = hf_traj[n].last();

  if (opt.pinned_full) {
    // reference path: surrogate == full model, projections are identities,
    // so the control trajectory is the principal trajectory
    out.v_space = make_full_space_sentinel(fem.dof_count());
    out.w_space = out.v_space;
    out.control = out.principal;
    parallel_for(na, opt.threads,
                 [&](std::size_t m) { out.ancillary[m] = model.flow(es.ancillary[m], t_window).last(); });
    if (diag) *diag = {0.0, fem.dof_count(), fem.dof_count(), false};
    return out;
  }

  double eps_k = opt.kind == FilterKind::ML
                     ? adaptive_tolerance_ml(fem.mass, es.principal, es.control, es.ancillary, opt.eps_r)
                     : adaptive_tolerance_mf(fem.mass, es.principal, es.control, es.ancillary, opt.eps_r);

  std::vector<Vec> hf_snaps;
  hf_snaps.reserve(np * (hf_traj.front().size() - 1));
  for (const auto& traj : hf_traj)
    for (std::size_t s = 1; s < traj.size(); ++s) hf_snaps.push_back(traj.states[s]);

  ReducedSpace carried = opt.memoryless ? make_empty_space(fem.dof_count()) : es.w_space;
  ReducedSpace v_new = inflate(fem, carried, hf_snaps, eps_k * opt.inflate_ratio);

  if (v_new.dim() == 0) {
    // only reachable when every high-fidelity snapshot is zero
    for (std::size_t n = 0; n < np; ++n) out.control[n] = Vec::Zero(fem.dof_count());
    for (std::size_t m = 0; m < na; ++m) out.ancillary[m] = Vec::Zero(fem.dof_count());
    out.v_space = v_new;
    out.w_space = make_empty_space(fem.dof_count());
    if (diag) *diag = {eps_k, 0, 0, true};
    return out;
  }

  ReducedOperators red = build_reduced_operators(fem, v_new, model.params());

  std::vector<Trajectory> lf_traj(np + na);
  parallel_for(np + na, opt.threads, [&](std::size_t i) {
    const Vec& start = i < np ? es.principal[i] : es.ancillary[i - np];
    Vec c0 = project_state(fem, v_new, start);
    lf_traj[i] = reduced_flow(red, model.params(), c0, t_window);
  });
  for (std::size_t n = 0; n < np; ++n) out.control[n] = lift_state(v_new, lf_traj[n].last());
  for (std::size_t m = 0; m < na; ++m) out.ancillary[m] = lift_state(v_new, lf_traj[np + m].last());

  out.v_space = v_new;
  if (opt.memoryless) {
    out.w_space = make_empty_space(fem.dof_count());
  } else {
    std::vector<Vec> lf_coords;
    lf_coords.reserve(lf_traj.size() * (lf_traj.front().size() - 1));
    for (const auto& traj : lf_traj)
      for (std::size_t s = 1; s < traj.size(); ++s) lf_coords.push_back(traj.states[s]);
    out.w_space = deflate(fem, v_new, lf_coords, eps_k * (1.0 - opt.inflate_ratio));
  }

  if (diag) *diag = {eps_k, v_new.dim(), out.w_space.dim(), false};
  return out;
}

}  // namespace ahkf
