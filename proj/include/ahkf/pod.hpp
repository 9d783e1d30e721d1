#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ahkf/fem.hpp"

namespace ahkf {

struct PodResult {
  Mat basis;          // V-orthonormal columns spanning the dominant eigenspace
  Vec eigenvalues;    // descending, all retained modes
  double discarded_energy = 0.0;

  int dim() const { return static_cast<int>(basis.cols()); }
};

namespace detail {

/// Shared selection rule: eigenvalues descending, values below 1e-14 * max
/// treated as zero, smallest n with tail sum <= tolerance.
inline int select_pod_dim(Vec& gamma, double tolerance_abs, double* discarded) {
  const double floor_val = gamma.size() > 0 ? 1e-14 * std::max(gamma[0], 0.0) : 0.0;
  for (Eigen::Index i = 0; i < gamma.size(); ++i)
    if (gamma[i] < floor_val || gamma[i] < 0.0) gamma[i] = 0.0;
  int n = static_cast<int>(gamma.size());
  double tail = 0.0;
  while (n > 0 && tail + gamma[n - 1] <= tolerance_abs) {
    tail += gamma[n - 1];
    --n;
  }
  // zero modes are never part of the basis
  while (n > 0 && gamma[n - 1] == 0.0) --n;
  *discarded = 0.0;
  for (Eigen::Index i = n; i < gamma.size(); ++i) *discarded += gamma[i];
  return n;
}

}  // namespace detail

/// POD through the mean-normalized Gramian G_pq = (s_p, s_q)_V / count.
/// The retained basis spans the dominant eigenspace; the discarded eigenvalue
/// sum bounds the mean squared projection error of the training set.
inline PodResult pod(const SparseMat& mass, const std::vector<Vec>& snapshots,
                     double tolerance_abs) {
  if (snapshots.empty()) throw std::invalid_argument("pod: empty snapshot set");
  if (tolerance_abs < 0.0) throw std::invalid_argument("pod: negative tolerance");
  const auto s = static_cast<Eigen::Index>(snapshots.size());
  const Eigen::Index nd = snapshots.front().size();

  Mat snap(nd, s);
  for (Eigen::Index p = 0; p < s; ++p) snap.col(p) = snapshots[p];
  Mat weighted = mass * snap;
  Mat gram = (snap.transpose() * weighted) / static_cast<double>(s);

  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  if (es.info() != Eigen::Success) throw std::runtime_error("pod: eigensolver failed");
  Vec gamma = es.eigenvalues().reverse();

  PodResult result;
  int n = detail::select_pod_dim(gamma, tolerance_abs, &result.discarded_energy);
  result.eigenvalues = gamma;
  result.basis.resize(nd, n);
  for (int i = 0; i < n; ++i) {
    Vec a = es.eigenvectors().col(s - 1 - i);
    result.basis.col(i) = snap * a / std::sqrt(static_cast<double>(s) * gamma[i]);
  }
  return result;
}

/// POD of coordinate vectors under the Euclidean inner product, via the
/// dim x dim correlation matrix (cheap when the snapshot count exceeds the
/// coordinate dimension).
inline PodResult pod_euclidean(const std::vector<Vec>& coords, double tolerance_abs) {
  if (coords.empty()) throw std::invalid_argument("pod_euclidean: empty snapshot set");
  const auto s = static_cast<Eigen::Index>(coords.size());
  const Eigen::Index n = coords.front().size();

  Mat c(n, s);
  for (Eigen::Index p = 0; p < s; ++p) c.col(p) = coords[p];
  Mat corr = c * c.transpose() / static_cast<double>(s);

  Eigen::SelfAdjointEigenSolver<Mat> es(corr);
  if (es.info() != Eigen::Success) throw std::runtime_error("pod_euclidean: eigensolver failed");
  Vec gamma = es.eigenvalues().reverse();

  PodResult result;
  int dim = detail::select_pod_dim(gamma, tolerance_abs, &result.discarded_energy);
  result.eigenvalues = gamma;
  result.basis.resize(n, dim);
  for (int i = 0; i < dim; ++i) result.basis.col(i) = es.eigenvectors().col(n - 1 - i);
  return result;
}

/// Reduced vorticity space with the paired streamfunction basis K z_i = M phi_i.
/// The full-space sentinel stands for "surrogate equals the full model" and
/// carries no explicit basis.
struct ReducedSpace {
  Mat basis;      // N x n, M-orthonormal
  Mat psi_basis;  // N x n
  bool full_space = false;
  int full_dim = 0;

  int dim() const { return full_space ? full_dim : static_cast<int>(basis.cols()); }
  bool empty() const { return !full_space && basis.cols() == 0; }
};

inline ReducedSpace make_empty_space(int n_dof) {
  ReducedSpace s;
  s.basis.resize(n_dof, 0);
  s.psi_basis.resize(n_dof, 0);
  return s;
}

inline ReducedSpace make_full_space_sentinel(int n_dof) {
  ReducedSpace s;
  s.full_space = true;
  s.full_dim = n_dof;
  return s;
}

inline ReducedSpace make_reduced_space(const FemOperators& ops, const Mat& basis) {
  ReducedSpace s;
  s.basis = basis;
  s.psi_basis.resize(basis.rows(), basis.cols());
  for (Eigen::Index i = 0; i < basis.cols(); ++i)
    s.psi_basis.col(i) = ops.stiffness_solver->solve(ops.mass * basis.col(i));
  return s;
}

inline Vec project_state(const FemOperators& ops, const ReducedSpace& space, const Vec& x) {
  if (space.full_space) return x;
  if (x.size() != space.basis.rows())
    throw std::invalid_argument("project_state: dimension mismatch");
  return space.basis.transpose() * (ops.mass * x);
}

inline Vec lift_state(const ReducedSpace& space, const Vec& c) {
  if (space.full_space) return c;
  if (c.size() != space.basis.cols())
    throw std::invalid_argument("lift_state: dimension mismatch");
  return space.basis * c;
}

/// V-orthogonal projection onto the space.
inline Vec project_onto(const FemOperators& ops, const ReducedSpace& space, const Vec& x) {
  if (space.full_space) return x;
  return space.basis * (space.basis.transpose() * (ops.mass * x));
}

namespace detail {

/// Modified Gram-Schmidt in the M inner product with one re-pass; columns
/// that collapse numerically are dropped.
inline Mat m_orthonormalize(const FemOperators& ops, const Mat& cols) {
  Mat q(cols.rows(), cols.cols());
  int kept = 0;
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    Vec v = cols.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < kept; ++i) v -= v_inner(ops, q.col(i), v) * q.col(i);
    double norm = v_norm(ops, v);
    if (norm < 1e-10) continue;
    q.col(kept++) = v / norm;
  }
  return q.leftCols(kept);
}

}  // namespace detail

/// Expands the carried space with POD modes of the high-fidelity snapshot
/// residuals (components orthogonal to the previous space).
inline ReducedSpace inflate(const FemOperators& ops, const ReducedSpace& w_prev,
                            const std::vector<Vec>& hf_snapshots, double eps_half) {
  if (w_prev.full_space) return w_prev;
  if (eps_half < 0.0) throw std::invalid_argument("inflate: negative tolerance");
  if (hf_snapshots.empty()) return w_prev;

  std::vector<Vec> residuals;
  residuals.reserve(hf_snapshots.size());
  double snap_energy = 0.0;
  double resid_energy = 0.0;
  for (const Vec& s : hf_snapshots) {
    Vec r = s - project_onto(ops, w_prev, s);
    snap_energy += v_inner(ops, s, s);
    resid_energy += v_inner(ops, r, r);
    residuals.push_back(std::move(r));
  }
  // residuals at roundoff level carry no information
  if (resid_energy <= 1e-24 * std::max(snap_energy, 1e-300)) return w_prev;

  PodResult fresh = pod(ops.mass, residuals, eps_half);
  if (fresh.dim() == 0) return w_prev;

  Mat joint(ops.dof_count(), w_prev.dim() + fresh.dim());
  joint.leftCols(w_prev.dim()) = w_prev.basis;
  joint.rightCols(fresh.dim()) = fresh.basis;
  return make_reduced_space(ops, detail::m_orthonormalize(ops, joint));
}

/// Compresses the space by POD of the low-fidelity trajectories, expressed in
/// reduced coordinates (Euclidean there, since the basis is V-orthonormal).
inline ReducedSpace deflate(const FemOperators& ops, const ReducedSpace& v_curr,
                            const std::vector<Vec>& lf_reduced_coords, double eps_half) {
  if (v_curr.full_space)
    throw std::logic_error("deflate: full-space sentinel has no reduced coordinates");
  if (lf_reduced_coords.empty()) return make_empty_space(ops.dof_count());
  if (lf_reduced_coords.front().size() != v_curr.basis.cols())
    throw std::invalid_argument("deflate: coordinate dimension mismatch");

  PodResult kept = pod_euclidean(lf_reduced_coords, eps_half);
  ReducedSpace w;
  w.basis = v_curr.basis * kept.basis;
  w.psi_basis = v_curr.psi_basis * kept.basis;
  return w;
}

namespace detail {

inline double centered_energy(const SparseMat& mass, const std::vector<Vec>& ens, Vec* mean_out = nullptr) {
  Vec mean = Vec::Zero(ens.front().size());
  for (const Vec& w : ens) mean += w;
  mean /= static_cast<double>(ens.size());
  double total = 0.0;
  for (const Vec& w : ens) {
    Vec d = w - mean;
    total += d.dot(mass * d);
  }
  if (mean_out) *mean_out = mean;
  return total;
}

inline double tolerance_floor(const SparseMat& mass, const std::vector<Vec>& principal) {
  double mean_sq = detail::centered_energy(mass, principal) / static_cast<double>(principal.size());
  return mean_sq > 0.0 ? 1e-14 * mean_sq : 1e-300;
}

}  // namespace detail

/// Multi-level trace estimator of the state covariance, scaled by 2*eps_r and
/// floored to keep the downstream POD well posed.
inline double adaptive_tolerance_ml(const SparseMat& mass, const std::vector<Vec>& principal,
                                    const std::vector<Vec>& control,
                                    const std::vector<Vec>& ancillary, double eps_r) {
  if (principal.size() < 2 || ancillary.size() < 2 || control.size() != principal.size())
    throw std::invalid_argument("adaptive_tolerance_ml: ensembles too small");
  const double np = static_cast<double>(principal.size());
  const double na = static_cast<double>(ancillary.size());
  double eps = 2.0 * eps_r / (np - 1.0) *
                   (detail::centered_energy(mass, principal) - detail::centered_energy(mass, control)) +
               2.0 * eps_r / (na - 1.0) * detail::centered_energy(mass, ancillary);
  return std::max(eps, detail::tolerance_floor(mass, principal));
}

/// Control-variates trace estimator (pairs principal and control members by
/// index).
inline double adaptive_tolerance_mf(const SparseMat& mass, const std::vector<Vec>& principal,
                                    const std::vector<Vec>& control,
                                    const std::vector<Vec>& ancillary, double eps_r) {
  if (principal.size() < 2 || ancillary.size() < 2 || control.size() != principal.size())
    throw std::invalid_argument("adaptive_tolerance_mf: ensembles too small");
  const double np = static_cast<double>(principal.size());
  const double na = static_cast<double>(ancillary.size());

  Vec mean_p, mean_c;
  double energy_p = detail::centered_energy(mass, principal, &mean_p);
  double energy_c = detail::centered_energy(mass, control, &mean_c);
  double cross = 0.0;
  for (std::size_t n = 0; n < principal.size(); ++n) {
    Vec dp = principal[n] - mean_p;
    Vec dc = control[n] - mean_c;
    cross += dp.dot(mass * dc);
  }

  double eps = 0.5 * eps_r / (na - 1.0) * detail::centered_energy(mass, ancillary) +
               2.0 * eps_r / (np - 1.0) * (energy_p - cross + 0.25 * energy_c);
  return std::max(eps, detail::tolerance_floor(mass, principal));
}

}  // namespace ahkf
