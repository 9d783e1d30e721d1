#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ahkf/fem.hpp"
#include "ahkf/rng.hpp"

namespace ahkf {

/// Smallest generalized eigenpairs of (K, M): K xi = lambda M xi, columns
/// M-orthonormal, eigenvalues ascending.
struct LaplacianEigenbasis {
  Vec eigenvalues;
  Mat eigenvectors;

  int mode_count() const { return static_cast<int>(eigenvalues.size()); }
};

inline LaplacianEigenbasis build_laplacian_eigenbasis(const FemOperators& ops, int n_modes) {
  const int ni = ops.dof_count();
  if (n_modes < 1 || n_modes > ni)
    throw std::invalid_argument("build_laplacian_eigenbasis: n_modes out of range");
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(ops.stiffness), Mat(ops.mass));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("build_laplacian_eigenbasis: eigensolver failed");
  LaplacianEigenbasis basis;
  basis.eigenvalues = es.eigenvalues().head(n_modes);
  basis.eigenvectors = es.eigenvectors().leftCols(n_modes);
  return basis;
}

/// Draws from the zero-mean Gaussian with inverse-Laplacian covariance:
/// omega = sum_i lambda_i^{-1/2} z_i xi_i, z_i iid standard normal.
inline std::vector<Vec> sample_smooth_prior(const LaplacianEigenbasis& basis,
                                            RngStream& stream, int count) {
  const int m = basis.mode_count();
  Vec scale = basis.eigenvalues.array().sqrt().inverse();
  std::vector<Vec> out;
  out.reserve(count);
  for (int n = 0; n < count; ++n) {
    Vec z = stream.normal_vector(m);
    out.push_back(basis.eigenvectors * (scale.asDiagonal() * z));
  }
  return out;
}

/// Empirical sampling pool built from long-horizon trajectory snapshots.
struct InvariantArchive {
  std::vector<Vec> snapshots;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// Uniform resampling from the archive; an optional jitter adds an
/// independent smooth-prior draw scaled by sigma_jit (guards against rank
/// deficiency when the ensemble outnumbers the archive).
inline std::vector<Vec> sample_invariant_prior(const InvariantArchive& archive,
                                               RngStream& stream, int count,
                                               double sigma_jit = 0.0,
                                               const LaplacianEigenbasis* basis = nullptr) {
  if (archive.snapshots.empty())
    throw std::invalid_argument("sample_invariant_prior: empty archive");
  if (sigma_jit != 0.0 && basis == nullptr)
    throw std::invalid_argument("sample_invariant_prior: jitter requires an eigenbasis");
  std::vector<Vec> out;
  out.reserve(count);
  for (int n = 0; n < count; ++n) {
    const Vec& snap = archive.snapshots[stream.uniform_index(archive.snapshots.size())];
    if (sigma_jit == 0.0) {
      out.push_back(snap);
    } else {
      Vec z = stream.normal_vector(basis->mode_count());
      Vec scale = basis->eigenvalues.array().sqrt().inverse();
      out.push_back(snap + sigma_jit * (basis->eigenvectors * (scale.asDiagonal() * z)));
    }
  }
  return out;
}

}  // namespace ahkf
