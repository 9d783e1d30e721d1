#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ahkf/fem.hpp"
#include "ahkf/pod.hpp"
#include "ahkf/qge.hpp"

namespace ahkf {

struct DegenerateReducedModel : std::logic_error {
  DegenerateReducedModel() : std::logic_error("reduced model has dimension 0") {}
};

/// Galerkin projection of the vorticity model onto a reduced space. The
/// quadratic term is stored flat: quad.col(j*n + l) = Phi^T J(phi_j, z_l, .),
/// so the nonlinearity projects exactly (no hyper-reduction needed).
struct ReducedOperators {
  Mat stiffness_r;  // Phi^T K Phi
  Mat ddx_r;        // Phi^T Dx Z
  Mat quad;         // n x n^2
  Vec load_r;       // Phi^T F
  Mat obs_r;        // 361 x n (empty when the mesh has no observation lattice)
  double ro = 0.0;
  double re = 0.0;
  int dim = 0;

  /// N(c)_i = sum_{j,l} quad(i, j*n+l) c_j c_l.
  Vec quadratic(const Vec& c) const {
    Mat outer = c * c.transpose();  // (l, j) entry = c_l c_j at flat index j*n+l
    return quad * Eigen::Map<const Vec>(outer.data(), outer.size());
  }

  /// Derivative of the quadratic term at c (both argument slots).
  Mat quadratic_jacobian(const Vec& c) const {
    Mat jac = Mat::Zero(dim, dim);
    for (int j = 0; j < dim; ++j) {
      jac.col(j) += quad.middleCols(static_cast<Eigen::Index>(j) * dim, dim) * c;
      jac += c[j] * quad.middleCols(static_cast<Eigen::Index>(j) * dim, dim);
    }
    return jac;
  }
};

inline ReducedOperators build_reduced_operators(const FemOperators& ops,
                                                const ReducedSpace& space,
                                                const QgeParams& params) {
  if (space.full_space)
    throw std::logic_error("build_reduced_operators: sentinel space delegates to the full model");
  const int n = space.dim();
  if (n == 0) throw DegenerateReducedModel();

  ReducedOperators red;
  red.dim = n;
  red.ro = params.ro;
  red.re = params.re;
  red.stiffness_r = space.basis.transpose() * (ops.stiffness * space.basis);
  red.ddx_r = space.basis.transpose() * (ops.ddx * space.psi_basis);
  red.load_r = space.basis.transpose() * ops.load;

  if (!ops.obs_dofs.empty()) {
    red.obs_r.resize(static_cast<Eigen::Index>(ops.obs_dofs.size()), n);
    for (std::size_t k = 0; k < ops.obs_dofs.size(); ++k)
      red.obs_r.row(k) = space.basis.row(ops.obs_dofs[k]);
  }

  red.quad.resize(n, static_cast<Eigen::Index>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      red.quad.col(static_cast<Eigen::Index>(j) * n + l) =
          space.basis.transpose() *
          apply_trilinear(ops, space.basis.col(j), space.psi_basis.col(l));
  return red;
}

namespace detail {

/// Reduced residual equals Phi^T of the full midpoint residual at the lifted
/// state, so the same absolute Newton tolerance applies.
inline Vec reduced_midpoint_step(const ReducedOperators& red, const QgeParams& p,
                                 const Vec& c_in, int substep_idx) {
  const int n = red.dim;
  Vec c = c_in;
  Mat linear = (red.ro / red.re) * red.stiffness_r - red.ddx_r;

  auto residual = [&](const Vec& cp) {
    Vec c_mid = 0.5 * (cp + c_in);
    return Vec((cp - c_in) / p.dt + linear * c_mid + red.ro * red.quadratic(c_mid) - red.load_r);
  };

  Vec r = residual(c);
  int iter = 0;
  while (r.norm() > p.newton_tol) {
    if (iter >= p.newton_max_iter) throw NonConvergence(r.norm(), iter, substep_idx);
    Vec c_mid = 0.5 * (c + c_in);
    Mat jac = Mat::Identity(n, n) / p.dt +
              0.5 * (linear + red.ro * red.quadratic_jacobian(c_mid));
    c += jac.partialPivLu().solve(-r);
    r = residual(c);
    ++iter;
  }
  return c;
}

}  // namespace detail

/// Implicit midpoint on the reduced model with the same dt and tolerance as
/// the full flow; trajectory states are reduced coordinates.
inline Trajectory reduced_flow(const ReducedOperators& red, const QgeParams& params,
                               const Vec& c_in, double t_window, double t0 = 0.0) {
  double ratio = t_window / params.dt;
  auto n_s = static_cast<long long>(std::llround(ratio));
  if (n_s < 1 || std::abs(ratio - static_cast<double>(n_s)) > 1e-9)
    throw std::invalid_argument("reduced_flow: window must be a positive multiple of dt");
  if (c_in.size() != red.dim) throw std::invalid_argument("reduced_flow: dimension mismatch");

  Trajectory traj;
  traj.t0 = t0;
  traj.dt = params.dt;
  traj.states.reserve(static_cast<std::size_t>(n_s) + 1);
  traj.states.push_back(c_in);
  for (long long s = 0; s < n_s; ++s)
    traj.states.push_back(
        detail::reduced_midpoint_step(red, params, traj.states.back(), static_cast<int>(s)));
  return traj;
}

}  // namespace ahkf
