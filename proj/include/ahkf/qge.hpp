#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ahkf/fem.hpp"

namespace ahkf {

struct NonConvergence : std::runtime_error {
  NonConvergence(double res, int iters, int substep_idx = -1)
      : std::runtime_error("implicit midpoint solve did not converge (residual " +
                           std::to_string(res) + " after " + std::to_string(iters) +
                           " iterations)"),
        residual(res), iterations(iters), substep(substep_idx) {}
  double residual;
  int iterations;
  int substep;
};

/// Vorticity states at uniformly spaced times t0, t0+dt, ...
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Vec> states;

  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  const Vec& last() const { return states.back(); }
  std::size_t size() const { return states.size(); }
};

namespace detail {

inline void append_block(std::vector<Eigen::Triplet<double>>& t, const SparseMat& a,
                         int row0, int col0, double scale) {
  for (int col = 0; col < a.outerSize(); ++col)
    for (SparseMat::InnerIterator it(a, col); it; ++it)
      t.emplace_back(row0 + static_cast<int>(it.row()), col0 + col, scale * it.value());
}

}  // namespace detail

/// Full-order quasi-geostrophic model: implicit midpoint time stepping on the
/// vorticity unknown with the streamfunction eliminated through the coupled
/// system K psi = M omega. The state-independent part of the midpoint system
/// is factorized once; each step runs a fixed-matrix iteration on the
/// nonlinear residual and falls back to exact Newton if that stalls.
class QgeModel {
 public:
  QgeModel(std::shared_ptr<const FemOperators> ops, QgeParams params,
           bool include_nonlinear = true, std::optional<Vec> load_override = {})
      : ops_(std::move(ops)), p_(params), nonlinear_(include_nonlinear),
        load_(load_override ? *load_override : ops_->load) {
    if (p_.dt == 0.0) throw std::invalid_argument("QgeModel: dt must be nonzero");
    const int ni = ops_->dof_count();
    std::vector<Eigen::Triplet<double>> t;
    detail::append_block(t, ops_->mass, 0, 0, 1.0 / p_.dt);
    detail::append_block(t, ops_->stiffness, 0, 0, 0.5 * p_.ro / p_.re);
    detail::append_block(t, ops_->ddx, 0, ni, -1.0);
    detail::append_block(t, ops_->mass, ni, 0, -0.5);
    detail::append_block(t, ops_->stiffness, ni, ni, 1.0);
    SparseMat sys(2 * ni, 2 * ni);
    sys.setFromTriplets(t.begin(), t.end());
    midpoint_lu_ = std::make_shared<Eigen::SparseLU<SparseMat>>();
    midpoint_lu_->compute(sys);
    if (midpoint_lu_->info() != Eigen::Success)
      throw std::runtime_error("QgeModel: midpoint system factorization failed");
  }

  const QgeParams& params() const { return p_; }
  const FemOperators& ops() const { return *ops_; }
  const Vec& load() const { return load_; }

  /// psi from K psi = M omega.
  Vec streamfunction(const Vec& omega) const {
    return ops_->stiffness_solver->solve(ops_->mass * omega);
  }

  /// Stationary problem: -d(psi)/dx - (Ro/Re) Lap(omega) = F, omega + Lap(psi) = 0.
  std::pair<Vec, Vec> solve_stationary() const {
    const int ni = ops_->dof_count();
    std::vector<Eigen::Triplet<double>> t;
    detail::append_block(t, ops_->stiffness, 0, 0, p_.ro / p_.re);
    detail::append_block(t, ops_->ddx, 0, ni, -1.0);
    detail::append_block(t, ops_->mass, ni, 0, -1.0);
    detail::append_block(t, ops_->stiffness, ni, ni, 1.0);
    SparseMat sys(2 * ni, 2 * ni);
    sys.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<SparseMat> lu(sys);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("solve_stationary: singular stationary system");
    Vec rhs = Vec::Zero(2 * ni);
    rhs.head(ni) = load_;
    Vec x = lu.solve(rhs);
    double res = (sys * x - rhs).norm();
    double scale = std::max(rhs.norm(), 1e-30);
    if (!(res <= 1e-10 * std::max(1.0, scale) || res <= 1e-10))
      throw std::runtime_error("solve_stationary: residual check failed");
    return {x.head(ni), x.tail(ni)};
  }

  /// One implicit midpoint step of length dt.
  Vec step(const Vec& omega_in, int substep_idx = -1) const {
    const int ni = ops_->dof_count();
    if (omega_in.size() != ni) throw std::invalid_argument("step: dimension mismatch");

    Vec omega = omega_in;                        // current iterate for omega^+
    Vec psi = streamfunction(omega_in);          // midpoint streamfunction iterate
    Vec residual(2 * ni);

    auto eval_residual = [&](const Vec& w, const Vec& s, Vec& r) {
      Vec w_mid = 0.5 * (w + omega_in);
      r.head(ni) = ops_->mass * (w - omega_in) / p_.dt - ops_->ddx * s +
                   (p_.ro / p_.re) * (ops_->stiffness * w_mid) - load_;
      if (nonlinear_) r.head(ni) += p_.ro * apply_trilinear(*ops_, w_mid, s);
      r.tail(ni) = ops_->stiffness * s - ops_->mass * w_mid;
      return r.norm();
    };

    double res = eval_residual(omega, psi, residual);
    int iter = 0;
    const int quasi_cap = std::max(p_.newton_max_iter, 40);
    double prev = std::numeric_limits<double>::infinity();

    // fixed-matrix phase: one backsolve with the prefactorized system per pass
    while (res > p_.newton_tol && iter < quasi_cap) {
      if (iter >= 6 && res > 0.25 * prev) break;  // stalling, use exact Newton
      Vec delta = midpoint_lu_->solve(-residual);
      omega += delta.head(ni);
      psi += delta.tail(ni);
      prev = res;
      res = eval_residual(omega, psi, residual);
      ++iter;
    }

    // exact Newton phase with the analytic Jacobian of the midpoint residual
    int newton_iter = 0;
    while (res > p_.newton_tol && newton_iter < p_.newton_max_iter) {
      Vec w_mid = 0.5 * (omega + omega_in);
      std::vector<Eigen::Triplet<double>> t;
      detail::append_block(t, ops_->mass, 0, 0, 1.0 / p_.dt);
      detail::append_block(t, ops_->stiffness, 0, 0, 0.5 * p_.ro / p_.re);
      detail::append_block(t, ops_->ddx, 0, ni, -1.0);
      detail::append_block(t, ops_->mass, ni, 0, -0.5);
      detail::append_block(t, ops_->stiffness, ni, ni, 1.0);
      if (nonlinear_) {
        detail::append_block(t, trilinear_d_omega(*ops_, psi), 0, 0, 0.5 * p_.ro);
        detail::append_block(t, trilinear_d_psi(*ops_, w_mid), 0, ni, p_.ro);
      }
      SparseMat jac(2 * ni, 2 * ni);
      jac.setFromTriplets(t.begin(), t.end());
      Eigen::SparseLU<SparseMat> lu(jac);
      if (lu.info() != Eigen::Success) throw NonConvergence(res, iter + newton_iter, substep_idx);
      Vec delta = lu.solve(-residual);
      omega += delta.head(ni);
      psi += delta.tail(ni);
      res = eval_residual(omega, psi, residual);
      ++newton_iter;
    }

    if (res > p_.newton_tol) throw NonConvergence(res, iter + newton_iter, substep_idx);
    return omega;
  }

  /// Advance over a window that is a positive multiple of dt, recording every
  /// sub-step (the first trajectory state is the input).
  Trajectory flow(const Vec& omega_in, double t_window, double t0 = 0.0) const {
    double ratio = t_window / p_.dt;
    auto n_s = static_cast<long long>(std::llround(ratio));
    if (n_s < 1 || std::abs(ratio - static_cast<double>(n_s)) > 1e-9)
      throw std::invalid_argument("flow: window must be a positive multiple of dt");
    Trajectory traj;
    traj.t0 = t0;
    traj.dt = p_.dt;
    traj.states.reserve(static_cast<std::size_t>(n_s) + 1);
    traj.states.push_back(omega_in);
    for (long long s = 0; s < n_s; ++s) {
      try {
        traj.states.push_back(step(traj.states.back(), static_cast<int>(s)));
      } catch (const NonConvergence& e) {
        throw NonConvergence(e.residual, e.iterations, static_cast<int>(s));
      }
    }
    return traj;
  }

 private:
  std::shared_ptr<const FemOperators> ops_;
  QgeParams p_;
  bool nonlinear_;
  Vec load_;
  std::shared_ptr<Eigen::SparseLU<SparseMat>> midpoint_lu_;
};

}  // namespace ahkf
