#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "ahkf/mesh.hpp"

namespace ahkf {

using SparseMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct QgeParams {
  double ro = 0.001;
  double re = 100.0;
  double dt = 0.1;
  double newton_tol = 1e-10;
  int newton_max_iter = 25;
};

namespace detail {

/// Per-triangle geometry: vertex ids, P1 basis gradients, area.
struct ElementData {
  int n[3];
  double gx[3];
  double gy[3];
  double area;
};

inline ElementData element_data(const Mesh& mesh, const std::array<int, 3>& tri) {
  ElementData e;
  Eigen::Vector2d p[3];
  for (int a = 0; a < 3; ++a) {
    e.n[a] = tri[a];
    p[a] = mesh.nodes[tri[a]];
  }
  double det = (p[1].x() - p[0].x()) * (p[2].y() - p[0].y()) -
               (p[2].x() - p[0].x()) * (p[1].y() - p[0].y());
  e.area = 0.5 * det;
  // grad of barycentric basis a: ((y_b - y_c), (x_c - x_b)) / det
  for (int a = 0; a < 3; ++a) {
    const auto& pb = p[(a + 1) % 3];
    const auto& pc = p[(a + 2) % 3];
    e.gx[a] = (pb.y() - pc.y()) / det;
    e.gy[a] = (pc.x() - pb.x()) / det;
  }
  return e;
}

}  // namespace detail

/// Assembled discrete operators for one mesh. The interior-restricted
/// matrices (Dirichlet dofs eliminated) drive the solvers; the full nodal
/// assemblies stay available for quadrature-level checks.
struct FemOperators {
  Mesh mesh;
  double ro = 0.001;
  double re = 100.0;

  // interior dofs
  SparseMat mass;
  SparseMat stiffness;
  SparseMat ddx;  // (ddx u)_i = integral of (du/dx) phi_i
  Vec load;       // forcing F = sin(pi(y-1))/2 tested against interior phi_i

  // full nodal assemblies, before boundary elimination
  SparseMat mass_full;
  SparseMat stiffness_full;
  SparseMat ddx_full;

  std::vector<int> obs_dofs;  // 361 interior dofs at (i/20, j/20), row-major in (i,j)
  std::vector<detail::ElementData> elements;

  std::shared_ptr<Eigen::SimplicialLDLT<SparseMat>> stiffness_solver;

  mutable std::atomic<std::uint64_t> trilinear_applies{0};

  int dof_count() const { return static_cast<int>(mass.rows()); }

  FemOperators() = default;
  FemOperators(const FemOperators& o)
      : mesh(o.mesh), ro(o.ro), re(o.re), mass(o.mass), stiffness(o.stiffness),
        ddx(o.ddx), load(o.load), mass_full(o.mass_full),
        stiffness_full(o.stiffness_full), ddx_full(o.ddx_full),
        obs_dofs(o.obs_dofs), elements(o.elements),
        stiffness_solver(o.stiffness_solver) {}
};

inline double forcing_term(double /*x*/, double y) {
  return 0.5 * std::sin(M_PI * (y - 1.0));
}

inline FemOperators assemble_operators(const Mesh& mesh, const QgeParams& params = {}) {
  FemOperators ops;
  ops.mesh = mesh;
  ops.ro = params.ro;
  ops.re = params.re;

  const int nn = mesh.node_count();
  const int ni = mesh.interior_count();

  std::vector<Eigen::Triplet<double>> tm, tk, td;
  Vec load_full = Vec::Zero(nn);

  ops.elements.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    auto e = detail::element_data(mesh, tri);
    ops.elements.push_back(e);
    const double A = e.area;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        tm.emplace_back(e.n[a], e.n[b], (a == b ? A / 6.0 : A / 12.0));
        tk.emplace_back(e.n[a], e.n[b], A * (e.gx[a] * e.gx[b] + e.gy[a] * e.gy[b]));
        td.emplace_back(e.n[a], e.n[b], A / 3.0 * e.gx[b]);
      }
    }
    // 3-point edge-midpoint rule, exact for quadratics
    Eigen::Vector2d p[3];
    for (int a = 0; a < 3; ++a) p[a] = mesh.nodes[e.n[a]];
    for (int edge = 0; edge < 3; ++edge) {
      Eigen::Vector2d mid = 0.5 * (p[(edge + 1) % 3] + p[(edge + 2) % 3]);
      double f = forcing_term(mid.x(), mid.y());
      // phi_a at the midpoint opposite vertex `edge` is 0; 1/2 at the others
      load_full[e.n[(edge + 1) % 3]] += A / 3.0 * 0.5 * f;
      load_full[e.n[(edge + 2) % 3]] += A / 3.0 * 0.5 * f;
    }
  }

  ops.mass_full.resize(nn, nn);
  ops.mass_full.setFromTriplets(tm.begin(), tm.end());
  ops.stiffness_full.resize(nn, nn);
  ops.stiffness_full.setFromTriplets(tk.begin(), tk.end());
  ops.ddx_full.resize(nn, nn);
  ops.ddx_full.setFromTriplets(td.begin(), td.end());

  auto restrict_interior = [&](const SparseMat& full) {
    std::vector<Eigen::Triplet<double>> t;
    for (int col = 0; col < full.outerSize(); ++col) {
      int jc = mesh.interior_index[col];
      if (jc < 0) continue;
      for (SparseMat::InnerIterator it(full, col); it; ++it) {
        int ir = mesh.interior_index[it.row()];
        if (ir >= 0) t.emplace_back(ir, jc, it.value());
      }
    }
    SparseMat out(ni, ni);
    out.setFromTriplets(t.begin(), t.end());
    return out;
  };

  ops.mass = restrict_interior(ops.mass_full);
  ops.stiffness = restrict_interior(ops.stiffness_full);
  ops.ddx = restrict_interior(ops.ddx_full);

  ops.load.resize(ni);
  for (int d = 0; d < ni; ++d) ops.load[d] = load_full[mesh.interior_nodes[d]];

  if (mesh.observation_aligned()) {
    const int stride = (mesh.nx - 1) / 20;
    ops.obs_dofs.reserve(361);
    for (int i = 1; i <= 19; ++i)
      for (int j = 1; j <= 19; ++j)
        ops.obs_dofs.push_back(mesh.interior_index[mesh.node_id(i * stride, j * stride)]);
  }

  ops.stiffness_solver = std::make_shared<Eigen::SimplicialLDLT<SparseMat>>();
  ops.stiffness_solver->compute(ops.stiffness);
  if (ops.stiffness_solver->info() != Eigen::Success)
    throw std::runtime_error("assemble_operators: stiffness factorization failed");

  return ops;
}

/// J(omega, psi, .) assembled against every interior test function:
/// out_i = integral of psi * (d_y omega * d_x phi_i - d_x omega * d_y phi_i).
/// Exact for P1 arguments (integrand is linear per element).
inline Vec apply_trilinear(const FemOperators& ops, const Vec& omega, const Vec& psi) {
  const int ni = ops.dof_count();
  if (omega.size() != ni || psi.size() != ni)
    throw std::invalid_argument("apply_trilinear: dimension mismatch");
  ops.trilinear_applies.fetch_add(1, std::memory_order_relaxed);

  const auto& idx = ops.mesh.interior_index;
  Vec out = Vec::Zero(ni);
  for (const auto& e : ops.elements) {
    double w[3], s[3];
    for (int a = 0; a < 3; ++a) {
      int d = idx[e.n[a]];
      w[a] = d >= 0 ? omega[d] : 0.0;
      s[a] = d >= 0 ? psi[d] : 0.0;
    }
    double gx = w[0] * e.gx[0] + w[1] * e.gx[1] + w[2] * e.gx[2];
    double gy = w[0] * e.gy[0] + w[1] * e.gy[1] + w[2] * e.gy[2];
    double psi_bar = (s[0] + s[1] + s[2]) / 3.0;
    double c = e.area * psi_bar;
    for (int a = 0; a < 3; ++a) {
      int d = idx[e.n[a]];
      if (d >= 0) out[d] += c * (gy * e.gx[a] - gx * e.gy[a]);
    }
  }
  return out;
}

/// Linearizations of the trilinear form, assembled as sparse matrices:
/// (trilinear_d_omega(psi) u)_i = J(u, psi, phi_i) and
/// (trilinear_d_psi(omega) v)_i = J(omega, v, phi_i).
inline SparseMat trilinear_d_omega(const FemOperators& ops, const Vec& psi) {
  const int ni = ops.dof_count();
  const auto& idx = ops.mesh.interior_index;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(ops.elements.size() * 9);
  for (const auto& e : ops.elements) {
    double s[3];
    for (int a = 0; a < 3; ++a) {
      int d = idx[e.n[a]];
      s[a] = d >= 0 ? psi[d] : 0.0;
    }
    double c = e.area * (s[0] + s[1] + s[2]) / 3.0;
    for (int a = 0; a < 3; ++a) {
      int ia = idx[e.n[a]];
      if (ia < 0) continue;
      for (int b = 0; b < 3; ++b) {
        int jb = idx[e.n[b]];
        if (jb < 0) continue;
        t.emplace_back(ia, jb, c * (e.gy[b] * e.gx[a] - e.gx[b] * e.gy[a]));
      }
    }
  }
  SparseMat out(ni, ni);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

inline SparseMat trilinear_d_psi(const FemOperators& ops, const Vec& omega) {
  const int ni = ops.dof_count();
  const auto& idx = ops.mesh.interior_index;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(ops.elements.size() * 9);
  for (const auto& e : ops.elements) {
    double w[3];
    for (int a = 0; a < 3; ++a) {
      int d = idx[e.n[a]];
      w[a] = d >= 0 ? omega[d] : 0.0;
    }
    double gx = w[0] * e.gx[0] + w[1] * e.gx[1] + w[2] * e.gx[2];
    double gy = w[0] * e.gy[0] + w[1] * e.gy[1] + w[2] * e.gy[2];
    for (int a = 0; a < 3; ++a) {
      int ia = idx[e.n[a]];
      if (ia < 0) continue;
      double r = gy * e.gx[a] - gx * e.gy[a];
      for (int b = 0; b < 3; ++b) {
        int jb = idx[e.n[b]];
        if (jb < 0) continue;
        t.emplace_back(ia, jb, e.area / 3.0 * r);
      }
    }
  }
  SparseMat out(ni, ni);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Point evaluation at the 19x19 lattice, row-major in (i, j).
inline Vec observe(const FemOperators& ops, const Vec& omega) {
  if (ops.obs_dofs.empty())
    throw std::logic_error("observe: mesh is not observation-aligned");
  Vec d(static_cast<Eigen::Index>(ops.obs_dofs.size()));
  for (std::size_t k = 0; k < ops.obs_dofs.size(); ++k) d[k] = omega[ops.obs_dofs[k]];
  return d;
}

inline double v_inner(const FemOperators& ops, const Vec& a, const Vec& b) {
  if (a.size() != ops.dof_count() || b.size() != ops.dof_count())
    throw std::invalid_argument("v_inner: dimension mismatch");
  return a.dot(ops.mass * b);
}

inline double v_norm(const FemOperators& ops, const Vec& a) {
  return std::sqrt(std::max(0.0, v_inner(ops, a, a)));
}

/// Pre-elimination L2 inner product over all nodes (boundary included).
inline double v_inner_full(const FemOperators& ops, const Vec& a, const Vec& b) {
  return a.dot(ops.mass_full * b);
}

}  // namespace ahkf
