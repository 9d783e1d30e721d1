#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ahkf/rng.hpp"

namespace ahkf {

/// Structured uniform triangulation of the unit square. Nodes are row-major
/// (id = iy*nx + ix), each grid cell is split along the (0,0)-(1,1) diagonal.
struct Mesh {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<bool> interior;        // per node
  std::vector<int> interior_index;   // node id -> interior dof, or -1
  std::vector<int> interior_nodes;   // interior dof -> node id

  int node_count() const { return nx * ny; }
  int interior_count() const { return static_cast<int>(interior_nodes.size()); }

  int node_id(int ix, int iy) const { return iy * nx + ix; }

  /// Measurement lattice alignment: every (i/20, j/20) is a mesh node.
  bool observation_aligned() const { return (nx - 1) % 20 == 0; }

  std::uint64_t hash() const {
    std::uint64_t k = detail::splitmix64(static_cast<std::uint64_t>(nx));
    return detail::splitmix64(k ^ static_cast<std::uint64_t>(ny));
  }
};

namespace detail {

inline Mesh build_uniform_mesh(int nx, int ny) {
  Mesh m;
  m.nx = nx;
  m.ny = ny;
  m.h = 1.0 / (nx - 1);
  m.nodes.reserve(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      m.nodes.emplace_back(ix * m.h, iy * m.h);

  m.triangles.reserve(2 * static_cast<std::size_t>(nx - 1) * (ny - 1));
  for (int iy = 0; iy < ny - 1; ++iy) {
    for (int ix = 0; ix < nx - 1; ++ix) {
      int n00 = m.node_id(ix, iy);
      int n10 = m.node_id(ix + 1, iy);
      int n01 = m.node_id(ix, iy + 1);
      int n11 = m.node_id(ix + 1, iy + 1);
      m.triangles.push_back({n00, n10, n11});
      m.triangles.push_back({n00, n11, n01});
    }
  }

  m.interior.resize(m.node_count());
  m.interior_index.assign(m.node_count(), -1);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      bool inside = ix > 0 && ix < nx - 1 && iy > 0 && iy < ny - 1;
      int id = m.node_id(ix, iy);
      m.interior[id] = inside;
      if (inside) {
        m.interior_index[id] = static_cast<int>(m.interior_nodes.size());
        m.interior_nodes.push_back(id);
      }
    }
  }
  return m;
}

}  // namespace detail

/// Builds the production mesh. Requires a square grid whose cell count per
/// axis is a multiple of 20 so the 19x19 measurement lattice lands on nodes.
inline Mesh build_mesh(int nx, int ny) {
  if (nx != ny)
    throw std::invalid_argument("build_mesh: nx and ny must match, got " +
                                std::to_string(nx) + "x" + std::to_string(ny));
  if (nx < 21 || (nx - 1) % 20 != 0)
    throw std::invalid_argument(
        "build_mesh: nx-1 must be a positive multiple of 20, got nx=" +
        std::to_string(nx));
  return detail::build_uniform_mesh(nx, ny);
}

/// Small unaligned meshes for unit tests and oracles; no observation lattice.
inline Mesh build_mesh_relaxed(int nx, int ny) {
  if (nx < 3 || ny < 3)
    throw std::invalid_argument("build_mesh_relaxed: need at least 3 nodes per axis");
  return detail::build_uniform_mesh(nx, ny);
}

}  // namespace ahkf
