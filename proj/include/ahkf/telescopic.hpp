#pragma once

#include <stdexcept>
#include <vector>

#include "ahkf/fem.hpp"
#include "ahkf/filters.hpp"
#include "ahkf/parallel.hpp"
#include "ahkf/pod.hpp"
#include "ahkf/qge.hpp"
#include "ahkf/rom.hpp"

namespace ahkf {

/// Level layout of the L-level hierarchy. Level L is the full model; levels
/// 0..L-1 carry reduced spaces. sizes has L+1 entries (coarsest first),
/// eps_r has L entries in non-decreasing order.
struct LevelConfig {
  int levels = 1;  // L
  std::vector<std::size_t> sizes;
  std::vector<double> eps_r;

  void validate() const {
    if (levels < 1) throw std::invalid_argument("LevelConfig: L must be >= 1");
    if (sizes.size() != static_cast<std::size_t>(levels) + 1)
      throw std::invalid_argument("LevelConfig: need L+1 ensemble sizes");
    if (eps_r.size() != static_cast<std::size_t>(levels))
      throw std::invalid_argument("LevelConfig: need L relative tolerances");
    for (std::size_t m : sizes)
      if (m < 2) throw std::invalid_argument("LevelConfig: level sizes must be >= 2");
    for (std::size_t l = 1; l < eps_r.size(); ++l)
      if (eps_r[l] < eps_r[l - 1])
        throw std::invalid_argument("LevelConfig: tolerances must be non-decreasing");
  }
};

/// Per-level ensembles in full coordinates. principal has L+1 entries
/// (level 0 plays the role of the two-level ancillary ensemble); control has
/// L+1 entries with index 0 unused; v_spaces/w_spaces have L entries.
struct LevelEnsembles {
  std::vector<std::vector<Vec>> principal;
  std::vector<std::vector<Vec>> control;
  std::vector<ReducedSpace> v_spaces;
  std::vector<ReducedSpace> w_spaces;
  int step_index = 0;
};

namespace detail {

/// Shared trace estimate of the tolerance formulas; the per-level tolerance
/// is eps_r[l] times this value.
inline double telescopic_trace_ml(const SparseMat& mass, const LevelEnsembles& le) {
  const int levels = static_cast<int>(le.principal.size()) - 1;
  double trace = detail::centered_energy(mass, le.principal[0]) /
                 (static_cast<double>(le.principal[0].size()) - 1.0);
  for (int s = 1; s <= levels; ++s) {
    double ms = static_cast<double>(le.principal[s].size());
    trace += (detail::centered_energy(mass, le.principal[s]) -
              detail::centered_energy(mass, le.control[s])) /
             (ms - 1.0);
  }
  return 2.0 * trace;
}

inline double telescopic_trace_mf(const SparseMat& mass, const LevelEnsembles& le) {
  const int levels = static_cast<int>(le.principal.size()) - 1;
  double trace = detail::centered_energy(mass, le.principal[0]) /
                 (std::pow(4.0, levels) * (static_cast<double>(le.principal[0].size()) - 1.0));
  for (int s = 1; s <= levels; ++s) {
    const auto& p = le.principal[s];
    const auto& c = le.control[s];
    if (c.size() != p.size())
      throw std::invalid_argument("telescopic_trace_mf: control size mismatch");
    Vec mean_p, mean_c;
    double energy_p = detail::centered_energy(mass, p, &mean_p);
    double energy_c = detail::centered_energy(mass, c, &mean_c);
    double cross = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n)
      cross += (p[n] - mean_p).dot(mass * (c[n] - mean_c));
    trace += (energy_p + 0.25 * energy_c - cross) /
             (std::pow(4.0, levels - s) * (static_cast<double>(p.size()) - 1.0));
  }
  return 2.0 * trace;
}

}  // namespace detail

/// Per-level absolute tolerances; at L=1 these coincide with the two-level
/// estimators applied to (principal[1], control[1], principal[0]).
inline std::vector<double> telescopic_tolerance_ml(const SparseMat& mass, const LevelEnsembles& le,
                                                   const std::vector<double>& eps_r) {
  double trace = detail::telescopic_trace_ml(mass, le);
  double floor = detail::tolerance_floor(mass, le.principal.back());
  std::vector<double> eps(eps_r.size());
  for (std::size_t l = 0; l < eps_r.size(); ++l) eps[l] = std::max(eps_r[l] * trace, floor);
  return eps;
}

inline std::vector<double> telescopic_tolerance_mf(const SparseMat& mass, const LevelEnsembles& le,
                                                   const std::vector<double>& eps_r) {
  double trace = detail::telescopic_trace_mf(mass, le);
  double floor = detail::tolerance_floor(mass, le.principal.back());
  std::vector<double> eps(eps_r.size());
  for (std::size_t l = 0; l < eps_r.size(); ++l) eps[l] = std::max(eps_r[l] * trace, floor);
  return eps;
}

/// Prediction step of the L-level hierarchy. For L=1 this delegates to the
/// two-level predict, so both paths are the same code. For L >= 2 the level
/// spaces are rebuilt with the per-level tolerances and the nesting
/// V^0 c= ... c= V^{L-1} is enforced constructively by basis unions; the
/// deflated spaces are nested prefixes of one shared mode sequence.
inline LevelEnsembles telescopic_predict(const FemOperators& fem, const QgeModel& model,
                                         const LevelEnsembles& le, double t_window,
                                         const LevelConfig& cfg, FilterKind kind,
                                         int threads = 1) {
  cfg.validate();
  const int levels = cfg.levels;
  if (le.principal.size() != static_cast<std::size_t>(levels) + 1 ||
      le.control.size() != static_cast<std::size_t>(levels) + 1 ||
      le.v_spaces.size() != static_cast<std::size_t>(levels) ||
      le.w_spaces.size() != static_cast<std::size_t>(levels))
    throw std::invalid_argument("telescopic_predict: level count mismatch");

  if (levels == 1) {
    EnsembleSet es;
    es.principal = le.principal[1];
    es.control = le.control[1];
    es.ancillary = le.principal[0];
    es.v_space = le.v_spaces[0];
    es.w_space = le.w_spaces[0];
    es.step_index = le.step_index;
    PredictOptions opt;
    opt.eps_r = cfg.eps_r[0];
    opt.kind = kind;
    opt.threads = threads;
    EnsembleSet next = predict(fem, model, es, t_window, opt);
    LevelEnsembles out;
    out.step_index = next.step_index;
    out.principal = {next.ancillary, next.principal};
    out.control = {{}, next.control};
    out.v_spaces = {next.v_space};
    out.w_spaces = {next.w_space};
    return out;
  }

  LevelEnsembles out;
  out.step_index = le.step_index + 1;
  out.principal.resize(levels + 1);
  out.control.resize(levels + 1);
  out.v_spaces.resize(levels);
  out.w_spaces.resize(levels);

  // full-model forecast of the finest principal ensemble
  const auto& p_top = le.principal[levels];
  std::vector<Trajectory> hf_traj(p_top.size());
  parallel_for(p_top.size(), threads,
               [&](std::size_t n) { hf_traj[n] = model.flow(p_top[n], t_window); });
  out.principal[levels].resize(p_top.size());
  for (std::size_t n = 0; n < p_top.size(); ++n) out.principal[levels][n] = hf_traj[n].last();

  std::vector<double> eps = kind == FilterKind::ML
                                ? telescopic_tolerance_ml(fem.mass, le, cfg.eps_r)
                                : telescopic_tolerance_mf(fem.mass, le, cfg.eps_r);

  std::vector<Vec> hf_snaps;
  hf_snaps.reserve(p_top.size() * (hf_traj.front().size() - 1));
  for (const auto& traj : hf_traj)
    for (std::size_t s = 1; s < traj.size(); ++s) hf_snaps.push_back(traj.states[s]);

  // inflate each level from the shared high-fidelity residuals, then take the
  // union with the level below to keep the spaces nested
  for (int l = 0; l < levels; ++l) {
    ReducedSpace v = inflate(fem, le.w_spaces[l], hf_snaps, 0.5 * eps[l]);
    if (l > 0 && !out.v_spaces[l - 1].empty()) {
      Mat joint(fem.dof_count(), v.dim() + out.v_spaces[l - 1].dim());
      joint.leftCols(v.dim()) = v.basis;
      joint.rightCols(out.v_spaces[l - 1].dim()) = out.v_spaces[l - 1].basis;
      v = make_reduced_space(fem, detail::m_orthonormalize(fem, joint));
    }
    out.v_spaces[l] = std::move(v);
  }

  // surrogate forecasts: principal ensembles run on their own level, control
  // ensembles (projected finer principals) on the level below
  std::vector<ReducedOperators> red(levels);
  for (int l = 0; l < levels; ++l)
    red[l] = build_reduced_operators(fem, out.v_spaces[l], model.params());

  std::vector<Vec> lf_snaps;  // coordinates in V^{L-1}
  const ReducedSpace& top_space = out.v_spaces[levels - 1];
  auto to_top = [&](const ReducedSpace& space, const Vec& c) {
    return Vec(top_space.basis.transpose() * (fem.mass * (space.basis * c)));
  };

  auto run_level = [&](int l, const std::vector<Vec>& starts, std::vector<Vec>& dest,
                       bool collect) {
    dest.resize(starts.size());
    std::vector<Trajectory> traj(starts.size());
    parallel_for(starts.size(), threads, [&](std::size_t n) {
      Vec c0 = project_state(fem, out.v_spaces[l], starts[n]);
      traj[n] = reduced_flow(red[l], model.params(), c0, t_window);
    });
    for (std::size_t n = 0; n < starts.size(); ++n) {
      dest[n] = lift_state(out.v_spaces[l], traj[n].last());
      if (collect)
        for (std::size_t s = 1; s < traj[n].size(); ++s)
          lf_snaps.push_back(to_top(out.v_spaces[l], traj[n].states[s]));
    }
  };

  for (int l = 0; l < levels; ++l) run_level(l, le.principal[l], out.principal[l], true);
  for (int l = 1; l <= levels; ++l)
    run_level(l - 1, le.principal[l], out.control[l], l == levels);

  // one shared POD of the low-fidelity set; level l keeps the prefix sized by
  // its own tolerance, widened upward so the prefixes stay nested
  PodResult shared = pod_euclidean(lf_snaps, 0.0);
  std::vector<int> dims(levels);
  for (int l = 0; l < levels; ++l) {
    Vec gamma = shared.eigenvalues;
    double discarded = 0.0;
    dims[l] = detail::select_pod_dim(gamma, 0.5 * eps[l], &discarded);
    if (l > 0) dims[l] = std::max(dims[l], dims[l - 1]);
  }
  for (int l = 0; l < levels; ++l) {
    Mat kept = shared.basis.leftCols(dims[l]);
    ReducedSpace w;
    w.basis = top_space.basis * kept;
    w.psi_basis = top_space.psi_basis * kept;
    out.w_spaces[l] = std::move(w);
  }
  return out;
}

}  // namespace ahkf
