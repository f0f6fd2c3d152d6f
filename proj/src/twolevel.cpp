#include "lpbf/twolevel.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <future>
#include <limits>

namespace lpbf {
namespace {

constexpr std::array<std::array<double, 3>, 3> kTriQp = {{
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
}};

Vec4 barycentric_in_tet(const Mesh& mesh, int element, const Vec3& p) {
  const auto& t = mesh.tets[element];
  Eigen::Matrix3d A;
  A.col(0) = mesh.nodes[t[1]] - mesh.nodes[t[0]];
  A.col(1) = mesh.nodes[t[2]] - mesh.nodes[t[0]];
  A.col(2) = mesh.nodes[t[3]] - mesh.nodes[t[0]];
  const Vec3 l = A.partialPivLu().solve(p - mesh.nodes[t[0]]);
  return Vec4(1.0 - l.sum(), l[0], l[1], l[2]);
}

double weighted_value(const std::array<int, 4>& nodes, const Vec4& w,
                      const Eigen::VectorXd& nodal) {
  return w[0] * nodal[nodes[0]] + w[1] * nodal[nodes[1]] +
         w[2] * nodal[nodes[2]] + w[3] * nodal[nodes[3]];
}

int nearest_qp(const Mesh& mesh, int element, const Vec3& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int q = 0; q < TetQuadrature::kPoints; ++q) {
    const double d = (qp_position(mesh, element, q) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

}  // namespace

InterfaceMap build_interface_map(const Mesh& global_mesh,
                                 const Mesh& local_mesh) {
  if (!local_mesh.is_local) {
    throw std::invalid_argument("interface map: second mesh must be local");
  }
  InterfaceMap map;
  map.global_node_count = global_mesh.node_count();
  std::vector<char> seen(local_mesh.node_count(), 0);

  auto locate_or_fail = [&](const Vec3& p, const char* what) {
    try {
      return locate_point(global_mesh, p);
    } catch (const std::out_of_range&) {
      throw std::runtime_error(std::string("interface map: ") + what +
                               " not immersed in the global mesh");
    }
  };

  for (const BoundaryFace& f : local_mesh.boundary) {
    if (f.tag != FaceTag::GammaLateral && f.tag != FaceTag::GammaBottom) {
      continue;
    }
    map.gamma_area += f.area;
    for (int nd : f.nodes) {
      if (seen[nd]) continue;
      seen[nd] = 1;
      const Location loc = locate_or_fail(local_mesh.nodes[nd], "gamma node");
      map.nodes.push_back(
          {nd, loc.element, global_mesh.tets[loc.element], loc.bary});
    }
    const Vec3& a = local_mesh.nodes[f.nodes[0]];
    const Vec3& b = local_mesh.nodes[f.nodes[1]];
    const Vec3& c = local_mesh.nodes[f.nodes[2]];
    for (int q = 0; q < 3; ++q) {
      GammaQuadPoint gq;
      gq.position = kTriQp[q][0] * a + kTriQp[q][1] * b + kTriQp[q][2] * c;
      gq.normal = f.outward_normal;
      gq.area_weight = f.area / 3.0;
      gq.local_element = f.element;
      gq.local_weights = barycentric_in_tet(local_mesh, f.element, gq.position);
      const Location loc = locate_or_fail(gq.position, "gamma quadrature point");
      gq.global_element = loc.element;
      gq.global_nodes = global_mesh.tets[loc.element];
      gq.global_weights = loc.bary;
      map.qps.push_back(gq);
    }
  }
  if (map.qps.empty()) {
    throw std::runtime_error("interface map: local mesh has no gamma faces");
  }
  return map;
}

std::vector<std::pair<int, double>> transfer_dirichlet(
    const InterfaceMap& map, const Eigen::VectorXd& T_global) {
  std::vector<std::pair<int, double>> values;
  values.reserve(map.nodes.size());
  for (const GammaNode& gn : map.nodes) {
    values.emplace_back(gn.local_node,
                        weighted_value(gn.global_nodes, gn.global_weights,
                                       T_global));
  }
  return values;
}

Eigen::VectorXd assemble_flux_functional(const InterfaceMap& map,
                                         const Mesh& local_mesh,
                                         const Eigen::VectorXd& T_local,
                                         const Eigen::VectorXd& kappa_plus,
                                         const Eigen::VectorXd& kappa_minus) {
  const auto nq = static_cast<Eigen::Index>(map.qps.size());
  if (kappa_plus.size() != nq || kappa_minus.size() != nq) {
    throw std::invalid_argument(
        "flux functional: kappa arrays must have one entry per gamma qp");
  }
  Eigen::VectorXd F = Eigen::VectorXd::Zero(map.global_node_count);
  for (Eigen::Index q = 0; q < nq; ++q) {
    const GammaQuadPoint& gq = map.qps[q];
    const Vec3 grad = element_gradient(local_mesh, T_local, gq.local_element);
    const double eta =
        (kappa_plus[q] - kappa_minus[q]) * grad.dot(gq.normal);
    if (eta == 0.0) continue;
    for (int i = 0; i < 4; ++i) {
      F[gq.global_nodes[i]] += eta * gq.global_weights[i] * gq.area_weight;
    }
  }
  return F;
}

Eigen::VectorXd interface_kappa(const InterfaceMap& map, const Mesh& mesh,
                                const DomainState& state,
                                const Eigen::VectorXd& T_eval,
                                const MaterialModel& mat, bool global_side) {
  Eigen::VectorXd kappa(static_cast<Eigen::Index>(map.qps.size()));
  for (std::size_t q = 0; q < map.qps.size(); ++q) {
    const GammaQuadPoint& gq = map.qps[q];
    const int element = global_side ? gq.global_element : gq.local_element;
    const double temp_K =
        global_side
            ? weighted_value(gq.global_nodes, gq.global_weights, T_eval)
            : weighted_value(mesh.tets[element], gq.local_weights, T_eval);
    const MaterialLabel label =
        state.qp_labels[element][nearest_qp(mesh, element, gq.position)];
    const bool cut = state.element_is_cut(element);
    const Vec3 grad =
        cut ? element_gradient(mesh, T_eval, element) : Vec3::Zero();
    kappa[static_cast<Eigen::Index>(q)] =
        mat.conductivity(label, temp_K, cut, grad, mesh.nominal_h);
  }
  return kappa;
}

void coupled_step(CoupledState& state, const Mesh& global_mesh,
                  const Mesh& local_mesh, const InterfaceMap& map,
                  const BoundaryConditionSet& global_bc,
                  const BoundaryConditionSet& local_bc,
                  const MaterialModel& mat, const CouplingConfig& cfg,
                  double dt, const CoupledSources& sources, int step_index) {
  if (!(cfg.theta > 0.0 && cfg.theta <= 1.0)) {
    throw std::invalid_argument("coupled_step: theta must be in (0,1]");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("coupled_step: dt must be > 0");

  std::vector<double> history;
  history.reserve(cfg.max_outer);

  auto solve_local =
      [&](const Eigen::VectorXd& T_local_lag,
          const std::vector<std::pair<int, double>>& gamma) -> Eigen::VectorXd {
    DomainState lagged = state.local;
    lagged.T = T_local_lag;
    AssembleOptions opts;
    opts.dt = dt;
    opts.source = sources.local_source;
    opts.gamma_values = &gamma;
    opts.workers = cfg.workers;
    const LinearSystem sys =
        assemble_step(local_mesh, lagged, local_bc, mat, opts);
    return solve(sys, cfg.solver, &T_local_lag);
  };

  auto solve_global = [&](const Eigen::VectorXd& T_global_lag,
                          const Eigen::VectorXd& flux) -> Eigen::VectorXd {
    DomainState lagged = state.global;
    lagged.T = T_global_lag;
    AssembleOptions opts;
    opts.dt = dt;
    opts.source = sources.global_source;
    opts.flux_functional = &flux;
    opts.workers = cfg.workers;
    const LinearSystem sys =
        assemble_step(global_mesh, lagged, global_bc, mat, opts);
    return solve(sys, cfg.solver, &T_global_lag);
  };

  for (int k = 1; k <= cfg.max_outer; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::VectorXd Tg_lag = state.global.T;
    const Eigen::VectorXd Tl_lag = state.local.T;
    const auto gamma = transfer_dirichlet(map, Tg_lag);

    Eigen::VectorXd Tl_new, Tg_new;
    if (cfg.mode == CouplingMode::Sequential) {
      Tl_new = solve_local(Tl_lag, gamma);
      const Eigen::VectorXd kp =
          interface_kappa(map, global_mesh, state.global, Tg_lag, mat, true);
      const Eigen::VectorXd km =
          interface_kappa(map, local_mesh, state.local, Tl_new, mat, false);
      const Eigen::VectorXd flux =
          assemble_flux_functional(map, local_mesh, Tl_new, kp, km);
      Tg_new = solve_global(Tg_lag, flux);
    } else {
      // both solves read only the k-1 snapshots, so they can run concurrently
      auto local_future = std::async(std::launch::async, [&] {
        return solve_local(Tl_lag, gamma);
      });
      const Eigen::VectorXd kp =
          interface_kappa(map, global_mesh, state.global, Tg_lag, mat, true);
      const Eigen::VectorXd km =
          interface_kappa(map, local_mesh, state.local, Tl_lag, mat, false);
      const Eigen::VectorXd flux =
          assemble_flux_functional(map, local_mesh, Tl_lag, kp, km);
      Tg_new = solve_global(Tg_lag, flux);
      Tl_new = local_future.get();
    }

    if (cfg.theta < 1.0) {
      Tg_new = cfg.theta * Tg_new + (1.0 - cfg.theta) * Tg_lag;
    }

    const double res =
        (Tg_new - Tg_lag).norm() / std::max(Tg_lag.norm(), 1e-300);
    history.push_back(res);

    state.global.T = Tg_new;
    state.local.T = Tl_new;
    state.iterations = k;
    state.residual = res;

    if (cfg.trace) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      cfg.trace({step_index, k, res, cfg.mode, wall});
    }
    if (res < cfg.tolerance) {
      state.global.T_prev = state.global.T;
      state.local.T_prev = state.local.T;
      return;
    }
  }
  throw CouplingError("coupled_step: no convergence after " +
                          std::to_string(cfg.max_outer) + " outer iterations",
                      history);
}

}  // namespace lpbf
