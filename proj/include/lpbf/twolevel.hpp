#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "lpbf/fem.hpp"
#include "lpbf/grid.hpp"

namespace lpbf {

struct GammaNode {
  int local_node;
  int global_element;
  std::array<int, 4> global_nodes;
  Vec4 global_weights;
};

struct GammaQuadPoint {
  Vec3 position;
  Vec3 normal;         // outward from the local domain
  double area_weight;  // face area / 3
  int local_element;
  Vec4 local_weights;
  int global_element;
  std::array<int, 4> global_nodes;
  Vec4 global_weights;
};

/// Precomputed transfer data between the local gamma boundary (lateral and
/// bottom faces) and the global mesh. Self-contained: node ids are captured
/// at build time. Rebuilt whenever the local box moves.
struct InterfaceMap {
  std::vector<GammaNode> nodes;
  std::vector<GammaQuadPoint> qps;
  double gamma_area = 0.0;
  int global_node_count = 0;
};

InterfaceMap build_interface_map(const Mesh& global_mesh,
                                 const Mesh& local_mesh);

/// Dirichlet data for the local gamma nodes interpolated from the global
/// solution.
std::vector<std::pair<int, double>> transfer_dirichlet(
    const InterfaceMap& map, const Eigen::VectorXd& T_global);

/// Surface functional turning the conductivity-jump flux on gamma into a
/// global right-hand-side load: for each gamma quadrature point q,
/// eta(q) = (kappa_plus - kappa_minus) * grad(T_local) . n, distributed onto
/// the global basis functions. Unscaled by dt.
Eigen::VectorXd assemble_flux_functional(const InterfaceMap& map,
                                         const Mesh& local_mesh,
                                         const Eigen::VectorXd& T_local,
                                         const Eigen::VectorXd& kappa_plus,
                                         const Eigen::VectorXd& kappa_minus);

/// Conductivity each side sees at the gamma quadrature points: the label of
/// the nearest quadrature point of the containing element and the lagged
/// temperature interpolated there, with cut-element smoothing applied to
/// powder exactly as in volume assembly.
Eigen::VectorXd interface_kappa(const InterfaceMap& map, const Mesh& mesh,
                                const DomainState& state,
                                const Eigen::VectorXd& T_eval,
                                const MaterialModel& mat, bool global_side);

enum class CouplingMode { Sequential, Parallel };

struct IterationTrace {
  int step = 0;
  int iteration = 0;
  double residual = 0.0;
  CouplingMode mode = CouplingMode::Sequential;
  double wall_seconds = 0.0;
};

struct CouplingConfig {
  CouplingMode mode = CouplingMode::Sequential;
  double theta = 1.0;      // relaxation on the global update, (0,1]
  double tolerance = 1e-4; // relative l2 change of T_global between iterations
  int max_outer = 20;
  SolverOptions solver;
  int workers = 1;
  std::function<void(const IterationTrace&)> trace;
};

struct CoupledState {
  DomainState global;
  DomainState local;
  int iterations = 0;
  double residual = 0.0;
};

struct CoupledSources {
  VolumetricSource global_source;
  VolumetricSource local_source;
};

/// Advances both levels by one backward-Euler time step, iterating the
/// local/global exchange to a fixed point. Sequential mode feeds the fresh
/// local solve into the global flux term; parallel mode uses the previous
/// iterate so both solves are independent. On success T_prev is committed.
void coupled_step(CoupledState& state, const Mesh& global_mesh,
                  const Mesh& local_mesh, const InterfaceMap& map,
                  const BoundaryConditionSet& global_bc,
                  const BoundaryConditionSet& local_bc,
                  const MaterialModel& mat, const CouplingConfig& cfg,
                  double dt, const CoupledSources& sources = {},
                  int step_index = 0);

}  // namespace lpbf
