#pragma once

#include <Eigen/SparseCore>

#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "lpbf/geometry.hpp"
#include "lpbf/grid.hpp"
#include "lpbf/materials.hpp"

namespace lpbf {

enum class DomainRole { Global, Local };

/// Nodal temperature state for one level. Quadrature-point material labels
/// are assigned when elements are born and never reclassified.
struct DomainState {
  Eigen::VectorXd T;       // current iterate / solution, kelvin
  Eigen::VectorXd T_prev;  // previous time step
  std::vector<std::array<MaterialLabel, 4>> qp_labels;  // per element
  DomainRole role = DomainRole::Global;

  bool element_is_cut(int element) const {
    const auto& l = qp_labels[element];
    return !(l[0] == l[1] && l[1] == l[2] && l[2] == l[3]);
  }
};

DomainState make_uniform_state(const Mesh& mesh, double temp_K,
                               MaterialLabel label, DomainRole role);

enum class ConditionKind { Adiabatic, Dirichlet, Robin, GammaDirichlet };

struct TagCondition {
  ConditionKind kind = ConditionKind::Adiabatic;
  double value = 0.0;      // Dirichlet temperature
  double h = 0.0;          // Robin film coefficient, W/m^2/K
  double t_ref = 0.0;      // Robin/radiation far-field temperature
  bool radiation = false;  // explicit sigma*eps*(T^4 - Tref^4) flux
};

/// Per-tag boundary treatment. Factories wire the standard assignments; tests
/// may build custom sets.
struct BoundaryConditionSet {
  std::map<FaceTag, TagCondition> by_tag;
  double emissivity = 0.0;
  double sigma_sb = kStefanBoltzmann;

  /// Build plate Dirichlet at the bottom, adiabatic plate sides, powder-bed
  /// conduction on the lateral powder faces, convection on top.
  static BoundaryConditionSet global_defaults(double h_conv, double h_pow,
                                              double T_amb_K, double T_plate_K);
  /// Zero-jump Dirichlet on gamma, convection plus radiation on top.
  static BoundaryConditionSet local_defaults(double h_conv, double T_amb_K,
                                             double emissivity, double sigma_sb);

  const TagCondition& condition(FaceTag tag) const;
};

struct MaterialModel {
  MaterialTable table;
  PowderModel powder;
  SmoothingParams smoothing;  // element_length filled from the mesh at use

  /// Conductivity at a quadrature point given its frozen label, lagged
  /// temperature, and (for powder in cut elements) the lagged gradient.
  double conductivity(MaterialLabel label, double temp_K, bool cut_element,
                      const Vec3& grad_T, double element_length) const;
};

using VolumetricSource =
    std::function<double(int element, int qp, const Vec3& x)>;

/// One Picard-linearized backward-Euler step in raw (unconstrained) form.
/// Coefficients are evaluated at state.T; the time history enters through
/// state.T_prev. Dirichlet rows are kept as a constraint list so callers can
/// inspect reactions.
struct LinearSystem {
  int n = 0;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs;
  std::vector<std::pair<int, double>> dirichlet;

  Eigen::SparseMatrix<double> raw_matrix() const;
};

struct AssembleOptions {
  double dt = 0.0;  // <= 0 assembles the steady operator (no mass, no history)
  VolumetricSource source;
  const Eigen::VectorXd* flux_functional = nullptr;  // scaled by dt on the rhs
  const std::vector<std::pair<int, double>>* gamma_values = nullptr;
  int workers = 1;
};

LinearSystem assemble_step(const Mesh& mesh, const DomainState& state,
                           const BoundaryConditionSet& bc,
                           const MaterialModel& mat,
                           const AssembleOptions& opts);

struct SolverOptions {
  double tol_rel = 1e-8;
  int max_iter = 10000;
};

/// Preconditioned conjugate gradients on the SPD system reduced to the free
/// unknowns; Dirichlet values are exact by construction.
Eigen::VectorXd solve(const LinearSystem& sys, const SolverOptions& opts = {},
                      const Eigen::VectorXd* guess = nullptr);

/// Repeats assemble/solve with lagged coefficients until the iterate settles.
/// Returns the number of iterations taken; state.T holds the solution.
int picard_step(const Mesh& mesh, DomainState& state,
                const BoundaryConditionSet& bc, const MaterialModel& mat,
                const AssembleOptions& opts, double picard_tol = 1e-6,
                int picard_max = 50, const SolverOptions& solver = {});

/// Steady conduction through the bare plate: bottom Dirichlet, top
/// convection. Used as the initial condition before the first activation.
DomainState steady_plate_solve(const Mesh& mesh, const BoundaryConditionSet& bc,
                               const MaterialModel& mat, double picard_tol = 1e-6,
                               int picard_max = 50,
                               const SolverOptions& solver = {});

/// Constant gradient of the linear interpolant on one tetrahedron.
Vec3 element_gradient(const Mesh& mesh, const Eigen::VectorXd& nodal,
                      int element);

/// Discrete enthalpy integral c*rho*T with coefficients evaluated at
/// coeff_T (typically the lagged iterate of the step being audited).
double enthalpy(const Mesh& mesh, const DomainState& state,
                const MaterialModel& mat, const Eigen::VectorXd& coeff_T,
                const Eigen::VectorXd& T);

/// Per-step energy bookkeeping from the assembled operators. All terms are
/// joules over the step; imbalance() should sit at solver-tolerance level.
struct EnergyBreakdown {
  double enthalpy_new = 0;
  double enthalpy_prev = 0;
  double source_in = 0;
  double robin_net = 0;      // convective/conductive boundary gain (negative = loss)
  double radiation_net = 0;  // explicit radiative gain (negative = loss)
  double flux_in = 0;        // interface functional contribution
  double reactions = 0;      // heat supplied through Dirichlet rows
  double solver_defect = 0;  // residual leakage on free rows

  double imbalance() const {
    return (enthalpy_new - enthalpy_prev) -
           (source_in + robin_net + radiation_net + flux_in + reactions);
  }
  double scale() const;
  double imbalance_rel() const;
};

/// Re-derives the step operator at the given lagged state and accounts for
/// every energy pathway of the discrete update T_prev -> T_new.
EnergyBreakdown energy_breakdown(const Mesh& mesh, const DomainState& lag_state,
                                 const BoundaryConditionSet& bc,
                                 const MaterialModel& mat,
                                 const AssembleOptions& opts,
                                 const Eigen::VectorXd& T_new);

/// Quadrature L2 norm of (nodal - exact) over the mesh.
double l2_error(const Mesh& mesh, const Eigen::VectorXd& nodal,
                const std::function<double(const Vec3&)>& exact);

/// Quadrature L2 norm of a nodal field restricted to elements selected by
/// the predicate (pass {} for the whole mesh).
double l2_norm(const Mesh& mesh, const Eigen::VectorXd& nodal,
               const std::function<bool(const Vec3& centroid)>& keep = {});

/// Tet quadrature: four symmetric points, weights 1/4.
struct TetQuadrature {
  static constexpr int kPoints = 4;
  static const std::array<Vec4, 4>& barycentric();
};

Vec3 qp_position(const Mesh& mesh, int element, int qp);

}  // namespace lpbf
