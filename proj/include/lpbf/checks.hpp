#pragma once

#include <string>
#include <vector>

#include "lpbf/config.hpp"
#include "lpbf/twolevel.hpp"

namespace lpbf {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

/// Smooth manufactured solution with a compensating source, marched with the
/// time step tied to h^2 so the spatial order shows through. errors[i] is the
/// L2 error at refinement level i; ratios[i] = errors[i]/errors[i+1].
struct MmsResult {
  std::vector<double> errors;
  std::vector<double> ratios;

  bool pass(double min_ratio = 3.5) const {
    if (ratios.empty()) return false;
    for (double r : ratios) {
      if (!(r >= min_ratio)) return false;
    }
    return true;
  }
};

MmsResult mms_convergence(int levels = 3, int base_cells = 4);

/// Two-level versus single-mesh solve with identical conductivity fields on a
/// 20x20x10 mm problem; reports the relative L2 difference outside the local
/// box after coupling convergence.
struct ConsistencyResult {
  double rel_error = 0.0;
  int total_outer_iterations = 0;
};

ConsistencyResult consistency_check(const MaterialModel& mat, CouplingMode mode,
                                    double tol_cpl);

/// Sequential and parallel fixed points on the same desk problem.
struct ModeEquivalenceResult {
  double max_diff = 0.0;
  int sequential_iterations = 0;
  int parallel_iterations = 0;
};

ModeEquivalenceResult mode_equivalence_check(const MaterialModel& mat,
                                             double tol_cpl);

/// Adiabatic source-free constant-coefficient run; returns the worst per-step
/// relative enthalpy drift over n_steps.
double energy_conservation_check(int n_steps = 100, double solver_tol = 1e-12);

/// Grows a small bed through several activations and audits the mesh at every
/// step; measured is the worst relative volume error seen.
CheckResult mesh_growth_check();

/// The built-in property suites behind the `verify` subcommand.
std::vector<CheckResult> run_verification_suite(const RunConfig& cfg);

}  // namespace lpbf
