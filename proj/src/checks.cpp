#include "lpbf/checks.hpp"

#include <cmath>
#include <sstream>

namespace lpbf {
namespace {

BoundaryConditionSet all_adiabatic() {
  BoundaryConditionSet bc;
  for (FaceTag tag : {FaceTag::BottomPlate, FaceTag::PlateLateral,
                      FaceTag::PowderLateral, FaceTag::TopSurface,
                      FaceTag::GammaLateral, FaceTag::GammaBottom}) {
    bc.by_tag[tag] = TagCondition{};
  }
  return bc;
}

Mesh box_mesh(double length, int cells) {
  const Box3 plate(Vec3(0, 0, 0), Vec3(length, length, length));
  const Box3 powder(Vec3(0, 0, length), Vec3(length, length, length));
  return build_global_mesh(plate, powder, length / cells, length / cells);
}

// Shared 20x20x10 mm two-level setup: solid everywhere so both levels carry
// the same conductivity field.
struct DeskProblem {
  Mesh global_mesh;
  Mesh local_mesh;
  InterfaceMap map;
  BoundaryConditionSet global_bc;
  BoundaryConditionSet local_bc;
  DomainState global_init;
  DomainState local_init;
  LocalBox box;
  double dt = 1.0;
  int steps = 5;

  explicit DeskProblem(const MaterialModel& mat) {
    const double t_plate = to_kelvin(80.0);
    const double t_amb = to_kelvin(25.0);
    const Box3 plate(Vec3(0, 0, -4e-3), Vec3(20e-3, 20e-3, 0));
    const Box3 powder(Vec3(0, 0, 0), Vec3(20e-3, 20e-3, 6e-3));
    global_mesh = build_global_mesh(plate, powder, 2e-3, 2e-3);
    GrowthState growth{0, 0.0, 2e-3};
    for (int i = 0; i < 3; ++i) activate_layer(global_mesh, growth);

    box.x_lo = 5e-3;
    box.x_hi = 15e-3;
    box.y_lo = 5e-3;
    box.y_hi = 15e-3;
    box.z_top = growth.top_z;
    box.depth = 4e-3;
    box.floor_z = 0.0;
    box.h = 1e-3;
    local_mesh = build_local_mesh(box, global_mesh.extent(), growth.top_z);
    map = build_interface_map(global_mesh, local_mesh);

    global_bc = BoundaryConditionSet::global_defaults(15.0, 25.0, t_amb,
                                                      t_plate);
    // no radiation so the local top matches the single-mesh reference physics
    local_bc = BoundaryConditionSet::local_defaults(15.0, t_amb, 0.0,
                                                    mat.powder.sigma_sb);

    global_init = make_uniform_state(global_mesh, t_plate,
                                     MaterialLabel::Solid, DomainRole::Global);
    local_init = make_uniform_state(local_mesh, t_plate, MaterialLabel::Solid,
                                    DomainRole::Local);
  }
};

}  // namespace

MmsResult mms_convergence(int levels, int base_cells) {
  MmsResult result;
  const double length = 0.02;
  const double kappa = 10.0, c = 500.0, rho = 8000.0;
  const double tau = 0.05, t_end = 0.05, amp = 100.0, t0 = 400.0;
  const MaterialModel mat{MaterialTable::constant(kappa, c, rho), {}, {}};
  const BoundaryConditionSet bc = all_adiabatic();
  const double pi = M_PI;

  auto exact = [&](const Vec3& p, double t) {
    return t0 + amp * std::cos(pi * p.x() / length) *
                    std::cos(pi * p.y() / length) *
                    std::cos(pi * p.z() / length) * std::exp(-t / tau);
  };
  // f = c rho dT/dt - kappa lap(T) for the field above
  const double coeff = -c * rho / tau + kappa * 3.0 * pi * pi / (length * length);
  auto source_at = [&](const Vec3& p, double t) {
    return amp * coeff * std::cos(pi * p.x() / length) *
           std::cos(pi * p.y() / length) * std::cos(pi * p.z() / length) *
           std::exp(-t / tau);
  };

  for (int level = 0; level < levels; ++level) {
    const int cells = base_cells << level;
    const Mesh mesh = box_mesh(length, cells);
    DomainState state = make_uniform_state(mesh, t0, MaterialLabel::Solid,
                                           DomainRole::Global);
    for (int nd = 0; nd < mesh.node_count(); ++nd) {
      state.T[nd] = exact(mesh.nodes[nd], 0.0);
    }
    state.T_prev = state.T;

    const int n_steps = 2 << (2 * level);  // dt ~ h^2
    const double dt = t_end / n_steps;
    SolverOptions solver;
    solver.tol_rel = 1e-12;
    for (int s = 1; s <= n_steps; ++s) {
      const double t_new = s * dt;
      AssembleOptions opts;
      opts.dt = dt;
      opts.source = [&](int, int, const Vec3& x) { return source_at(x, t_new); };
      picard_step(mesh, state, bc, mat, opts, 1e-12, 5, solver);
      state.T_prev = state.T;
    }
    result.errors.push_back(
        l2_error(mesh, state.T, [&](const Vec3& p) { return exact(p, t_end); }));
  }
  for (std::size_t i = 0; i + 1 < result.errors.size(); ++i) {
    result.ratios.push_back(result.errors[i] / result.errors[i + 1]);
  }
  return result;
}

ConsistencyResult consistency_check(const MaterialModel& mat, CouplingMode mode,
                                    double tol_cpl) {
  DeskProblem desk(mat);

  CouplingConfig cc;
  cc.mode = mode;
  cc.tolerance = tol_cpl;
  cc.max_outer = 100;
  cc.solver.tol_rel = 1e-10;

  CoupledState cs;
  cs.global = desk.global_init;
  cs.local = desk.local_init;
  ConsistencyResult out;
  for (int s = 0; s < desk.steps; ++s) {
    coupled_step(cs, desk.global_mesh, desk.local_mesh, desk.map,
                 desk.global_bc, desk.local_bc, mat, cc, desk.dt, {}, s);
    out.total_outer_iterations += cs.iterations;
  }

  DomainState ref = desk.global_init;
  SolverOptions solver;
  solver.tol_rel = 1e-10;
  AssembleOptions opts;
  opts.dt = desk.dt;
  for (int s = 0; s < desk.steps; ++s) {
    picard_step(desk.global_mesh, ref, desk.global_bc, mat, opts, tol_cpl, 100,
                solver);
    ref.T_prev = ref.T;
  }

  auto outside_box = [&](const Vec3& c) {
    return !(c.x() > desk.box.x_lo && c.x() < desk.box.x_hi &&
             c.y() > desk.box.y_lo && c.y() < desk.box.y_hi &&
             c.z() > desk.box.z_bottom());
  };
  const Eigen::VectorXd diff = cs.global.T - ref.T;
  const double num = l2_norm(desk.global_mesh, diff, outside_box);
  const double den = l2_norm(desk.global_mesh, ref.T, outside_box);
  out.rel_error = num / den;
  return out;
}

ModeEquivalenceResult mode_equivalence_check(const MaterialModel& mat,
                                             double tol_cpl) {
  DeskProblem desk(mat);
  ModeEquivalenceResult out;

  auto run = [&](CouplingMode mode, int& iters) {
    CouplingConfig cc;
    cc.mode = mode;
    cc.tolerance = tol_cpl;
    cc.max_outer = 200;
    cc.solver.tol_rel = 1e-10;
    CoupledState cs;
    cs.global = desk.global_init;
    cs.local = desk.local_init;
    for (int s = 0; s < desk.steps; ++s) {
      coupled_step(cs, desk.global_mesh, desk.local_mesh, desk.map,
                   desk.global_bc, desk.local_bc, mat, cc, desk.dt, {}, s);
      iters += cs.iterations;
    }
    return cs;
  };

  const CoupledState seq = run(CouplingMode::Sequential,
                               out.sequential_iterations);
  const CoupledState par = run(CouplingMode::Parallel,
                               out.parallel_iterations);
  out.max_diff = (seq.global.T - par.global.T).cwiseAbs().maxCoeff();
  return out;
}

double energy_conservation_check(int n_steps, double solver_tol) {
  const double length = 0.01;
  const Mesh mesh = box_mesh(length, 4);
  const MaterialModel mat{MaterialTable::constant(20.0, 500.0, 8000.0), {}, {}};
  const BoundaryConditionSet bc = all_adiabatic();

  DomainState state = make_uniform_state(mesh, 400.0, MaterialLabel::Solid,
                                         DomainRole::Global);
  for (int nd = 0; nd < mesh.node_count(); ++nd) {
    state.T[nd] = 300.0 + 100.0 * mesh.nodes[nd].x() / length +
                  50.0 * mesh.nodes[nd].z() / length;
  }
  state.T_prev = state.T;

  SolverOptions solver;
  solver.tol_rel = solver_tol;
  AssembleOptions opts;
  opts.dt = 0.1;

  const double h0 = enthalpy(mesh, state, mat, state.T, state.T);
  double prev = h0;
  double worst = 0.0;
  for (int s = 0; s < n_steps; ++s) {
    const LinearSystem sys = assemble_step(mesh, state, bc, mat, opts);
    state.T = solve(sys, solver, &state.T);
    state.T_prev = state.T;
    const double h = enthalpy(mesh, state, mat, state.T, state.T);
    worst = std::max(worst, std::abs(h - prev) / std::abs(h0));
    prev = h;
  }
  return worst;
}

CheckResult mesh_growth_check() {
  CheckResult out;
  out.name = "mesh growth audits";
  out.threshold = 1e-10;
  const Box3 plate(Vec3(0, 0, -8e-3), Vec3(16e-3, 16e-3, 0));
  const Box3 powder(Vec3(0, 0, 0), Vec3(16e-3, 16e-3, 8e-3));
  Mesh mesh = build_global_mesh(plate, powder, 4e-3, 4e-3);
  GrowthState growth{0, 0.0, 1e-3};
  out.pass = true;
  double worst = 0.0;
  for (int i = 0; i < 8; ++i) {
    const int nodes_before = mesh.node_count();
    const int elems_before = mesh.element_count();
    const BornIds born = activate_layer(mesh, growth);
    const MeshAudit audit = audit_mesh(mesh);
    worst = std::max(worst, audit.volume_error_rel);
    if (!audit.pass() || born.nodes.front() != nodes_before ||
        born.elements.front() != elems_before) {
      out.pass = false;
      out.detail += "activation " + std::to_string(i + 1) + " failed; ";
    }
  }
  out.measured = worst;
  return out;
}

std::vector<CheckResult> run_verification_suite(const RunConfig& cfg) {
  std::vector<CheckResult> results;
  const MaterialModel mat = cfg.material_model();

  results.push_back(mesh_growth_check());

  {
    CheckResult r;
    r.name = "energy conservation (adiabatic, source-free)";
    r.threshold = 1e-8;
    r.measured = energy_conservation_check();
    r.pass = r.measured < r.threshold;
    results.push_back(r);
  }
  {
    CheckResult r;
    r.name = "two-level consistency vs single mesh";
    r.threshold = 1e-3;
    const ConsistencyResult c =
        consistency_check(mat, cfg.coupling_mode, cfg.coupling_tol);
    r.measured = c.rel_error;
    r.pass = r.measured < r.threshold;
    std::ostringstream os;
    os << "outer iterations " << c.total_outer_iterations << " at tol "
       << cfg.coupling_tol;
    r.detail = os.str();
    results.push_back(r);
  }
  {
    CheckResult r;
    r.name = "sequential/parallel mode equivalence";
    const double tol = cfg.coupling_tol;
    r.threshold = 10.0 * tol * to_kelvin(80.0);  // max-norm scale of the field
    const ModeEquivalenceResult m = mode_equivalence_check(mat, tol);
    r.measured = m.max_diff;
    r.pass = r.measured < r.threshold &&
             m.parallel_iterations >= m.sequential_iterations;
    std::ostringstream os;
    os << "iterations seq " << m.sequential_iterations << " par "
       << m.parallel_iterations;
    r.detail = os.str();
    results.push_back(r);
  }
  {
    CheckResult r;
    r.name = "manufactured-solution convergence";
    r.threshold = 3.5;
    const MmsResult m = mms_convergence();
    r.measured = m.ratios.empty() ? 0.0 : *std::min_element(m.ratios.begin(),
                                                            m.ratios.end());
    r.pass = m.pass();
    std::ostringstream os;
    os << "errors";
    for (double e : m.errors) os << " " << e;
    r.detail = os.str();
    results.push_back(r);
  }
  return results;
}

}  // namespace lpbf
