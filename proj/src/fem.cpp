#include "lpbf/fem.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <thread>

namespace lpbf {
namespace {

// Symmetric 4-point rule, exact through quadratics.
constexpr double kQa = 0.5854101966249685;
constexpr double kQb = 0.1381966011250105;

// Triangle rule (2/3,1/6,1/6), also exact through quadratics.
constexpr std::array<std::array<double, 3>, 3> kTriQp = {{
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
}};

struct TetGeom {
  std::array<Vec3, 4> x;
  std::array<Vec3, 4> grad;  // constant shape-function gradients
  double volume;
};

TetGeom tet_geometry(const Mesh& mesh, int element) {
  TetGeom g;
  const auto& t = mesh.tets[element];
  for (int i = 0; i < 4; ++i) g.x[i] = mesh.nodes[t[i]];
  Eigen::Matrix3d A;
  A.col(0) = g.x[1] - g.x[0];
  A.col(1) = g.x[2] - g.x[0];
  A.col(2) = g.x[3] - g.x[0];
  g.volume = A.determinant() / 6.0;
  const Eigen::Matrix3d Ainv = A.inverse();
  for (int i = 1; i < 4; ++i) g.grad[i] = Ainv.row(i - 1).transpose();
  g.grad[0] = -(g.grad[1] + g.grad[2] + g.grad[3]);
  return g;
}

struct QpProps {
  double conductivity;
  double volumetric_heat;  // c * rho
};

QpProps properties_at(const MaterialModel& mat, MaterialLabel label,
                      double temp_K, bool cut_element, const Vec3& grad_T,
                      double element_length) {
  const SolidProps sol = mat.table.interpolate(to_celsius(temp_K));
  if (label == MaterialLabel::Solid) {
    return {sol.conductivity, sol.heat_capacity * sol.density};
  }
  const double c = powder_heat_capacity(sol.heat_capacity);
  const double rho = powder_density(sol.density, mat.powder.porosity);
  double k = powder_conductivity(mat.powder, sol.conductivity, temp_K);
  if (cut_element) {
    SmoothingParams sp = mat.smoothing;
    sp.element_length = element_length;
    k *= smoothing_factor(sp, grad_T);
  }
  return {k, c * rho};
}

}  // namespace

const std::array<Vec4, 4>& TetQuadrature::barycentric() {
  static const std::array<Vec4, 4> pts = {
      Vec4(kQa, kQb, kQb, kQb), Vec4(kQb, kQa, kQb, kQb),
      Vec4(kQb, kQb, kQa, kQb), Vec4(kQb, kQb, kQb, kQa)};
  return pts;
}

Vec3 qp_position(const Mesh& mesh, int element, int qp) {
  const auto& t = mesh.tets[element];
  const Vec4& l = TetQuadrature::barycentric()[qp];
  return l[0] * mesh.nodes[t[0]] + l[1] * mesh.nodes[t[1]] +
         l[2] * mesh.nodes[t[2]] + l[3] * mesh.nodes[t[3]];
}

DomainState make_uniform_state(const Mesh& mesh, double temp_K,
                               MaterialLabel label, DomainRole role) {
  DomainState s;
  s.T = Eigen::VectorXd::Constant(mesh.node_count(), temp_K);
  s.T_prev = s.T;
  s.qp_labels.assign(mesh.element_count(), {label, label, label, label});
  s.role = role;
  return s;
}

double MaterialModel::conductivity(MaterialLabel label, double temp_K,
                                   bool cut_element, const Vec3& grad_T,
                                   double element_length) const {
  return properties_at(*this, label, temp_K, cut_element, grad_T,
                       element_length)
      .conductivity;
}

BoundaryConditionSet BoundaryConditionSet::global_defaults(double h_conv,
                                                           double h_pow,
                                                           double T_amb_K,
                                                           double T_plate_K) {
  BoundaryConditionSet bc;
  bc.by_tag[FaceTag::BottomPlate] = {ConditionKind::Dirichlet, T_plate_K, 0, 0,
                                     false};
  bc.by_tag[FaceTag::PlateLateral] = {ConditionKind::Adiabatic, 0, 0, 0, false};
  bc.by_tag[FaceTag::PowderLateral] = {ConditionKind::Robin, 0, h_pow, T_amb_K,
                                       false};
  bc.by_tag[FaceTag::TopSurface] = {ConditionKind::Robin, 0, h_conv, T_amb_K,
                                    false};
  return bc;
}

BoundaryConditionSet BoundaryConditionSet::local_defaults(double h_conv,
                                                          double T_amb_K,
                                                          double emissivity,
                                                          double sigma_sb) {
  BoundaryConditionSet bc;
  bc.emissivity = emissivity;
  bc.sigma_sb = sigma_sb;
  bc.by_tag[FaceTag::GammaLateral] = {ConditionKind::GammaDirichlet, 0, 0, 0,
                                      false};
  bc.by_tag[FaceTag::GammaBottom] = {ConditionKind::GammaDirichlet, 0, 0, 0,
                                     false};
  bc.by_tag[FaceTag::TopSurface] = {ConditionKind::Robin, 0, h_conv, T_amb_K,
                                    true};
  return bc;
}

const TagCondition& BoundaryConditionSet::condition(FaceTag tag) const {
  auto it = by_tag.find(tag);
  if (it == by_tag.end()) {
    throw std::invalid_argument(std::string("no boundary condition for tag ") +
                                face_tag_name(tag));
  }
  return it->second;
}

Eigen::SparseMatrix<double> LinearSystem::raw_matrix() const {
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

LinearSystem assemble_step(const Mesh& mesh, const DomainState& state,
                           const BoundaryConditionSet& bc,
                           const MaterialModel& mat,
                           const AssembleOptions& opts) {
  const int n = mesh.node_count();
  if (state.T.size() != n || state.T_prev.size() != n ||
      static_cast<int>(state.qp_labels.size()) != mesh.element_count()) {
    throw std::invalid_argument("assemble_step: state does not match mesh");
  }
  const bool transient = opts.dt > 0.0;
  const double dt = transient ? opts.dt : 1.0;

  LinearSystem sys;
  sys.n = n;
  sys.rhs = Eigen::VectorXd::Zero(n);

  const auto& qps = TetQuadrature::barycentric();
  const int workers = std::max(1, opts.workers);
  const int ne = mesh.element_count();

  struct Buffer {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd rhs;
  };
  std::vector<Buffer> buffers(workers);

  auto element_range = [&](int begin, int end, Buffer& buf) {
    buf.rhs = Eigen::VectorXd::Zero(n);
    buf.trips.reserve(static_cast<std::size_t>(end - begin) * 16);
    Eigen::Matrix4d Ae;
    Eigen::Vector4d be;
    for (int e = begin; e < end; ++e) {
      const TetGeom g = tet_geometry(mesh, e);
      const auto& conn = mesh.tets[e];
      Eigen::Vector4d t_lag, t_old;
      for (int i = 0; i < 4; ++i) {
        t_lag[i] = state.T[conn[i]];
        t_old[i] = state.T_prev[conn[i]];
      }
      const bool cut = state.element_is_cut(e);
      Vec3 grad_lag = Vec3::Zero();
      if (cut) {
        for (int i = 0; i < 4; ++i) grad_lag += t_lag[i] * g.grad[i];
      }

      Ae.setZero();
      be.setZero();
      const double w = g.volume / 4.0;
      for (int q = 0; q < TetQuadrature::kPoints; ++q) {
        const Vec4& l = qps[q];
        const double temp_q = l.dot(t_lag);
        const QpProps props =
            properties_at(mat, state.qp_labels[e][q], temp_q, cut, grad_lag,
                          mesh.nominal_h);
        // stiffness, always implicit
        const double kw = dt * props.conductivity * w;
        for (int i = 0; i < 4; ++i) {
          for (int j = 0; j < 4; ++j) {
            Ae(i, j) += kw * g.grad[i].dot(g.grad[j]);
          }
        }
        if (transient) {
          const double mw = props.volumetric_heat * w;
          const double t_old_q = l.dot(t_old);
          for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
              Ae(i, j) += mw * (l[i] * l[j]);  // keep the product symmetric
            }
            be[i] += mw * l[i] * t_old_q;
          }
        }
        if (opts.source) {
          Vec3 x = Vec3::Zero();
          for (int i = 0; i < 4; ++i) x += l[i] * g.x[i];
          const double q_val = opts.source(e, q, x);
          if (q_val != 0.0) {
            for (int i = 0; i < 4; ++i) be[i] += dt * q_val * w * l[i];
          }
        }
      }
      for (int i = 0; i < 4; ++i) {
        buf.rhs[conn[i]] += be[i];
        for (int j = 0; j < 4; ++j) {
          buf.trips.emplace_back(conn[i], conn[j], Ae(i, j));
        }
      }
    }
  };

  if (workers == 1) {
    element_range(0, ne, buffers[0]);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (ne + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int begin = w * chunk;
      const int end = std::min(ne, begin + chunk);
      pool.emplace_back([&, begin, end, w] {
        element_range(begin, end, buffers[w]);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const Buffer& buf : buffers) {
    sys.triplets.insert(sys.triplets.end(), buf.trips.begin(), buf.trips.end());
    if (buf.rhs.size() == n) sys.rhs += buf.rhs;
  }

  // boundary terms and constraints
  std::vector<std::pair<int, double>> dirichlet;
  const std::vector<std::pair<int, double>>* gamma = opts.gamma_values;
  std::map<int, double> gamma_map;
  if (gamma) gamma_map.insert(gamma->begin(), gamma->end());

  for (const BoundaryFace& f : mesh.boundary) {
    const TagCondition& cond = bc.condition(f.tag);
    switch (cond.kind) {
      case ConditionKind::Adiabatic:
        break;
      case ConditionKind::Dirichlet:
        for (int nd : f.nodes) dirichlet.emplace_back(nd, cond.value);
        break;
      case ConditionKind::GammaDirichlet: {
        if (!gamma) {
          throw std::invalid_argument(
              "assemble_step: gamma values required for this mesh");
        }
        for (int nd : f.nodes) {
          auto it = gamma_map.find(nd);
          if (it == gamma_map.end()) {
            throw std::invalid_argument(
                "assemble_step: gamma node missing a transferred value");
          }
          dirichlet.emplace_back(nd, it->second);
        }
        break;
      }
      case ConditionKind::Robin: {
        const double hw = dt * cond.h * f.area / 3.0;
        for (int q = 0; q < 3; ++q) {
          const auto& l = kTriQp[q];
          for (int i = 0; i < 3; ++i) {
            sys.rhs[f.nodes[i]] += hw * l[i] * cond.t_ref;
            for (int j = 0; j < 3; ++j) {
              sys.triplets.emplace_back(f.nodes[i], f.nodes[j],
                                        hw * (l[i] * l[j]));
            }
          }
        }
        break;
      }
    }
    if (cond.radiation && bc.emissivity > 0.0) {
      const double rw = dt * bc.sigma_sb * bc.emissivity * f.area / 3.0;
      const double t4_ref = std::pow(cond.t_ref, 4);
      for (int q = 0; q < 3; ++q) {
        const auto& l = kTriQp[q];
        double t_lag = 0.0;
        for (int i = 0; i < 3; ++i) t_lag += l[i] * state.T[f.nodes[i]];
        const double flux = std::pow(t_lag, 4) - t4_ref;
        for (int i = 0; i < 3; ++i) sys.rhs[f.nodes[i]] -= rw * l[i] * flux;
      }
    }
  }

  if (opts.flux_functional) {
    if (opts.flux_functional->size() != n) {
      throw std::invalid_argument("assemble_step: flux functional length");
    }
    sys.rhs += dt * (*opts.flux_functional);
  }

  std::sort(dirichlet.begin(), dirichlet.end());
  dirichlet.erase(std::unique(dirichlet.begin(), dirichlet.end()),
                  dirichlet.end());
  sys.dirichlet = std::move(dirichlet);
  return sys;
}

Eigen::VectorXd solve(const LinearSystem& sys, const SolverOptions& opts,
                      const Eigen::VectorXd* guess) {
  const int n = sys.n;
  std::vector<int> to_free(n, -1);
  std::vector<char> fixed(n, 0);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (const auto& [node, value] : sys.dirichlet) {
    fixed[node] = 1;
    g[node] = value;
  }
  int n_free = 0;
  for (int i = 0; i < n; ++i) {
    if (!fixed[i]) to_free[i] = n_free++;
  }
  if (n_free == 0) return g;

  Eigen::VectorXd b(n_free);
  for (int i = 0; i < n; ++i) {
    if (to_free[i] >= 0) b[to_free[i]] = sys.rhs[i];
  }
  std::vector<Eigen::Triplet<double>> kept;
  kept.reserve(sys.triplets.size());
  for (const auto& t : sys.triplets) {
    const int rf = to_free[t.row()], cf = to_free[t.col()];
    if (rf >= 0 && cf >= 0) {
      kept.emplace_back(rf, cf, t.value());
    } else if (rf >= 0) {
      b[rf] -= t.value() * g[t.col()];
    }
  }
  Eigen::SparseMatrix<double> A(n_free, n_free);
  A.setFromTriplets(kept.begin(), kept.end());
  A.makeCompressed();

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                           Eigen::Lower | Eigen::Upper>
      cg;
  cg.setTolerance(opts.tol_rel);
  cg.setMaxIterations(opts.max_iter);
  cg.compute(A);
  Eigen::VectorXd xf;
  if (guess && guess->size() == n) {
    Eigen::VectorXd gf(n_free);
    for (int i = 0; i < n; ++i) {
      if (to_free[i] >= 0) gf[to_free[i]] = (*guess)[i];
    }
    xf = cg.solveWithGuess(b, gf);
  } else {
    xf = cg.solve(b);
  }
  if (cg.info() != Eigen::Success) {
    throw SolveError("conjugate gradients did not converge", cg.error(),
                     static_cast<int>(cg.iterations()));
  }
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = fixed[i] ? g[i] : xf[to_free[i]];
  }
  return x;
}

int picard_step(const Mesh& mesh, DomainState& state,
                const BoundaryConditionSet& bc, const MaterialModel& mat,
                const AssembleOptions& opts, double picard_tol, int picard_max,
                const SolverOptions& solver) {
  double res = 0.0;
  for (int k = 1; k <= picard_max; ++k) {
    const Eigen::VectorXd lag = state.T;
    const LinearSystem sys = assemble_step(mesh, state, bc, mat, opts);
    state.T = solve(sys, solver, &lag);
    res = (state.T - lag).norm() / std::max(lag.norm(), 1e-300);
    if (res < picard_tol) return k;
  }
  throw std::runtime_error("picard_step: no convergence, residual " +
                           std::to_string(res));
}

DomainState steady_plate_solve(const Mesh& mesh, const BoundaryConditionSet& bc,
                               const MaterialModel& mat, double picard_tol,
                               int picard_max, const SolverOptions& solver) {
  if (mesh.is_local) {
    throw std::invalid_argument("steady_plate_solve: global meshes only");
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(mesh.plate_top_z));
  if (std::abs(mesh.zticks.back() - mesh.plate_top_z) > tol) {
    throw std::invalid_argument("steady_plate_solve: mesh must be plate-only");
  }
  const double t_plate = bc.condition(FaceTag::BottomPlate).value;
  DomainState state = make_uniform_state(mesh, t_plate, MaterialLabel::Solid,
                                         DomainRole::Global);
  AssembleOptions opts;
  opts.dt = 0.0;
  picard_step(mesh, state, bc, mat, opts, picard_tol, picard_max, solver);
  state.T_prev = state.T;
  return state;
}

Vec3 element_gradient(const Mesh& mesh, const Eigen::VectorXd& nodal,
                      int element) {
  const TetGeom g = tet_geometry(mesh, element);
  const auto& conn = mesh.tets[element];
  Vec3 grad = Vec3::Zero();
  for (int i = 0; i < 4; ++i) grad += nodal[conn[i]] * g.grad[i];
  return grad;
}

double enthalpy(const Mesh& mesh, const DomainState& state,
                const MaterialModel& mat, const Eigen::VectorXd& coeff_T,
                const Eigen::VectorXd& T) {
  const auto& qps = TetQuadrature::barycentric();
  double total = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const TetGeom g = tet_geometry(mesh, e);
    const auto& conn = mesh.tets[e];
    const bool cut = state.element_is_cut(e);
    Vec3 grad_lag = Vec3::Zero();
    if (cut) grad_lag = element_gradient(mesh, coeff_T, e);
    const double w = g.volume / 4.0;
    for (int q = 0; q < TetQuadrature::kPoints; ++q) {
      const Vec4& l = qps[q];
      double temp_c = 0.0, temp_v = 0.0;
      for (int i = 0; i < 4; ++i) {
        temp_c += l[i] * coeff_T[conn[i]];
        temp_v += l[i] * T[conn[i]];
      }
      const QpProps props = properties_at(mat, state.qp_labels[e][q], temp_c,
                                          cut, grad_lag, mesh.nominal_h);
      total += w * props.volumetric_heat * temp_v;
    }
  }
  return total;
}

double EnergyBreakdown::scale() const {
  return std::max({std::abs(enthalpy_new - enthalpy_prev), std::abs(source_in),
                   std::abs(robin_net), std::abs(reactions), 1e-300});
}

double EnergyBreakdown::imbalance_rel() const {
  return std::abs(imbalance()) / scale();
}

EnergyBreakdown energy_breakdown(const Mesh& mesh, const DomainState& lag_state,
                                 const BoundaryConditionSet& bc,
                                 const MaterialModel& mat,
                                 const AssembleOptions& opts,
                                 const Eigen::VectorXd& T_new) {
  if (!(opts.dt > 0.0)) {
    throw std::invalid_argument("energy_breakdown: transient steps only");
  }
  EnergyBreakdown eb;
  const double dt = opts.dt;

  eb.enthalpy_new = enthalpy(mesh, lag_state, mat, lag_state.T, T_new);
  eb.enthalpy_prev = enthalpy(mesh, lag_state, mat, lag_state.T,
                              lag_state.T_prev);

  if (opts.source) {
    for (int e = 0; e < mesh.element_count(); ++e) {
      const double w = mesh.tet_volume(e) / 4.0;
      for (int q = 0; q < TetQuadrature::kPoints; ++q) {
        eb.source_in += dt * w * opts.source(e, q, qp_position(mesh, e, q));
      }
    }
  }

  for (const BoundaryFace& f : mesh.boundary) {
    const TagCondition& cond = bc.condition(f.tag);
    if (cond.kind == ConditionKind::Robin) {
      const double w = f.area / 3.0;
      for (int q = 0; q < 3; ++q) {
        const auto& l = kTriQp[q];
        double t_new = 0.0;
        for (int i = 0; i < 3; ++i) t_new += l[i] * T_new[f.nodes[i]];
        eb.robin_net -= dt * w * cond.h * (t_new - cond.t_ref);
      }
    }
    if (cond.radiation && bc.emissivity > 0.0) {
      const double w = f.area / 3.0;
      const double t4_ref = std::pow(cond.t_ref, 4);
      for (int q = 0; q < 3; ++q) {
        const auto& l = kTriQp[q];
        double t_lag = 0.0;
        for (int i = 0; i < 3; ++i) t_lag += l[i] * lag_state.T[f.nodes[i]];
        eb.radiation_net -=
            dt * w * bc.sigma_sb * bc.emissivity * (std::pow(t_lag, 4) - t4_ref);
      }
    }
  }

  if (opts.flux_functional) {
    eb.flux_in = dt * opts.flux_functional->sum();
  }

  const LinearSystem sys = assemble_step(mesh, lag_state, bc, mat, opts);
  const Eigen::VectorXd residual = sys.raw_matrix() * T_new - sys.rhs;
  std::vector<char> fixed(sys.n, 0);
  for (const auto& [node, value] : sys.dirichlet) fixed[node] = 1;
  for (int i = 0; i < sys.n; ++i) {
    (fixed[i] ? eb.reactions : eb.solver_defect) += residual[i];
  }
  return eb;
}

double l2_error(const Mesh& mesh, const Eigen::VectorXd& nodal,
                const std::function<double(const Vec3&)>& exact) {
  const auto& qps = TetQuadrature::barycentric();
  double acc = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& conn = mesh.tets[e];
    const double w = mesh.tet_volume(e) / 4.0;
    for (int q = 0; q < TetQuadrature::kPoints; ++q) {
      const Vec4& l = qps[q];
      const Vec3 x = qp_position(mesh, e, q);
      double v = 0.0;
      for (int i = 0; i < 4; ++i) v += l[i] * nodal[conn[i]];
      const double d = v - exact(x);
      acc += w * d * d;
    }
  }
  return std::sqrt(acc);
}

double l2_norm(const Mesh& mesh, const Eigen::VectorXd& nodal,
               const std::function<bool(const Vec3&)>& keep) {
  const auto& qps = TetQuadrature::barycentric();
  double acc = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    if (keep && !keep(mesh.tet_centroid(e))) continue;
    const auto& conn = mesh.tets[e];
    const double w = mesh.tet_volume(e) / 4.0;
    for (int q = 0; q < TetQuadrature::kPoints; ++q) {
      const Vec4& l = qps[q];
      double v = 0.0;
      for (int i = 0; i < 4; ++i) v += l[i] * nodal[conn[i]];
      acc += w * v * v;
    }
  }
  return std::sqrt(acc);
}

}  // namespace lpbf
