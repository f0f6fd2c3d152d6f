#include <doctest.h>

#include <Eigen/Dense>

#include <map>
#include <random>

#include "lpbf/checks.hpp"
#include "lpbf/twolevel.hpp"

using namespace lpbf;

namespace {

// 3x3x3 mm global box of 1 mm cells with the top 1 mm grown as a layer.
struct Rig {
  Mesh global_mesh;
  Mesh local_mesh;
  InterfaceMap map;
  LocalBox box;

  explicit Rig(const LocalBox& b) : box(b) {
    const Box3 plate(Vec3(0, 0, 0), Vec3(3e-3, 3e-3, 2e-3));
    const Box3 powder(Vec3(0, 0, 2e-3), Vec3(3e-3, 3e-3, 3e-3));
    global_mesh = build_global_mesh(plate, powder, 1e-3, 1e-3);
    GrowthState growth{0, 2e-3, 1e-3};
    activate_layer(global_mesh, growth);
    local_mesh = build_local_mesh(box, global_mesh.extent(), 3e-3);
    map = build_interface_map(global_mesh, local_mesh);
  }
};

LocalBox center_box() {
  // one fine cell strictly inside the global cell [1,2]x[1,2]x[2,3] mm
  LocalBox box;
  box.x_lo = 1.25e-3;
  box.x_hi = 1.75e-3;
  box.y_lo = 1.25e-3;
  box.y_hi = 1.75e-3;
  box.z_top = 3e-3;
  box.depth = 0.5e-3;
  box.floor_z = 0.0;
  box.h = 0.5e-3;
  return box;
}

Eigen::VectorXd nodal_field(const Mesh& mesh,
                            const std::function<double(const Vec3&)>& f) {
  Eigen::VectorXd v(mesh.node_count());
  for (int nd = 0; nd < mesh.node_count(); ++nd) v[nd] = f(mesh.nodes[nd]);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("twolevel");

TEST_CASE("gamma area audit matches the analytic box surface") {
  LocalBox box;
  box.x_lo = 0.5e-3;
  box.x_hi = 2.5e-3;
  box.y_lo = 0.5e-3;
  box.y_hi = 1.5e-3;
  box.z_top = 3e-3;
  box.depth = 1.5e-3;
  box.floor_z = 0.0;
  box.h = 0.5e-3;
  Rig rig(box);

  const double lx = 2e-3, ly = 1e-3, d = 1.5e-3;
  const double expected = 2.0 * (lx + ly) * d + lx * ly;
  CHECK(rig.map.gamma_area == doctest::Approx(expected).epsilon(1e-10));

  double from_weights = 0.0;
  for (const GammaQuadPoint& qp : rig.map.qps) from_weights += qp.area_weight;
  CHECK(from_weights == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("aligned boxes give barycentric weights inside [0,1]") {
  LocalBox box;
  box.x_lo = 1e-3;
  box.x_hi = 2e-3;
  box.y_lo = 1e-3;
  box.y_hi = 2e-3;
  box.z_top = 3e-3;
  box.depth = 1e-3;
  box.floor_z = 0.0;
  box.h = 1e-3;
  Rig rig(box);
  for (const GammaNode& gn : rig.map.nodes) {
    for (int i = 0; i < 4; ++i) {
      CHECK(gn.global_weights[i] >= -1e-12);
      CHECK(gn.global_weights[i] <= 1.0 + 1e-12);
    }
    CHECK(gn.global_weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("a box inside one global cell maps to that cell only") {
  Rig rig(center_box());
  std::map<int, int> cells;
  for (const GammaQuadPoint& qp : rig.map.qps) {
    cells[qp.global_element / 6] += 1;
    const Vec3 c = rig.global_mesh.tet_centroid(qp.global_element);
    CHECK(c.x() > 1e-3);
    CHECK(c.x() < 2e-3);
    CHECK(c.y() > 1e-3);
    CHECK(c.y() < 2e-3);
    CHECK(c.z() > 2e-3);
  }
  CHECK(cells.size() == 1);
}

TEST_CASE("local boxes outside the global mesh fail to map") {
  LocalBox box = center_box();
  box.depth = 5e-3;   // pokes out below the plate
  box.floor_z = -1.0; // no clamp to rescue it
  const Box3 fake_extent(Vec3(-1, -1, -1), Vec3(1, 1, 1));
  Mesh local = build_local_mesh(box, fake_extent, 3e-3);
  Rig rig(center_box());
  CHECK_THROWS(build_interface_map(rig.global_mesh, local));
}

TEST_CASE("dirichlet transfer: constant, linear, and hand-computed values") {
  Rig rig(center_box());

  const Eigen::VectorXd constant =
      Eigen::VectorXd::Constant(rig.global_mesh.node_count(), 321.5);
  for (const auto& [node, value] : transfer_dirichlet(rig.map, constant)) {
    CHECK(value == doctest::Approx(321.5).epsilon(1e-13));
  }

  auto linear = [](const Vec3& p) {
    return 300.0 + 1e4 * p.x() - 3e3 * p.y() + 7e3 * p.z();
  };
  const Eigen::VectorXd lin = nodal_field(rig.global_mesh, linear);
  for (const auto& [node, value] : transfer_dirichlet(rig.map, lin)) {
    CHECK(value ==
          doctest::Approx(linear(rig.local_mesh.nodes[node])).epsilon(1e-12));
  }

  // random field: recompute the interpolation independently per gamma node
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(300.0, 500.0);
  Eigen::VectorXd random(rig.global_mesh.node_count());
  for (int i = 0; i < random.size(); ++i) random[i] = u(rng);
  const auto transferred = transfer_dirichlet(rig.map, random);
  int probes = 0;
  for (std::size_t i = 0; i < transferred.size() && probes < 3;
       i += 7, ++probes) {
    const auto& [node, value] = transferred[i];
    const Vec3& p = rig.local_mesh.nodes[node];
    bool found = false;
    for (int e = 0; e < rig.global_mesh.element_count() && !found; ++e) {
      const auto& t = rig.global_mesh.tets[e];
      Eigen::Matrix3d A;
      A.col(0) = rig.global_mesh.nodes[t[1]] - rig.global_mesh.nodes[t[0]];
      A.col(1) = rig.global_mesh.nodes[t[2]] - rig.global_mesh.nodes[t[0]];
      A.col(2) = rig.global_mesh.nodes[t[3]] - rig.global_mesh.nodes[t[0]];
      const Vec3 l = A.partialPivLu().solve(p - rig.global_mesh.nodes[t[0]]);
      const Vec4 bary(1.0 - l.sum(), l[0], l[1], l[2]);
      if (bary.minCoeff() < -1e-10) continue;
      found = true;
      double expected = 0.0;
      for (int k = 0; k < 4; ++k) expected += bary[k] * random[t[k]];
      CHECK(value == doctest::Approx(expected).epsilon(1e-10));
    }
    CHECK(found);
  }
}

TEST_CASE("flux functional vanishes without a jump or a gradient") {
  Rig rig(center_box());
  const auto nq = static_cast<Eigen::Index>(rig.map.qps.size());

  const Eigen::VectorXd lin = nodal_field(rig.local_mesh, [](const Vec3& p) {
    return 400.0 + 2e4 * p.z() + 3e3 * p.x();
  });
  const Eigen::VectorXd same = Eigen::VectorXd::Constant(nq, 14.0);
  CHECK(assemble_flux_functional(rig.map, rig.local_mesh, lin, same, same)
            .norm() == 0.0);

  const Eigen::VectorXd constant =
      Eigen::VectorXd::Constant(rig.local_mesh.node_count(), 350.0);
  const Eigen::VectorXd kp = Eigen::VectorXd::Constant(nq, 14.0);
  const Eigen::VectorXd km = Eigen::VectorXd::Constant(nq, 0.3);
  CHECK(assemble_flux_functional(rig.map, rig.local_mesh, constant, kp, km)
            .norm() < 1e-9);
}

TEST_CASE("flux functional distributes area/3 per vertex on aligned faces") {
  // local box == one global cell: gamma faces coincide with global element
  // faces, so the exact surface integrals of the linear basis apply
  LocalBox box;
  box.x_lo = 1e-3;
  box.x_hi = 2e-3;
  box.y_lo = 1e-3;
  box.y_hi = 2e-3;
  box.z_top = 3e-3;
  box.depth = 1e-3;
  box.floor_z = 0.0;
  box.h = 1e-3;
  Rig rig(box);

  const double grad_z = 5e4;
  const Eigen::VectorXd field = nodal_field(
      rig.local_mesh, [&](const Vec3& p) { return 300.0 + grad_z * p.z(); });
  const auto nq = static_cast<Eigen::Index>(rig.map.qps.size());
  const double kp = 14.0, km = 0.3;
  const Eigen::VectorXd F = assemble_flux_functional(
      rig.map, rig.local_mesh, field, Eigen::VectorXd::Constant(nq, kp),
      Eigen::VectorXd::Constant(nq, km));

  // gradient is vertical: only the bottom faces carry eta, with n = -z
  const double eta = (kp - km) * grad_z * -1.0;

  std::map<int, double> expected;  // global node -> value
  auto global_node_at = [&](const Vec3& p) {
    for (int nd = 0; nd < rig.global_mesh.node_count(); ++nd) {
      if ((rig.global_mesh.nodes[nd] - p).norm() < 1e-12) return nd;
    }
    FAIL("no coincident global node");
    return -1;
  };
  for (const BoundaryFace& f : rig.local_mesh.boundary) {
    if (f.tag != FaceTag::GammaBottom) continue;
    for (int nd : f.nodes) {
      expected[global_node_at(rig.local_mesh.nodes[nd])] += eta * f.area / 3.0;
    }
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < F.size(); ++i) {
    const auto it = expected.find(static_cast<int>(i));
    const double want = it == expected.end() ? 0.0 : it->second;
    CHECK(F[i] == doctest::Approx(want).epsilon(1e-10));
    total += F[i];
  }
  CHECK(total == doctest::Approx(eta * 1e-3 * 1e-3).epsilon(1e-10));
}

TEST_CASE("flux functional is linear in the local field") {
  Rig rig(center_box());
  const auto nq = static_cast<Eigen::Index>(rig.map.qps.size());
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(200.0, 900.0);
  Eigen::VectorXd t1(rig.local_mesh.node_count()),
      t2(rig.local_mesh.node_count());
  for (int i = 0; i < t1.size(); ++i) {
    t1[i] = u(rng);
    t2[i] = u(rng);
  }
  Eigen::VectorXd kp(nq), km(nq);
  for (Eigen::Index i = 0; i < nq; ++i) {
    kp[i] = 10.0 + 0.01 * static_cast<double>(i % 7);
    km[i] = 0.3 + 0.001 * static_cast<double>(i % 5);
  }
  const double a = 1.7, b = -0.4;
  const Eigen::VectorXd lhs = assemble_flux_functional(
      rig.map, rig.local_mesh, a * t1 + b * t2, kp, km);
  const Eigen::VectorXd rhs =
      a * assemble_flux_functional(rig.map, rig.local_mesh, t1, kp, km) +
      b * assemble_flux_functional(rig.map, rig.local_mesh, t2, kp, km);
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("uniform matched state is a one-iteration fixed point") {
  Rig rig(center_box());
  const double t0 = 340.0;
  const MaterialModel mat{MaterialTable::constant(14.0, 500.0, 7900.0), {}, {}};
  const auto gbc = BoundaryConditionSet::global_defaults(5.0, 25.0, t0, t0);
  const auto lbc =
      BoundaryConditionSet::local_defaults(5.0, t0, 0.0, kStefanBoltzmann);
  CoupledState cs;
  cs.global = make_uniform_state(rig.global_mesh, t0, MaterialLabel::Solid,
                                 DomainRole::Global);
  cs.local = make_uniform_state(rig.local_mesh, t0, MaterialLabel::Solid,
                                DomainRole::Local);
  CouplingConfig cfg;
  cfg.tolerance = 1e-10;
  coupled_step(cs, rig.global_mesh, rig.local_mesh, rig.map, gbc, lbc, mat,
               cfg, 1.0);
  CHECK(cs.iterations == 1);
  CHECK((cs.global.T.array() - t0).abs().maxCoeff() < 1e-7);
  CHECK((cs.local.T.array() - t0).abs().maxCoeff() < 1e-7);
}

TEST_CASE("relaxation blends the unrelaxed update with the previous iterate") {
  Rig rig(center_box());
  const MaterialModel mat{MaterialTable::constant(14.0, 500.0, 7900.0), {}, {}};
  const auto gbc = BoundaryConditionSet::global_defaults(
      25.0, 25.0, to_kelvin(25.0), to_kelvin(80.0));
  const auto lbc = BoundaryConditionSet::local_defaults(
      25.0, to_kelvin(25.0), 0.0, kStefanBoltzmann);

  auto initial = [&] {
    CoupledState cs;
    cs.global = make_uniform_state(rig.global_mesh, 400.0,
                                   MaterialLabel::Solid, DomainRole::Global);
    cs.local = make_uniform_state(rig.local_mesh, 400.0, MaterialLabel::Solid,
                                  DomainRole::Local);
    return cs;
  };

  auto one_iteration = [&](double theta) {
    CoupledState cs = initial();
    CouplingConfig cfg;
    cfg.theta = theta;
    cfg.tolerance = 0.0;  // never converges
    cfg.max_outer = 1;
    CHECK_THROWS_AS(coupled_step(cs, rig.global_mesh, rig.local_mesh, rig.map,
                                 gbc, lbc, mat, cfg, 1.0),
                    CouplingError);
    return cs.global.T;
  };

  const Eigen::VectorXd unrelaxed = one_iteration(1.0);
  const Eigen::VectorXd relaxed = one_iteration(0.5);
  const Eigen::VectorXd blend =
      0.5 * unrelaxed +
      0.5 * Eigen::VectorXd::Constant(rig.global_mesh.node_count(), 400.0);
  CHECK((relaxed - blend).cwiseAbs().maxCoeff() < 1e-10);
  for (int i = 0; i < relaxed.size(); ++i) {
    const double lo = std::min(unrelaxed[i], 400.0) - 1e-12;
    const double hi = std::max(unrelaxed[i], 400.0) + 1e-12;
    CHECK(relaxed[i] >= lo);
    CHECK(relaxed[i] <= hi);
  }
}

TEST_CASE("a converged state is a fixed point of both modes") {
  Rig rig(center_box());
  const MaterialModel mat{MaterialTable::constant(14.0, 500.0, 7900.0), {}, {}};
  const auto gbc = BoundaryConditionSet::global_defaults(
      25.0, 25.0, to_kelvin(25.0), to_kelvin(80.0));
  const auto lbc = BoundaryConditionSet::local_defaults(
      25.0, to_kelvin(25.0), 0.0, kStefanBoltzmann);

  CoupledState cs;
  cs.global = make_uniform_state(rig.global_mesh, 380.0, MaterialLabel::Solid,
                                 DomainRole::Global);
  cs.local = make_uniform_state(rig.local_mesh, 380.0, MaterialLabel::Solid,
                                DomainRole::Local);
  CouplingConfig cfg;
  cfg.tolerance = 1e-6;
  cfg.max_outer = 50;
  const Eigen::VectorXd prev_g = cs.global.T_prev;
  const Eigen::VectorXd prev_l = cs.local.T_prev;
  coupled_step(cs, rig.global_mesh, rig.local_mesh, rig.map, gbc, lbc, mat,
               cfg, 1.0);

  // rewind the time-step commit and redo the same step in the other mode
  CoupledState redo = cs;
  redo.global.T_prev = prev_g;
  redo.local.T_prev = prev_l;
  CouplingConfig par = cfg;
  par.mode = CouplingMode::Parallel;
  coupled_step(redo, rig.global_mesh, rig.local_mesh, rig.map, gbc, lbc, mat,
               par, 1.0);
  CHECK(redo.iterations == 1);
  CHECK((redo.global.T - cs.global.T).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("two-level solution matches a single-mesh solve away from the box") {
  const MaterialModel mat{
      MaterialTable::load_csv("data/ss316l.csv"), {}, {0.2, 0.0, 0.05}};
  const ConsistencyResult r =
      consistency_check(mat, CouplingMode::Sequential, 1e-6);
  CHECK(r.rel_error < 1e-3);
}

TEST_SUITE_END();
