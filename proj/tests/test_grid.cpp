#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "lpbf/grid.hpp"
#include "test_support.hpp"

using namespace lpbf;

namespace {

Mesh plate_only(double lx, double ly, double lz, double h_plane, double h_z) {
  const Box3 plate(Vec3(0, 0, 0), Vec3(lx, ly, lz));
  const Box3 powder(Vec3(0, 0, lz), Vec3(lx, ly, lz + 0.1));
  return build_global_mesh(plate, powder, h_plane, h_z);
}

}  // namespace

TEST_SUITE_BEGIN("grid");

TEST_CASE("single cell splits into six tets over eight nodes") {
  const Mesh mesh = plate_only(1.0, 1.0, 1.0, 1.0, 1.0);
  CHECK(mesh.element_count() == 6);
  CHECK(mesh.node_count() == 8);
  for (int e = 0; e < 6; ++e) CHECK(mesh.tet_volume(e) > 0.0);
  CHECK(audit_mesh(mesh).pass());
}

TEST_CASE("2x2x1 cells: 24 conforming tets") {
  const Mesh mesh = plate_only(2.0, 2.0, 1.0, 1.0, 1.0);
  CHECK(mesh.element_count() == 24);
  const MeshAudit audit = audit_mesh(mesh);
  CHECK(audit.conforming);
  CHECK(audit.tags_partition_boundary);
}

TEST_CASE("100x100x12 mm plate at 4 mm spacing") {
  const Mesh mesh = plate_only(0.1, 0.1, 0.012, 4e-3, 4e-3);
  CHECK(mesh.element_count() == 25 * 25 * 3 * 6);
  CHECK(audit_mesh(mesh).volume_error_rel < 1e-10);
}

TEST_CASE("invalid spacings rejected") {
  CHECK_THROWS(plate_only(1.0, 1.0, 1.0, -1.0, 1.0));
  CHECK_THROWS(plate_only(1.0, 1.0, 1.0, 0.3, 1.0));  // does not divide
  // powder footprint must match the plate
  const Box3 plate(Vec3(0, 0, 0), Vec3(1, 1, 1));
  const Box3 powder(Vec3(0, 0, 1), Vec3(2, 1, 2));
  CHECK_THROWS(build_global_mesh(plate, powder, 1.0, 1.0));
  const Box3 gap(Vec3(0, 0, 2), Vec3(1, 1, 3));
  CHECK_THROWS(build_global_mesh(plate, gap, 1.0, 1.0));
}

TEST_CASE("activation grows one layer over the footprint") {
  const Box3 plate(Vec3(0, 0, 0), Vec3(2e-3, 2e-3, 1e-3));
  const Box3 powder(Vec3(0, 0, 1e-3), Vec3(2e-3, 2e-3, 4e-3));
  Mesh mesh = build_global_mesh(plate, powder, 1e-3, 1e-3);
  GrowthState growth{0, 1e-3, 1e-3};

  const int nodes0 = mesh.node_count();
  const int elems0 = mesh.element_count();
  const BornIds born1 = activate_layer(mesh, growth);
  CHECK(born1.elements.size() == 2 * 2 * 6);
  CHECK(born1.nodes.size() == 3 * 3);
  CHECK(born1.nodes.front() == nodes0);
  CHECK(born1.elements.front() == elems0);
  CHECK(growth.activated_layers == 1);
  CHECK(growth.top_z == doctest::Approx(2e-3));

  const BornIds born2 = activate_layer(mesh, growth);
  std::set<int> s1(born1.elements.begin(), born1.elements.end());
  for (int e : born2.elements) CHECK(s1.count(e) == 0);

  CHECK(audit_mesh(mesh).pass());
}

TEST_CASE("tags move with the top surface") {
  const Box3 plate(Vec3(0, 0, 0), Vec3(2e-3, 2e-3, 1e-3));
  const Box3 powder(Vec3(0, 0, 1e-3), Vec3(2e-3, 2e-3, 4e-3));
  Mesh mesh = build_global_mesh(plate, powder, 1e-3, 1e-3);
  GrowthState growth{0, 1e-3, 1e-3};
  activate_layer(mesh, growth);

  int top_faces = 0, powder_lateral = 0, plate_lateral = 0, bottom = 0;
  for (const BoundaryFace& f : mesh.boundary) {
    switch (f.tag) {
      case FaceTag::TopSurface: {
        ++top_faces;
        for (int nd : f.nodes) {
          CHECK(mesh.nodes[nd].z() == doctest::Approx(growth.top_z));
        }
        break;
      }
      case FaceTag::PowderLateral: ++powder_lateral; break;
      case FaceTag::PlateLateral: ++plate_lateral; break;
      case FaceTag::BottomPlate: ++bottom; break;
      default: FAIL("unexpected tag on a global mesh");
    }
  }
  CHECK(top_faces == 2 * 2 * 2);
  CHECK(bottom == 2 * 2 * 2);
  // one element layer of plate and one of powder on each side wall
  CHECK(plate_lateral == powder_lateral);
}

TEST_CASE("activation stops at the configured build height") {
  const Box3 plate(Vec3(0, 0, 0), Vec3(1e-3, 1e-3, 1e-3));
  const Box3 powder(Vec3(0, 0, 1e-3), Vec3(1e-3, 1e-3, 2e-3));
  Mesh mesh = build_global_mesh(plate, powder, 1e-3, 1e-3);
  GrowthState growth{0, 1e-3, 1e-3};
  activate_layer(mesh, growth);
  CHECK_THROWS(activate_layer(mesh, growth));
}

TEST_CASE("volume audit holds before and after every activation") {
  const Box3 plate(Vec3(0, 0, -2e-3), Vec3(9e-3, 6e-3, 0));
  const Box3 powder(Vec3(0, 0, 0), Vec3(9e-3, 6e-3, 5e-3));
  Mesh mesh = build_global_mesh(plate, powder, 3e-3, 1e-3);
  GrowthState growth{0, 0.0, 1e-3};
  CHECK(audit_mesh(mesh).volume_error_rel < 1e-10);
  for (int i = 0; i < 5; ++i) {
    activate_layer(mesh, growth);
    CHECK(audit_mesh(mesh).volume_error_rel < 1e-10);
  }
}

TEST_CASE("local mesh construction and counts") {
  const Box3 global(Vec3(0, 0, 0), Vec3(20e-3, 20e-3, 10e-3));
  LocalBox box;
  box.x_lo = 5e-3;
  box.x_hi = 15e-3;
  box.y_lo = 5e-3;
  box.y_hi = 15e-3;
  box.z_top = 10e-3;
  box.depth = 5e-3;
  box.floor_z = 0.0;
  box.h = 1e-3;
  const Mesh mesh = build_local_mesh(box, global, 10e-3);
  CHECK(mesh.element_count() == 10 * 10 * 5 * 6);
  CHECK(audit_mesh(mesh).pass());

  int gamma_lateral = 0, gamma_bottom = 0, top = 0;
  for (const BoundaryFace& f : mesh.boundary) {
    if (f.tag == FaceTag::GammaLateral) ++gamma_lateral;
    if (f.tag == FaceTag::GammaBottom) ++gamma_bottom;
    if (f.tag == FaceTag::TopSurface) ++top;
  }
  CHECK(gamma_bottom == 10 * 10 * 2);
  CHECK(top == 10 * 10 * 2);
  CHECK(gamma_lateral == 4 * 10 * 5 * 2);
}

TEST_CASE("single-cell local box") {
  const Box3 global(Vec3(0, 0, 0), Vec3(3e-3, 3e-3, 3e-3));
  LocalBox box{1e-3, 2e-3, 1e-3, 2e-3, 3e-3, 1e-3, 0.0, 1e-3};
  const Mesh mesh = build_local_mesh(box, global, 3e-3);
  CHECK(mesh.element_count() == 6);
}

TEST_CASE("local box flush with the global boundary is rejected") {
  const Box3 global(Vec3(0, 0, 0), Vec3(10e-3, 10e-3, 5e-3));
  LocalBox box{0.0, 10e-3, 2e-3, 8e-3, 5e-3, 2e-3, 0.0, 1e-3};
  CHECK_THROWS(build_local_mesh(box, global, 5e-3));
}

TEST_CASE("local box shifts and clamps at the floor") {
  LocalBox box{0, 10e-3, 0, 10e-3, /*z_top=*/1e-3, /*depth=*/5e-3,
               /*floor_z=*/0.0, 1e-3};
  CHECK(box.z_bottom() == doctest::Approx(0.0));  // pinned at the plate top

  GrowthState growth{1, 2e-3, 1e-3};
  const LocalBox s1 = shift_local_box(box, growth);
  CHECK(s1.z_top == doctest::Approx(2e-3));
  CHECK(s1.z_bottom() == doctest::Approx(0.0));  // still pinned

  LocalBox b = box;
  for (int n = 1; n <= 10; ++n) {
    b = shift_local_box(b, growth);
    CHECK(b.z_top == doctest::Approx(1e-3 + n * 1e-3));
    CHECK(b.x_lo == box.x_lo);
    CHECK(b.depth == box.depth);
  }
  CHECK(b.z_bottom() == doctest::Approx(11e-3 - 5e-3));  // clamp released
}

TEST_CASE("locate: node, centroid, and reconstruction identity") {
  const Mesh mesh = plate_only(4e-3, 4e-3, 2e-3, 1e-3, 1e-3);

  const Location at_node = locate_point(mesh, mesh.nodes[7]);
  int ones = 0;
  for (int i = 0; i < 4; ++i) {
    if (at_node.bary[i] > 0.999) ++ones;
    CHECK(at_node.bary[i] >= -1e-9);
  }
  CHECK(ones == 1);

  const Vec3 centroid = mesh.tet_centroid(11);
  const Location at_centroid = locate_point(mesh, centroid);
  CHECK(at_centroid.element == 11);
  for (int i = 0; i < 4; ++i) {
    CHECK(at_centroid.bary[i] == doctest::Approx(0.25));
  }

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(4e-3 * u(rng), 4e-3 * u(rng), 2e-3 * u(rng));
    const Location loc = locate_point(mesh, p);
    Vec3 rebuilt = Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
      rebuilt += loc.bary[k] * mesh.nodes[mesh.tets[loc.element][k]];
    }
    CHECK((rebuilt - p).norm() <= 1e-12 * std::max(1.0, p.norm()));
    CHECK(loc.bary.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(locate_point(mesh, Vec3(5e-3, 1e-3, 1e-3)),
                  std::out_of_range);
}

TEST_CASE("vtk snapshot is well formed") {
  testing::TempDir tmp("vtk");
  const Mesh mesh = plate_only(2e-3, 2e-3, 1e-3, 1e-3, 1e-3);
  Eigen::VectorXd temp =
      Eigen::VectorXd::LinSpaced(mesh.node_count(), 300.0, 400.0);
  write_vtk(tmp.file("snap.vtk"), mesh, temp, "test");

  std::ifstream in(tmp.file("snap.vtk"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "# vtk DataFile Version 3.0");
  int cell_type_10 = 0;
  bool has_points = false, has_temperature = false;
  while (std::getline(in, line)) {
    if (line.rfind("POINTS", 0) == 0) has_points = true;
    if (line.rfind("SCALARS temperature", 0) == 0) has_temperature = true;
    if (line == "10") ++cell_type_10;
  }
  CHECK(has_points);
  CHECK(has_temperature);
  CHECK(cell_type_10 == mesh.element_count());
}

TEST_SUITE_END();
