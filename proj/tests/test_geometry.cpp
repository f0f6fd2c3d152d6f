#include <doctest.h>

#include <fstream>
#include <random>

#include "lpbf/geometry.hpp"
#include "lpbf/shapes.hpp"
#include "test_support.hpp"

using namespace lpbf;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("ascii stl with a single facet") {
  testing::TempDir tmp("stl");
  write_stl_ascii(tmp.file("one.stl"), {{Vec3(0, 0, 0), Vec3(1, 0, 0),
                                         Vec3(0, 1, 0)}},
                  "one");
  const TriangleSoup soup = load_stl(tmp.file("one.stl"));
  CHECK(soup.triangles().size() == 1);
}

TEST_CASE("binary cube stl round trip") {
  testing::TempDir tmp("stl");
  write_stl_binary(tmp.file("cube.stl"),
                   cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  const TriangleSoup soup = load_stl(tmp.file("cube.stl"));
  CHECK(soup.triangles().size() == 12);
  CHECK(soup.bounding_box().min().isApprox(Vec3(0, 0, 0)));
  CHECK(soup.bounding_box().max().isApprox(Vec3(1, 1, 1)));
}

TEST_CASE("binary stl with a 'solid' header falls back correctly") {
  testing::TempDir tmp("stl");
  // some exporters write binary files whose 80-byte header starts with
  // "solid"; the ascii parse fails and the binary parser must take over
  write_stl_binary(tmp.file("tricky.stl"),
                   cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  std::fstream f(tmp.file("tricky.stl"),
                 std::ios::in | std::ios::out | std::ios::binary);
  f.write("solid tricky", 12);
  f.close();
  const TriangleSoup soup = load_stl(tmp.file("tricky.stl"));
  CHECK(soup.triangles().size() == 12);
}

TEST_CASE("empty and malformed files are parse errors") {
  testing::TempDir tmp("stl");
  { std::ofstream out(tmp.file("empty.stl")); }
  CHECK_THROWS(load_stl(tmp.file("empty.stl")));
  {
    std::ofstream out(tmp.file("short.stl"), std::ios::binary);
    out << "solid nope";
  }
  CHECK_THROWS(load_stl(tmp.file("short.stl")));
  CHECK_THROWS(load_stl(tmp.file("missing.stl")));
}

TEST_CASE("degenerate facets are dropped with a count") {
  auto tris = cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1));
  tris.push_back({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});  // zero area
  const TriangleSoup soup = TriangleSoup::from_triangles(tris);
  CHECK(soup.triangles().size() == 12);
  CHECK(soup.dropped_degenerate() == 1);

  CHECK_THROWS(TriangleSoup::from_triangles(
      {{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}}));
}

TEST_CASE("cube classification basics") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  CHECK(classify_point(cube, Vec3(0.5, 0.5, 0.5)).label ==
        MaterialLabel::Solid);
  CHECK(classify_point(cube, Vec3(2, 2, 2)).label == MaterialLabel::Powder);
  CHECK(classify_point(cube, Vec3(-0.1, 0.5, 0.5)).label ==
        MaterialLabel::Powder);
}

TEST_CASE("boundary band classifies as solid") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  CHECK(classify_point(cube, Vec3(1.0 + 5e-7, 0.5, 0.5)).label ==
        MaterialLabel::Solid);
  CHECK(classify_point(cube, Vec3(1.0 + 2e-6, 0.5, 0.5)).label ==
        MaterialLabel::Powder);
  CHECK(classify_point(cube, Vec3(1.0, 0.5, 0.5)).label ==
        MaterialLabel::Solid);
}

TEST_CASE("classification survives points aimed at edges and vertices") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(2, 2, 2)));
  // query points aligned with the lattice of facet edges
  CHECK(classify_point(cube, Vec3(1, 1, 1)).label == MaterialLabel::Solid);
  CHECK(classify_point(cube, Vec3(1, 1, 3)).label == MaterialLabel::Powder);
  CHECK(classify_point(cube, Vec3(0.5, 0.5, 1)).label == MaterialLabel::Solid);
}

TEST_CASE("translation equivariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 2.5);
  const Vec3 shift(0.31, -1.27, 5.09);
  auto tris = cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1));
  auto shifted = tris;
  for (Triangle& t : shifted) {
    t.v0 += shift;
    t.v1 += shift;
    t.v2 += shift;
  }
  const TriangleSoup a = TriangleSoup::from_triangles(tris);
  const TriangleSoup b = TriangleSoup::from_triangles(shifted);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK(a.classify(p) == b.classify(p + shift));
  }
}

TEST_CASE("watertight convex solid agrees with the half-space test") {
  const Vec3 lo(0.0, -1.0, 2.0), hi(3.0, 2.0, 4.5);
  const auto tris = cube_triangles(lo, hi);
  const TriangleSoup soup = TriangleSoup::from_triangles(tris);

  auto half_space_inside = [&](const Vec3& p) {
    for (const Triangle& t : tris) {
      if ((p - t.v0).dot(t.normal()) > 0.0) return false;
    }
    return true;
  };

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(-1.0, 4.0), uy(-2.0, 3.0),
      uz(1.0, 5.5);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    // skip the band where the two rules may legitimately differ
    if (soup.distance_within(p, 1e-5) <= kBoundaryBandMm) continue;
    ++checked;
    CHECK((soup.classify(p) == MaterialLabel::Solid) == half_space_inside(p));
  }
  CHECK(checked > 9900);
}

TEST_CASE("cylinder classification against the analytic membership test") {
  const double r = 5.0, cx = 15.0, cy = 15.0, z0 = 0.0, z1 = 20.0;
  const int segments = 8192;  // facet sagitta ~2e-7 mm, below the band
  const TriangleSoup soup = TriangleSoup::from_triangles(
      cylinder_triangles(r, cx, cy, z0, z1, segments));

  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> uxy(8.0, 22.0), uz(-1.0, 21.0);
  int mismatches = 0, checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p(uxy(rng), uxy(rng), uz(rng));
    const double rho = std::hypot(p.x() - cx, p.y() - cy);
    // outside the faceting/boundary band of every surface
    if (std::abs(rho - r) < 1e-5 || std::abs(p.z() - z0) < 1e-5 ||
        std::abs(p.z() - z1) < 1e-5) {
      continue;
    }
    ++checked;
    const bool analytic = rho <= r && p.z() >= z0 && p.z() <= z1;
    if ((soup.classify(p) == MaterialLabel::Solid) != analytic) ++mismatches;
  }
  CHECK(mismatches == 0);
  CHECK(checked > 9000);
}

TEST_CASE("batch classification equals per-point classification") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));

  CHECK(classify_layer_points(cube, {}, 0.0, 1.0).empty());

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 64; ++i) pts.emplace_back(u(rng), u(rng), 0.25 + 0.5 * u(rng));
  const auto batch = classify_layer_points(cube, pts, -0.5, 1.5);
  REQUIRE(batch.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(batch[i].label == classify_point(cube, pts[i]).label);
  }
}

TEST_CASE("batch classification rejects points outside the z band") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  CHECK_THROWS_AS(
      classify_layer_points(cube, {Vec3(0.5, 0.5, 0.9)}, 0.0, 0.5),
      std::invalid_argument);
}

TEST_CASE("all points outside the bounding box are powder") {
  const TriangleSoup cube = TriangleSoup::from_triangles(
      cube_triangles(Vec3(0, 0, 0), Vec3(1, 1, 1)));
  std::vector<Vec3> pts = {Vec3(5, 5, 0.5), Vec3(-3, 0.5, 0.2),
                           Vec3(0.5, 9, 0.8)};
  for (const auto& c : classify_layer_points(cube, pts, 0.0, 1.0)) {
    CHECK(c.label == MaterialLabel::Powder);
  }
}

TEST_SUITE_END();
