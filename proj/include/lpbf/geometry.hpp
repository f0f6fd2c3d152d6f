#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf {

/// One STL facet. Coordinates are millimeters; the normal is recomputed from
/// the vertices rather than trusted from the file.
struct Triangle {
  Vec3 v0, v1, v2;

  Vec3 normal() const {
    Vec3 n = (v1 - v0).cross(v2 - v0);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
  double area() const { return 0.5 * (v1 - v0).cross(v2 - v0).norm(); }
};

enum class MaterialLabel : std::uint8_t { Solid, Powder };

struct PointClassification {
  MaterialLabel label;
  Vec3 point;      // mm, as queried
  int layer = -1;  // z-layer index of the query, when meaningful
};

/// Facets within this distance of a query point classify as Solid, biasing
/// toward material presence at the surface.
constexpr double kBoundaryBandMm = 1e-6;

/// Facets below this area are dropped at load time.
constexpr double kDegenerateAreaMm2 = 1e-12;

/// Immutable triangle soup with a uniform-grid spatial index. Read-only after
/// construction; queries are safe from concurrent threads.
class TriangleSoup {
 public:
  static TriangleSoup from_triangles(std::vector<Triangle> triangles);

  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Box3& bounding_box() const { return bbox_; }  // mm
  std::size_t dropped_degenerate() const { return dropped_; }

  /// Inside/outside test by parity ray casting. The ray direction has small
  /// irrational components; a detected edge/vertex graze deterministically
  /// perturbs the direction and recasts.
  MaterialLabel classify(const Vec3& point_mm) const;

  /// Distance to the closest facet, searched only within `radius`; returns
  /// radius when nothing is closer.
  double distance_within(const Vec3& point_mm, double radius) const;

 private:
  TriangleSoup() = default;
  void build_index();
  void cell_range(const Box3& box, std::array<int, 3>& lo,
                  std::array<int, 3>& hi) const;
  bool cast_ray(const Vec3& origin, const Vec3& dir, int& crossings) const;

  std::vector<Triangle> triangles_;
  Box3 bbox_;
  std::size_t dropped_ = 0;

  // uniform grid over the bounding box; cells_ holds triangle ids per cell
  std::array<int, 3> dims_{1, 1, 1};
  Vec3 cell_size_{1, 1, 1};
  std::vector<std::vector<std::uint32_t>> cells_;
};

/// Loads binary or ASCII STL. Degenerate facets are dropped (count available
/// on the returned soup). Throws on malformed input or when no valid facet
/// remains.
TriangleSoup load_stl(const std::string& path);

PointClassification classify_point(const TriangleSoup& geom, const Vec3& p_mm);

/// Batch classification for the Gauss points of one activated layer. Every
/// point must satisfy z_lo <= p.z <= z_hi; results equal per-point
/// classify_point calls, stamped with the given layer index.
std::vector<PointClassification> classify_layer_points(
    const TriangleSoup& geom, const std::vector<Vec3>& points_mm, double z_lo,
    double z_hi, int layer = -1);

}  // namespace lpbf
