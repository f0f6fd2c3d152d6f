#pragma once

#include <string>
#include <vector>

#include "lpbf/geometry.hpp"

namespace lpbf {

/// Axis-aligned box as 12 facets, outward normals.
std::vector<Triangle> cube_triangles(const Vec3& lo, const Vec3& hi);

/// Closed faceted cylinder, axis +z, caps included. The lateral surface is the
/// inscribed regular polygon with `segments` sides.
std::vector<Triangle> cylinder_triangles(double radius, double cx, double cy,
                                         double z0, double z1, int segments);

/// Prism from a simple polygon in the x-z plane (counterclockwise, no holes)
/// extruded along y. Caps are ear-clipped; concave outlines are supported.
std::vector<Triangle> extruded_polygon_triangles(
    const std::vector<Eigen::Vector2d>& outline_xz, double y0, double y1);

void write_stl_binary(const std::string& path,
                      const std::vector<Triangle>& tris);
void write_stl_ascii(const std::string& path, const std::vector<Triangle>& tris,
                     const std::string& name);

}  // namespace lpbf
