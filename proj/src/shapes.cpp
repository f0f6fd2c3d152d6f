#include "lpbf/shapes.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lpbf {
namespace {

void add_quad(std::vector<Triangle>& out, const Vec3& a, const Vec3& b,
              const Vec3& c, const Vec3& d) {
  out.push_back({a, b, c});
  out.push_back({a, c, d});
}

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a,
              const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool point_in_tri2(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                   const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const double d1 = cross2(a, b, p);
  const double d2 = cross2(b, c, p);
  const double d3 = cross2(c, a, p);
  const bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
  const bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
  return !(has_neg && has_pos);
}

// Ear clipping for a simple CCW polygon.
std::vector<std::array<int, 3>> triangulate(
    const std::vector<Eigen::Vector2d>& poly) {
  const int n = static_cast<int>(poly.size());
  if (n < 3) throw std::invalid_argument("triangulate: need >= 3 vertices");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;

  std::vector<std::array<int, 3>> tris;
  int guard = 0;
  while (idx.size() > 3) {
    if (++guard > 10000) {
      throw std::runtime_error("triangulate: polygon is not simple/CCW");
    }
    bool clipped = false;
    const int m = static_cast<int>(idx.size());
    for (int i = 0; i < m; ++i) {
      const int ia = idx[(i + m - 1) % m], ib = idx[i], ic = idx[(i + 1) % m];
      if (cross2(poly[ia], poly[ib], poly[ic]) <= 1e-14) continue;  // reflex
      bool contains = false;
      for (int j : idx) {
        if (j == ia || j == ib || j == ic) continue;
        if (point_in_tri2(poly[j], poly[ia], poly[ib], poly[ic])) {
          contains = true;
          break;
        }
      }
      if (contains) continue;
      tris.push_back({ia, ib, ic});
      idx.erase(idx.begin() + i);
      clipped = true;
      break;
    }
    if (!clipped) throw std::runtime_error("triangulate: no ear found");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

}  // namespace

std::vector<Triangle> cube_triangles(const Vec3& lo, const Vec3& hi) {
  const Vec3 p000(lo.x(), lo.y(), lo.z()), p100(hi.x(), lo.y(), lo.z());
  const Vec3 p010(lo.x(), hi.y(), lo.z()), p110(hi.x(), hi.y(), lo.z());
  const Vec3 p001(lo.x(), lo.y(), hi.z()), p101(hi.x(), lo.y(), hi.z());
  const Vec3 p011(lo.x(), hi.y(), hi.z()), p111(hi.x(), hi.y(), hi.z());
  std::vector<Triangle> out;
  out.reserve(12);
  add_quad(out, p000, p010, p110, p100);  // bottom (-z)
  add_quad(out, p001, p101, p111, p011);  // top (+z)
  add_quad(out, p000, p100, p101, p001);  // -y
  add_quad(out, p110, p010, p011, p111);  // +y
  add_quad(out, p010, p000, p001, p011);  // -x
  add_quad(out, p100, p110, p111, p101);  // +x
  return out;
}

std::vector<Triangle> cylinder_triangles(double radius, double cx, double cy,
                                         double z0, double z1, int segments) {
  if (segments < 3) throw std::invalid_argument("cylinder: segments < 3");
  std::vector<Triangle> out;
  out.reserve(static_cast<std::size_t>(segments) * 4);
  const Vec3 c0(cx, cy, z0), c1(cx, cy, z1);
  for (int i = 0; i < segments; ++i) {
    const double a0 = 2.0 * M_PI * i / segments;
    const double a1 = 2.0 * M_PI * (i + 1) / segments;
    const Vec3 b0(cx + radius * std::cos(a0), cy + radius * std::sin(a0), z0);
    const Vec3 b1(cx + radius * std::cos(a1), cy + radius * std::sin(a1), z0);
    const Vec3 t0(b0.x(), b0.y(), z1);
    const Vec3 t1(b1.x(), b1.y(), z1);
    out.push_back({b0, t1, t0});  // side
    out.push_back({b0, b1, t1});
    out.push_back({c0, b1, b0});  // bottom cap, normal -z
    out.push_back({c1, t0, t1});  // top cap, normal +z
  }
  return out;
}

std::vector<Triangle> extruded_polygon_triangles(
    const std::vector<Eigen::Vector2d>& outline, double y0, double y1) {
  if (y1 <= y0) throw std::invalid_argument("extrude: y1 <= y0");
  const auto cap = triangulate(outline);
  auto lift = [&](const Eigen::Vector2d& p, double y) {
    return Vec3(p.x(), y, p.y());
  };
  std::vector<Triangle> out;
  out.reserve(cap.size() * 2 + outline.size() * 2);
  for (const auto& t : cap) {
    // x-z CCW cap seen from -y: normal -y at y0 needs reversed winding in 3D
    out.push_back({lift(outline[t[0]], y0), lift(outline[t[1]], y0),
                   lift(outline[t[2]], y0)});
    out.push_back({lift(outline[t[0]], y1), lift(outline[t[2]], y1),
                   lift(outline[t[1]], y1)});
  }
  const int n = static_cast<int>(outline.size());
  for (int i = 0; i < n; ++i) {
    const auto& a = outline[i];
    const auto& b = outline[(i + 1) % n];
    add_quad(out, lift(a, y0), lift(b, y0), lift(b, y1), lift(a, y1));
  }
  return out;
}

void write_stl_binary(const std::string& path,
                      const std::vector<Triangle>& tris) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("stl write: cannot open " + path);
  char header[80] = {};
  std::strncpy(header, "binary stl", sizeof(header) - 1);
  out.write(header, 80);
  const std::uint32_t count = static_cast<std::uint32_t>(tris.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Triangle& t : tris) {
    float rec[12];
    const Vec3 n = t.normal();
    const Vec3* vs[3] = {&t.v0, &t.v1, &t.v2};
    rec[0] = static_cast<float>(n.x());
    rec[1] = static_cast<float>(n.y());
    rec[2] = static_cast<float>(n.z());
    for (int v = 0; v < 3; ++v) {
      rec[3 + 3 * v + 0] = static_cast<float>(vs[v]->x());
      rec[3 + 3 * v + 1] = static_cast<float>(vs[v]->y());
      rec[3 + 3 * v + 2] = static_cast<float>(vs[v]->z());
    }
    out.write(reinterpret_cast<const char*>(rec), 48);
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

void write_stl_ascii(const std::string& path, const std::vector<Triangle>& tris,
                     const std::string& name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("stl write: cannot open " + path);
  out.precision(9);
  out << "solid " << name << "\n";
  for (const Triangle& t : tris) {
    const Vec3 n = t.normal();
    out << "  facet normal " << n.x() << " " << n.y() << " " << n.z() << "\n"
        << "    outer loop\n";
    for (const Vec3* v : {&t.v0, &t.v1, &t.v2}) {
      out << "      vertex " << v->x() << " " << v->y() << " " << v->z() << "\n";
    }
    out << "    endloop\n  endfacet\n";
  }
  out << "endsolid " << name << "\n";
}

}  // namespace lpbf
