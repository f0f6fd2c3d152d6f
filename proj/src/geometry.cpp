#include "lpbf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lpbf {
namespace {

// Ray directions. The base direction is dominated by +x with small irrational
// y/z components so axis-aligned edges are almost never grazed; successive
// attempts tilt it by irrational increments.
Vec3 ray_direction(int attempt) {
  static const double s2 = std::sqrt(2.0);
  static const double s3 = std::sqrt(3.0);
  static const double s5 = std::sqrt(5.0);
  Vec3 d(1.0, 1e-4 * s2, 1e-4 * s3);
  if (attempt > 0) {
    d += static_cast<double>(attempt) * Vec3(0.013 * s5, 0.029 * s2, 0.037 * s3);
  }
  return d.normalized();
}

enum class RayHit { Miss, Crossing, Degenerate };

// Moller-Trumbore with explicit degeneracy reporting: near-parallel rays and
// hits near edges/vertices are flagged so the caller can recast.
RayHit intersect_ray_triangle(const Vec3& origin, const Vec3& dir,
                              const Triangle& tri) {
  const Vec3 e1 = tri.v1 - tri.v0;
  const Vec3 e2 = tri.v2 - tri.v0;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  const double scale = e1.norm() * e2.norm();
  if (std::abs(det) <= 1e-12 * scale) {
    // parallel or grazing the plane; only matters if the ray passes near the
    // triangle's slab
    const Vec3 to = tri.v0 - origin;
    const double dist_along = to.dot(dir);
    const Vec3 closest = origin + dist_along * dir;
    const double diag = std::sqrt(scale);
    if ((closest - tri.v0).norm() < 4.0 * diag) return RayHit::Degenerate;
    return RayHit::Miss;
  }
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - tri.v0;
  const double u = tvec.dot(pvec) * inv_det;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  const double w = 1.0 - u - v;

  const double edge_eps = 1e-10;
  if (u < -edge_eps || v < -edge_eps || w < -edge_eps) return RayHit::Miss;
  const double t = e2.dot(qvec) * inv_det;
  if (t < -edge_eps) return RayHit::Miss;
  if (u < edge_eps || v < edge_eps || w < edge_eps || t < edge_eps) {
    return RayHit::Degenerate;
  }
  return RayHit::Crossing;
}

double point_triangle_distance(const Vec3& p, const Triangle& tri) {
  // Ericson, Real-Time Collision Detection, closest point on triangle
  const Vec3& a = tri.v0;
  const Vec3& b = tri.v1;
  const Vec3& c = tri.v2;
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm();
}

bool parse_ascii_stl(std::istream& in, std::vector<Triangle>& out) {
  std::string tok;
  Triangle tri;
  int vertex_idx = 0;
  bool in_loop = false;
  while (in >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(), ::tolower);
    if (tok == "vertex") {
      double x, y, z;
      if (!(in >> x >> y >> z)) return false;
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
        return false;
      }
      if (!in_loop || vertex_idx >= 3) return false;
      (vertex_idx == 0 ? tri.v0 : vertex_idx == 1 ? tri.v1 : tri.v2) =
          Vec3(x, y, z);
      ++vertex_idx;
    } else if (tok == "outer") {
      in_loop = true;
      vertex_idx = 0;
    } else if (tok == "endloop") {
      if (!in_loop || vertex_idx != 3) return false;
      out.push_back(tri);
      in_loop = false;
    } else if (tok == "endsolid") {
      return true;
    }
  }
  // tolerate a missing endsolid as long as facets parsed cleanly
  return !in_loop;
}

bool parse_binary_stl(const std::string& raw, std::vector<Triangle>& out) {
  if (raw.size() < 84) return false;
  std::uint32_t count;
  std::memcpy(&count, raw.data() + 80, 4);
  const std::size_t expected = 84 + static_cast<std::size_t>(count) * 50;
  if (raw.size() < expected) return false;
  out.reserve(count);
  const char* p = raw.data() + 84;
  for (std::uint32_t i = 0; i < count; ++i, p += 50) {
    float v[12];
    std::memcpy(v, p, 48);  // normal then 3 vertices
    Triangle tri;
    tri.v0 = Vec3(v[3], v[4], v[5]);
    tri.v1 = Vec3(v[6], v[7], v[8]);
    tri.v2 = Vec3(v[9], v[10], v[11]);
    if (!tri.v0.allFinite() || !tri.v1.allFinite() || !tri.v2.allFinite()) {
      return false;
    }
    out.push_back(tri);
  }
  return true;
}

}  // namespace

TriangleSoup TriangleSoup::from_triangles(std::vector<Triangle> triangles) {
  TriangleSoup soup;
  soup.triangles_.reserve(triangles.size());
  for (const Triangle& t : triangles) {
    if (!t.v0.allFinite() || !t.v1.allFinite() || !t.v2.allFinite()) {
      throw std::runtime_error("triangle soup: non-finite vertex");
    }
    if (t.area() < kDegenerateAreaMm2) {
      ++soup.dropped_;
      continue;
    }
    soup.triangles_.push_back(t);
  }
  if (soup.triangles_.empty()) {
    throw std::runtime_error("triangle soup: no valid facets");
  }
  soup.bbox_.setEmpty();
  for (const Triangle& t : soup.triangles_) {
    soup.bbox_.extend(t.v0);
    soup.bbox_.extend(t.v1);
    soup.bbox_.extend(t.v2);
  }
  soup.build_index();
  return soup;
}

void TriangleSoup::build_index() {
  const std::size_t n = triangles_.size();
  const int target = std::clamp(
      static_cast<int>(std::cbrt(static_cast<double>(n) * 2.0)), 1, 96);
  const Vec3 ext = bbox_.sizes();
  for (int a = 0; a < 3; ++a) {
    dims_[a] = ext[a] > 0.0 ? target : 1;
    cell_size_[a] = ext[a] > 0.0 ? ext[a] / dims_[a] : 1.0;
  }
  cells_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
  for (std::uint32_t i = 0; i < n; ++i) {
    Box3 tb;
    tb.setEmpty();
    tb.extend(triangles_[i].v0);
    tb.extend(triangles_[i].v1);
    tb.extend(triangles_[i].v2);
    std::array<int, 3> lo, hi;
    cell_range(tb, lo, hi);
    for (int iz = lo[2]; iz <= hi[2]; ++iz) {
      for (int iy = lo[1]; iy <= hi[1]; ++iy) {
        for (int ix = lo[0]; ix <= hi[0]; ++ix) {
          cells_[(static_cast<std::size_t>(iz) * dims_[1] + iy) * dims_[0] + ix]
              .push_back(i);
        }
      }
    }
  }
}

void TriangleSoup::cell_range(const Box3& box, std::array<int, 3>& lo,
                              std::array<int, 3>& hi) const {
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::clamp(
        static_cast<int>(std::floor((box.min()[a] - bbox_.min()[a]) / cell_size_[a])),
        0, dims_[a] - 1);
    hi[a] = std::clamp(
        static_cast<int>(std::floor((box.max()[a] - bbox_.min()[a]) / cell_size_[a])),
        0, dims_[a] - 1);
  }
}

double TriangleSoup::distance_within(const Vec3& p, double radius) const {
  Box3 query(p - Vec3::Constant(radius), p + Vec3::Constant(radius));
  if (!query.intersects(bbox_)) return radius;
  std::array<int, 3> lo, hi;
  cell_range(query, lo, hi);
  double best = radius;
  for (int iz = lo[2]; iz <= hi[2]; ++iz) {
    for (int iy = lo[1]; iy <= hi[1]; ++iy) {
      for (int ix = lo[0]; ix <= hi[0]; ++ix) {
        const auto& bucket =
            cells_[(static_cast<std::size_t>(iz) * dims_[1] + iy) * dims_[0] + ix];
        for (std::uint32_t id : bucket) {
          best = std::min(best, point_triangle_distance(p, triangles_[id]));
        }
      }
    }
  }
  return best;
}

bool TriangleSoup::cast_ray(const Vec3& origin, const Vec3& dir,
                            int& crossings) const {
  // Walk the grid cells along the ray (3D-DDA) and test each triangle once;
  // thread_local stamps keep concurrent queries independent.
  thread_local std::vector<std::uint32_t> stamp;
  thread_local std::uint32_t epoch = 0;
  if (stamp.size() < triangles_.size()) stamp.assign(triangles_.size(), 0);
  ++epoch;
  if (epoch == 0) {  // wrapped
    std::fill(stamp.begin(), stamp.end(), 0);
    epoch = 1;
  }

  crossings = 0;
  std::array<int, 3> cell;
  for (int a = 0; a < 3; ++a) {
    cell[a] = std::clamp(
        static_cast<int>(std::floor((origin[a] - bbox_.min()[a]) / cell_size_[a])),
        0, dims_[a] - 1);
  }
  std::array<int, 3> step;
  Vec3 t_max, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      const double edge = bbox_.min()[a] + (cell[a] + 1) * cell_size_[a];
      t_max[a] = (edge - origin[a]) / dir[a];
      t_delta[a] = cell_size_[a] / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      const double edge = bbox_.min()[a] + cell[a] * cell_size_[a];
      t_max[a] = (edge - origin[a]) / dir[a];
      t_delta[a] = -cell_size_[a] / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  while (true) {
    const auto& bucket =
        cells_[(static_cast<std::size_t>(cell[2]) * dims_[1] + cell[1]) * dims_[0] +
               cell[0]];
    for (std::uint32_t id : bucket) {
      if (stamp[id] == epoch) continue;
      stamp[id] = epoch;
      switch (intersect_ray_triangle(origin, dir, triangles_[id])) {
        case RayHit::Crossing:
          ++crossings;
          break;
        case RayHit::Degenerate:
          return false;
        case RayHit::Miss:
          break;
      }
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= dims_[axis]) break;
    t_max[axis] += t_delta[axis];
  }
  return true;
}

MaterialLabel TriangleSoup::classify(const Vec3& p) const {
  Box3 inflated = bbox_;
  inflated.min() -= Vec3::Constant(kBoundaryBandMm);
  inflated.max() += Vec3::Constant(kBoundaryBandMm);
  if (!inflated.contains(p)) return MaterialLabel::Powder;

  if (distance_within(p, 2.0 * kBoundaryBandMm) <= kBoundaryBandMm) {
    return MaterialLabel::Solid;
  }

  for (int attempt = 0; attempt < 64; ++attempt) {
    int crossings = 0;
    if (cast_ray(p, ray_direction(attempt), crossings)) {
      return (crossings % 2 == 1) ? MaterialLabel::Solid
                                  : MaterialLabel::Powder;
    }
  }
  throw std::runtime_error(
      "classify: exhausted ray perturbations on a degenerate configuration");
}

TriangleSoup load_stl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("stl: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (raw.empty()) throw std::runtime_error("stl: empty file " + path);

  std::vector<Triangle> tris;
  bool parsed = false;

  // "solid" prefix suggests ASCII, but binary exports sometimes carry it too;
  // fall back to the binary parser unless ASCII yielded actual facets.
  std::string head = raw.substr(0, std::min<std::size_t>(raw.size(), 5));
  std::transform(head.begin(), head.end(), head.begin(), ::tolower);
  if (head == "solid") {
    std::istringstream ss(raw);
    std::string solid_kw, name;
    ss >> solid_kw;
    std::getline(ss, name);
    parsed = parse_ascii_stl(ss, tris) && !tris.empty();
  }
  if (!parsed) {
    tris.clear();
    parsed = parse_binary_stl(raw, tris) && !tris.empty();
  }
  if (!parsed) {
    throw std::runtime_error("stl: malformed, truncated, or empty " + path);
  }
  return TriangleSoup::from_triangles(std::move(tris));
}

PointClassification classify_point(const TriangleSoup& geom, const Vec3& p_mm) {
  return {geom.classify(p_mm), p_mm, -1};
}

std::vector<PointClassification> classify_layer_points(
    const TriangleSoup& geom, const std::vector<Vec3>& points_mm, double z_lo,
    double z_hi, int layer) {
  for (const Vec3& p : points_mm) {
    if (p.z() < z_lo || p.z() > z_hi) {
      throw std::invalid_argument("classify_layer_points: point outside z band");
    }
  }
  std::vector<PointClassification> out;
  out.reserve(points_mm.size());
  for (const Vec3& p : points_mm) {
    out.push_back(classify_point(geom, p));
    out.back().layer = layer;
  }
  return out;
}

}  // namespace lpbf
