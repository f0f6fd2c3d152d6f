#include "lpbf/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

namespace lpbf {
namespace {

constexpr double kGeomTol = 1e-9;

// Kuhn split of a hex cell: six tetrahedra sharing the main diagonal from the
// min corner (bit mask 0) to the max corner (7). Bit 0 -> +x, 1 -> +y, 2 -> +z.
constexpr std::array<std::array<int, 4>, 6> kKuhnTets = {{
    {0, 1, 3, 7},
    {0, 1, 5, 7},
    {0, 2, 3, 7},
    {0, 2, 6, 7},
    {0, 4, 5, 7},
    {0, 4, 6, 7},
}};

int divide_exactly(double length, double h, const char* what) {
  if (!(h > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": nonpositive element length");
  }
  const int n = static_cast<int>(std::llround(length / h));
  if (n < 1 || std::abs(n * h - length) > kGeomTol * std::max(1.0, length)) {
    throw std::invalid_argument(std::string(what) +
                                ": element length does not divide extent");
  }
  return n;
}

std::vector<double> make_ticks(double lo, double hi, int n) {
  std::vector<double> t(n + 1);
  for (int i = 0; i <= n; ++i) {
    t[i] = lo + (hi - lo) * static_cast<double>(i) / n;
  }
  t.back() = hi;
  return t;
}

void append_node_plane(Mesh& mesh, double z) {
  for (const double y : mesh.yticks) {
    for (const double x : mesh.xticks) {
      mesh.nodes.emplace_back(x, y, z);
    }
  }
}

// Tetrahedralizes the slab between z-plane k and k+1. Assumes both node
// planes exist already.
void append_slab_cells(Mesh& mesh, int k) {
  const int nx = mesh.nx(), ny = mesh.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      std::array<int, 8> corner;
      for (int bit = 0; bit < 8; ++bit) {
        corner[bit] = mesh.node_id(i + (bit & 1), j + ((bit >> 1) & 1),
                                   k + ((bit >> 2) & 1));
      }
      for (const auto& kt : kKuhnTets) {
        std::array<int, 4> tet = {corner[kt[0]], corner[kt[1]], corner[kt[2]],
                                  corner[kt[3]]};
        const Vec3 d1 = mesh.nodes[tet[1]] - mesh.nodes[tet[0]];
        const Vec3 d2 = mesh.nodes[tet[2]] - mesh.nodes[tet[0]];
        const Vec3 d3 = mesh.nodes[tet[3]] - mesh.nodes[tet[0]];
        if (d1.cross(d2).dot(d3) < 0.0) std::swap(tet[2], tet[3]);
        mesh.tets.push_back(tet);
      }
    }
  }
}

struct FaceKey {
  std::array<int, 3> n;
  bool operator==(const FaceKey& o) const { return n == o.n; }
};
struct FaceKeyHash {
  std::size_t operator()(const FaceKey& k) const {
    std::size_t h = 1469598103934665603ull;
    for (int v : k.n) {
      h ^= static_cast<std::size_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }
};

FaceKey face_key(int a, int b, int c) {
  std::array<int, 3> n = {a, b, c};
  std::sort(n.begin(), n.end());
  return {n};
}

constexpr std::array<std::array<int, 3>, 4> kTetFaces = {{
    {1, 2, 3},
    {0, 3, 2},
    {0, 1, 3},
    {0, 2, 1},
}};

void rebuild_boundary(Mesh& mesh) {
  std::unordered_map<FaceKey, std::pair<int, int>, FaceKeyHash> faces;
  faces.reserve(mesh.tets.size() * 4);
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& t = mesh.tets[e];
    for (const auto& f : kTetFaces) {
      auto [it, inserted] =
          faces.try_emplace(face_key(t[f[0]], t[f[1]], t[f[2]]), e, 1);
      if (!inserted) it->second.second += 1;
    }
  }

  const Box3 ext = mesh.extent();
  const double scale = ext.sizes().maxCoeff();
  const double tol = kGeomTol * std::max(1.0, scale);

  mesh.boundary.clear();
  for (const auto& [key, owner] : faces) {
    if (owner.second != 1) continue;
    BoundaryFace bf;
    bf.nodes = key.n;
    bf.element = owner.first;
    const Vec3& a = mesh.nodes[bf.nodes[0]];
    const Vec3& b = mesh.nodes[bf.nodes[1]];
    const Vec3& c = mesh.nodes[bf.nodes[2]];
    Vec3 n = (b - a).cross(c - a);
    bf.area = 0.5 * n.norm();
    n.normalize();
    const Vec3 face_centroid = (a + b + c) / 3.0;
    if (n.dot(face_centroid - mesh.tet_centroid(bf.element)) < 0.0) n = -n;
    bf.outward_normal = n;

    const double zc = face_centroid.z();
    const bool on_bottom = std::abs(zc - mesh.zticks.front()) < tol &&
                           std::abs(n.z() + 1.0) < 1e-6;
    const bool on_top = std::abs(zc - mesh.zticks.back()) < tol &&
                        std::abs(n.z() - 1.0) < 1e-6;
    if (mesh.is_local) {
      if (on_bottom) {
        bf.tag = FaceTag::GammaBottom;
      } else if (on_top) {
        bf.tag = FaceTag::TopSurface;
      } else {
        bf.tag = FaceTag::GammaLateral;
      }
    } else {
      if (on_bottom) {
        bf.tag = FaceTag::BottomPlate;
      } else if (on_top) {
        bf.tag = FaceTag::TopSurface;
      } else {
        bf.tag = zc < mesh.plate_top_z ? FaceTag::PlateLateral
                                       : FaceTag::PowderLateral;
      }
    }
    mesh.boundary.push_back(bf);
  }
}

}  // namespace

const char* face_tag_name(FaceTag tag) {
  switch (tag) {
    case FaceTag::BottomPlate: return "bottom_plate";
    case FaceTag::PlateLateral: return "plate_lateral";
    case FaceTag::PowderLateral: return "powder_lateral";
    case FaceTag::TopSurface: return "top_surface";
    case FaceTag::GammaLateral: return "gamma_lateral";
    case FaceTag::GammaBottom: return "gamma_bottom";
  }
  return "?";
}

Box3 Mesh::extent() const {
  return Box3(Vec3(xticks.front(), yticks.front(), zticks.front()),
              Vec3(xticks.back(), yticks.back(), zticks.back()));
}

double Mesh::volume() const {
  double v = 0.0;
  for (int e = 0; e < element_count(); ++e) v += tet_volume(e);
  return v;
}

double Mesh::tet_volume(int element) const {
  const auto& t = tets[element];
  const Vec3 d1 = nodes[t[1]] - nodes[t[0]];
  const Vec3 d2 = nodes[t[2]] - nodes[t[0]];
  const Vec3 d3 = nodes[t[3]] - nodes[t[0]];
  return d1.cross(d2).dot(d3) / 6.0;
}

Vec3 Mesh::tet_centroid(int element) const {
  const auto& t = tets[element];
  return (nodes[t[0]] + nodes[t[1]] + nodes[t[2]] + nodes[t[3]]) / 4.0;
}

Mesh build_global_mesh(const Box3& plate, const Box3& powder, double h_plane,
                       double h_plate_z) {
  const double scale = plate.sizes().maxCoeff();
  const double tol = kGeomTol * std::max(1.0, scale);
  if ((plate.min().head<2>() - powder.min().head<2>()).cwiseAbs().maxCoeff() > tol ||
      (plate.max().head<2>() - powder.max().head<2>()).cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument(
        "global mesh: plate and powder footprints must coincide");
  }
  if (std::abs(powder.min().z() - plate.max().z()) > tol) {
    throw std::invalid_argument(
        "global mesh: powder extent must sit on top of the plate");
  }

  Mesh mesh;
  mesh.is_local = false;
  mesh.nominal_h = h_plane;
  mesh.plate_top_z = plate.max().z();
  mesh.growth_envelope = powder;

  const int nx = divide_exactly(plate.sizes().x(), h_plane, "global mesh x");
  const int ny = divide_exactly(plate.sizes().y(), h_plane, "global mesh y");
  const int nz = divide_exactly(plate.sizes().z(), h_plate_z, "global mesh plate z");
  mesh.xticks = make_ticks(plate.min().x(), plate.max().x(), nx);
  mesh.yticks = make_ticks(plate.min().y(), plate.max().y(), ny);
  mesh.zticks = make_ticks(plate.min().z(), plate.max().z(), nz);

  for (const double z : mesh.zticks) append_node_plane(mesh, z);
  for (int k = 0; k < nz; ++k) append_slab_cells(mesh, k);
  rebuild_boundary(mesh);
  return mesh;
}

BornIds activate_layer(Mesh& mesh, GrowthState& growth) {
  if (mesh.is_local) {
    throw std::logic_error("activate_layer: global meshes only");
  }
  const double tol = kGeomTol * std::max(1.0, std::abs(growth.top_z));
  if (std::abs(growth.top_z - mesh.zticks.back()) > tol) {
    throw std::invalid_argument("activate_layer: growth state out of sync");
  }
  const double new_top = growth.top_z + growth.layer_thickness;
  if (new_top > mesh.growth_envelope.max().z() + tol) {
    throw std::runtime_error("activate_layer: exceeding configured build height");
  }

  BornIds born;
  const int first_node = mesh.node_count();
  const int first_elem = mesh.element_count();
  mesh.zticks.push_back(new_top);
  append_node_plane(mesh, new_top);
  append_slab_cells(mesh, mesh.nz() - 1);
  rebuild_boundary(mesh);

  for (int n = first_node; n < mesh.node_count(); ++n) born.nodes.push_back(n);
  for (int e = first_elem; e < mesh.element_count(); ++e) {
    born.elements.push_back(e);
  }
  growth.activated_layers += 1;
  growth.top_z = new_top;
  return born;
}

Mesh build_local_mesh(const LocalBox& box, const Box3& global_extent,
                      double global_top_z) {
  const double scale = global_extent.sizes().maxCoeff();
  const double tol = kGeomTol * std::max(1.0, scale);
  if (!(box.x_hi > box.x_lo && box.y_hi > box.y_lo &&
        box.z_top > box.z_bottom())) {
    throw std::invalid_argument("local mesh: degenerate box");
  }
  // gamma needs a global-side solution, so the slab must be strictly immersed
  if (box.x_lo <= global_extent.min().x() + tol ||
      box.x_hi >= global_extent.max().x() - tol ||
      box.y_lo <= global_extent.min().y() + tol ||
      box.y_hi >= global_extent.max().y() - tol) {
    throw std::invalid_argument(
        "local mesh: box must be strictly interior to the global lateral "
        "boundary");
  }
  if (std::abs(box.z_top - global_top_z) > tol) {
    throw std::invalid_argument("local mesh: top must coincide with global top");
  }
  if (box.z_bottom() < global_extent.min().z() - tol) {
    throw std::invalid_argument("local mesh: box extends below the global domain");
  }

  Mesh mesh;
  mesh.is_local = true;
  mesh.nominal_h = box.h;
  mesh.plate_top_z = box.z_bottom();

  const double effective_depth = box.z_top - box.z_bottom();
  const int nx = divide_exactly(box.x_hi - box.x_lo, box.h, "local mesh x");
  const int ny = divide_exactly(box.y_hi - box.y_lo, box.h, "local mesh y");
  const int nz = divide_exactly(effective_depth, box.h, "local mesh z");
  mesh.xticks = make_ticks(box.x_lo, box.x_hi, nx);
  mesh.yticks = make_ticks(box.y_lo, box.y_hi, ny);
  mesh.zticks = make_ticks(box.z_bottom(), box.z_top, nz);

  for (const double z : mesh.zticks) append_node_plane(mesh, z);
  for (int k = 0; k < nz; ++k) append_slab_cells(mesh, k);
  rebuild_boundary(mesh);
  return mesh;
}

LocalBox shift_local_box(const LocalBox& box, const GrowthState& growth) {
  LocalBox shifted = box;
  shifted.z_top = box.z_top + growth.layer_thickness;
  return shifted;
}

Location locate_point(const Mesh& mesh, const Vec3& p, double tol) {
  const Box3 ext = mesh.extent();
  for (int a = 0; a < 3; ++a) {
    if (p[a] < ext.min()[a] - tol || p[a] > ext.max()[a] + tol) {
      throw std::out_of_range("locate_point: point outside mesh extent");
    }
  }
  auto cell_index = [](const std::vector<double>& ticks, double v) {
    const int n = static_cast<int>(ticks.size()) - 1;
    const int idx = static_cast<int>(std::upper_bound(ticks.begin(), ticks.end(), v) -
                                     ticks.begin()) -
                    1;
    return std::clamp(idx, 0, n - 1);
  };

  auto bary_in = [&](int element, Vec4& lambda) {
    const auto& t = mesh.tets[element];
    Eigen::Matrix3d A;
    A.col(0) = mesh.nodes[t[1]] - mesh.nodes[t[0]];
    A.col(1) = mesh.nodes[t[2]] - mesh.nodes[t[0]];
    A.col(2) = mesh.nodes[t[3]] - mesh.nodes[t[0]];
    const Vec3 rhs = p - mesh.nodes[t[0]];
    const Vec3 l = A.partialPivLu().solve(rhs);
    lambda = Vec4(1.0 - l.sum(), l[0], l[1], l[2]);
    return lambda.minCoeff();
  };

  const int ci = cell_index(mesh.xticks, p.x());
  const int cj = cell_index(mesh.yticks, p.y());
  const int ck = cell_index(mesh.zticks, p.z());

  Location best{-1, Vec4::Zero()};
  double best_min = -std::numeric_limits<double>::infinity();
  auto scan_cell = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= mesh.nx() || j >= mesh.ny() ||
        k >= mesh.nz()) {
      return;
    }
    const int cell = (k * mesh.ny() + j) * mesh.nx() + i;
    for (int s = 0; s < 6; ++s) {
      const int e = cell * 6 + s;
      Vec4 lambda;
      const double m = bary_in(e, lambda);
      if (m > best_min) {
        best_min = m;
        best = {e, lambda};
      }
    }
  };

  scan_cell(ci, cj, ck);
  if (best_min < -1e-12) {
    // roundoff can push points on cell faces into the neighbor; rescan locally
    for (int dk = -1; dk <= 1; ++dk) {
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          scan_cell(ci + di, cj + dj, ck + dk);
        }
      }
    }
  }
  if (best_min < -1e-7) {
    throw std::out_of_range("locate_point: no containing tetrahedron found");
  }
  return best;
}

MeshAudit audit_mesh(const Mesh& mesh) {
  MeshAudit audit;

  audit.positive_volumes = true;
  double total = 0.0;
  for (int e = 0; e < mesh.element_count(); ++e) {
    const double v = mesh.tet_volume(e);
    if (!(v > 0.0)) {
      audit.positive_volumes = false;
      audit.detail += "nonpositive volume at element " + std::to_string(e) + "; ";
    }
    total += v;
  }
  const double expected = mesh.extent().sizes().prod();
  audit.volume_error_rel = std::abs(total - expected) / expected;

  std::unordered_map<FaceKey, int, FaceKeyHash> counts;
  counts.reserve(mesh.tets.size() * 4);
  for (const auto& t : mesh.tets) {
    for (const auto& f : kTetFaces) {
      counts[face_key(t[f[0]], t[f[1]], t[f[2]])] += 1;
    }
  }
  audit.conforming = true;
  std::size_t boundary_expected = 0;
  for (const auto& [key, c] : counts) {
    if (c == 1) {
      ++boundary_expected;
    } else if (c != 2) {
      audit.conforming = false;
      audit.detail += "face with multiplicity " + std::to_string(c) + "; ";
    }
  }

  std::unordered_map<FaceKey, int, FaceKeyHash> tagged;
  for (const auto& bf : mesh.boundary) {
    tagged[face_key(bf.nodes[0], bf.nodes[1], bf.nodes[2])] += 1;
  }
  audit.tags_partition_boundary = tagged.size() == boundary_expected &&
                                  mesh.boundary.size() == boundary_expected;
  for (const auto& [key, c] : tagged) {
    auto it = counts.find(key);
    if (c != 1 || it == counts.end() || it->second != 1) {
      audit.tags_partition_boundary = false;
      audit.detail += "boundary tag mismatch; ";
      break;
    }
  }
  return audit;
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const Eigen::VectorXd& temperature, const std::string& title) {
  if (temperature.size() != mesh.node_count()) {
    throw std::invalid_argument("write_vtk: field length != node count");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  out.precision(9);
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.node_count() << " double\n";
  for (const Vec3& p : mesh.nodes) {
    out << p.x() << " " << p.y() << " " << p.z() << "\n";
  }
  out << "CELLS " << mesh.element_count() << " " << mesh.element_count() * 5
      << "\n";
  for (const auto& t : mesh.tets) {
    out << "4 " << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
  }
  out << "CELL_TYPES " << mesh.element_count() << "\n";
  for (int e = 0; e < mesh.element_count(); ++e) out << "10\n";
  out << "POINT_DATA " << mesh.node_count() << "\n";
  out << "SCALARS temperature double 1\nLOOKUP_TABLE default\n";
  for (int n = 0; n < mesh.node_count(); ++n) out << temperature[n] << "\n";
}

}  // namespace lpbf
