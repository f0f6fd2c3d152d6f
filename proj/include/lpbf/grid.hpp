#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf {

enum class FaceTag : int {
  BottomPlate,
  PlateLateral,
  PowderLateral,
  TopSurface,
  GammaLateral,
  GammaBottom,
};

const char* face_tag_name(FaceTag tag);

struct BoundaryFace {
  std::array<int, 3> nodes;
  int element;       // owning tetrahedron
  FaceTag tag;
  Vec3 outward_normal;
  double area;
};

/// Structured Cartesian tetrahedral mesh (meters). Hex cells are split into
/// six conforming tetrahedra with a globally consistent diagonal, so shared
/// faces match across cells. Node and element ids are z-major: growing the
/// mesh upward appends ids and never renumbers existing entities.
struct Mesh {
  std::vector<double> xticks, yticks, zticks;
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
  std::vector<BoundaryFace> boundary;

  double nominal_h = 0.0;   // element length used by the smoothing factor
  double plate_top_z = 0.0; // global meshes: z separating plate from build
  bool is_local = false;
  Box3 growth_envelope;     // global meshes: footprint and max build height

  int nx() const { return static_cast<int>(xticks.size()) - 1; }
  int ny() const { return static_cast<int>(yticks.size()) - 1; }
  int nz() const { return static_cast<int>(zticks.size()) - 1; }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int element_count() const { return static_cast<int>(tets.size()); }
  int node_id(int i, int j, int k) const {
    return (k * static_cast<int>(yticks.size()) + j) *
               static_cast<int>(xticks.size()) +
           i;
  }
  Box3 extent() const;
  double volume() const;

  /// Signed volume of one tetrahedron (positive for valid orientation).
  double tet_volume(int element) const;
  Vec3 tet_centroid(int element) const;
};

struct GrowthState {
  int activated_layers = 0;
  double top_z = 0.0;            // m
  double layer_thickness = 0.0;  // m, agglomerated
};

struct BornIds {
  std::vector<int> nodes;
  std::vector<int> elements;
};

/// Moving fine-scale slab around the heat-affected zone. `depth` is the
/// nominal extent below z_top; the effective bottom is pinned at floor_z
/// (usually the plate top) while the build is shallower than that.
struct LocalBox {
  double x_lo = 0, x_hi = 0;
  double y_lo = 0, y_hi = 0;
  double z_top = 0;
  double depth = 0;
  double floor_z = -std::numeric_limits<double>::infinity();
  double h = 0;  // element length

  double z_bottom() const { return std::max(z_top - depth, floor_z); }
};

/// Plate grid plus the envelope the powder bed will grow into. The initial
/// mesh carries no powder layers; activate_layer adds them one agglomerated
/// layer at a time. Footprints of plate and powder must coincide.
Mesh build_global_mesh(const Box3& plate_extent, const Box3& powder_envelope,
                       double h_plane, double h_plate_z);

/// Appends one element layer of thickness growth.layer_thickness across the
/// full powder-bed footprint. Existing node/element ids are untouched.
BornIds activate_layer(Mesh& mesh, GrowthState& growth);

/// Cartesian tet mesh of the local slab. The box must be strictly interior to
/// the global lateral boundary and must not extend below the global domain.
Mesh build_local_mesh(const LocalBox& box, const Box3& global_extent,
                      double global_top_z);

/// Moves the slab up by one agglomerated layer. In-plane extent, nominal
/// depth, and floor are unchanged.
LocalBox shift_local_box(const LocalBox& box, const GrowthState& growth);

struct Location {
  int element;
  Vec4 bary;
};

/// O(1) structured lookup of the cell, then barycentric resolution among its
/// six tetrahedra. Throws when p lies outside the mesh extent (beyond tol).
Location locate_point(const Mesh& mesh, const Vec3& p, double tol = 1e-9);

struct MeshAudit {
  bool positive_volumes = false;
  bool conforming = false;
  bool tags_partition_boundary = false;
  double volume_error_rel = 0.0;
  std::string detail;

  bool pass(double volume_tol = 1e-10) const {
    return positive_volumes && conforming && tags_partition_boundary &&
           volume_error_rel <= volume_tol;
  }
};

MeshAudit audit_mesh(const Mesh& mesh);

/// Legacy VTK unstructured-grid ASCII snapshot with a nodal temperature field.
void write_vtk(const std::string& path, const Mesh& mesh,
               const Eigen::VectorXd& temperature, const std::string& title);

}  // namespace lpbf
