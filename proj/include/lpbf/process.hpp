#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lpbf/geometry.hpp"
#include "lpbf/twolevel.hpp"

namespace lpbf {

/// Laser, layer, and chamber parameters. spot_size is the beam diameter as
/// quoted by machine datasheets; the heating step duration is derived from
/// the spot radius.
struct ProcessParams {
  double laser_power = 200.0;       // W
  double absorptivity = 0.7;        // [-]
  double spot_size = 65e-6;         // m
  double scan_speed = 0.8;          // m/s
  double layer_thickness = 50e-6;   // m, one physical powder layer
  int layers_per_agglomeration = 20;
  double interlayer_cooling_s = 11.0;
  double recoat_s = 9.0;
  double recoat_dt_s = 1.0;
  double cooling_dt_s = 1.0;
  double T_ambient = to_kelvin(25.0);  // K
  double T_plate = to_kelvin(80.0);    // K

  double agglomerated_thickness() const {
    return layers_per_agglomeration * layer_thickness;
  }
  void validate() const;
};

/// Volumetric flash source replacing the resolved scan path over one
/// agglomerated layer.
double equivalent_heat_source(const ProcessParams& params, double t_a);

/// Duration of the flash: the time the beam needs to traverse its own radius
/// twice.
double heating_time_step(const ProcessParams& params);

enum class PhaseKind { Activate, Diffuse, Heat, Cool };

const char* phase_name(PhaseKind kind);

struct ScheduleEvent {
  PhaseKind kind;
  double duration;  // s
  double dt;        // s
  int layer;        // 1-based
};

std::vector<ScheduleEvent> build_schedule(const ProcessParams& params,
                                          int n_layers);

enum class DwellMode { PartFootprint, FullBed };

/// Area-weighted average temperature over the top-surface quadrature points.
/// PartFootprint keeps only points whose (x,y) lies inside the part
/// cross-section at section_z; an empty restriction falls back to the full
/// surface and reports it.
double dwell_temperature(const Mesh& mesh, const Eigen::VectorXd& T,
                         const TriangleSoup* part, DwellMode mode,
                         double section_z_m, bool* used_fallback = nullptr);

/// Global/local discretization plan. Lengths in meters.
struct GridSpec {
  Box3 plate;
  Box3 powder_envelope;
  double h_plane = 4e-3;
  double h_plate_z = 4e-3;
  double h_local = 1e-3;
  double local_margin = 5e-3;  // in-plane inflation of the part footprint
  double local_depth = 5e-3;   // nominal slab depth below the top
  bool local_full_bed = false;
};

struct SurfaceCoefficients {
  double h_conv = 0.1;  // W/m^2/K, chamber gas convection
  double h_pow = 25.0;  // W/m^2/K, conduction into the surrounding powder
  double emissivity = 0.25;
};

struct BuildOptions {
  int n_layers = 0;
  int snapshot_every = 0;  // layers between VTK snapshots; 0 disables
  std::string output_dir;
  bool run_audits = true;
  DwellMode dwell_mode = DwellMode::PartFootprint;
  bool dwell_on_local = true;
  double steady_picard_tol = 1e-6;
  int steady_picard_max = 50;
};

struct LayerRecord {
  int layer = 0;
  double sim_time_s = 0.0;  // when the dwell sample was taken
  double dwell_K = 0.0;
  DwellMode mode_used = DwellMode::PartFootprint;
  bool dwell_fallback = false;
  int heat_outer_iterations = 0;
};

struct HeatAuditRecord {
  int layer = 0;
  EnergyBreakdown breakdown;
};

struct BuildResult {
  DomainState plate_state;
  std::vector<LayerRecord> dwell;
  std::vector<HeatAuditRecord> heat_audits;
  bool audits_passed = true;
  std::vector<std::string> audit_failures;
  std::vector<std::string> snapshot_files;
  double total_sim_time_s = 0.0;

  Mesh global_mesh;
  DomainState global;
  Mesh local_mesh;
  DomainState local;
  LocalBox local_box;
};

/// Runs the full build: steady plate initialization, then per agglomerated
/// layer activate -> diffuse -> (dwell sample) -> heat -> cool. Any failure
/// is rethrown with the layer and phase attached.
BuildResult run_build(const TriangleSoup& part, const GridSpec& grid,
                      const MaterialModel& mat,
                      const SurfaceCoefficients& surf,
                      const ProcessParams& proc, const CouplingConfig& coupling,
                      const BuildOptions& opts);

void write_dwell_csv(const std::string& path,
                     const std::vector<LayerRecord>& records);

}  // namespace lpbf
