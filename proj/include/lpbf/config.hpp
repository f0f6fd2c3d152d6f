#pragma once

#include <map>
#include <string>

#include "lpbf/process.hpp"

namespace lpbf {

/// Fully resolved run configuration. Every key has a value before any solve
/// starts; provenance records whether it came from the bundled defaults
/// ("paper" for values taken from published process tables, "assumed" for
/// modeling choices) or from the user's file/flags ("user").
struct RunConfig {
  // paths
  std::string stl_path;
  std::string material_csv = "data/ss316l.csv";
  std::string measured_csv;  // optional
  std::string output_dir = "out";

  // grid (mm in the file, meters here)
  double bed_x = 30e-3, bed_y = 30e-3;
  double plate_thickness = 12e-3;
  double build_height = 20e-3;
  double h_plane = 3e-3, h_plate_z = 4e-3, h_local = 1e-3;
  double local_margin = 5e-3, local_depth = 5e-3;
  bool local_full_bed = false;

  ProcessParams process;

  // material & surfaces
  double porosity = 0.35;
  double gas_conductivity = 0.0172;
  double powder_diameter = 30e-6;
  double sigma_sb = kStefanBoltzmann;
  double emissivity = 0.25;
  double h_conv = 0.1;
  double h_pow = 25.0;
  double smoothing_delta = 0.2;
  double smoothing_floor = 0.05;

  // coupling & solver
  CouplingMode coupling_mode = CouplingMode::Sequential;
  double theta = 1.0;
  double coupling_tol = 1e-4;
  int coupling_max_outer = 20;
  double solver_tol = 1e-8;
  int solver_max_iter = 20000;
  double picard_tol = 1e-6;
  int picard_max = 50;

  // run
  int n_layers = 20;
  int snapshot_every = 5;
  DwellMode dwell_mode = DwellMode::PartFootprint;
  bool dwell_on_local = true;
  int workers = 1;
  bool verbose = false;
  bool audits = true;

  std::map<std::string, std::string> provenance;  // "section.key" -> tag

  void validate() const;

  GridSpec grid_spec() const;
  SurfaceCoefficients surface_coefficients() const;
  MaterialModel material_model() const;  // loads the CSV
  CouplingConfig coupling_config() const;
  BuildOptions build_options() const;
};

/// Parses the flat key=value file (INI-like sections, '#' comments). Unknown
/// keys or sections are hard errors; omitted keys take the documented
/// defaults. The result is validated.
RunConfig load_config(const std::string& path);

/// Returns the built-in defaults, validated (used by tests and tools).
RunConfig default_config();

/// Writes the fully resolved configuration in the same format load_config
/// accepts, with provenance noted per key.
void write_manifest(const std::string& path, const RunConfig& cfg);

}  // namespace lpbf
