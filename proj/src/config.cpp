#include "lpbf/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace lpbf {
namespace {

struct KeyBinding {
  std::string full;  // section.key
  std::string default_provenance;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (trim(v.substr(pos)).empty()) return i;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

// One binding per key: how to read it into the struct and echo it back.
std::vector<KeyBinding> bindings() {
  std::vector<KeyBinding> b;
  auto add_str = [&](const char* full, const char* prov, std::string RunConfig::*f) {
    b.push_back({full, prov,
                 [f](RunConfig& c, const std::string& v) { c.*f = v; },
                 [f](const RunConfig& c) { return c.*f; }});
  };
  auto add_double = [&](const char* full, const char* prov,
                        double RunConfig::*f, double scale = 1.0) {
    b.push_back({full, prov,
                 [f, scale, full = std::string(full)](RunConfig& c,
                                                      const std::string& v) {
                   c.*f = parse_double(v, full) * scale;
                 },
                 [f, scale](const RunConfig& c) { return fmt((c.*f) / scale); }});
  };
  auto add_proc = [&](const char* full, const char* prov,
                      double ProcessParams::*f, double scale = 1.0) {
    b.push_back({full, prov,
                 [f, scale, full = std::string(full)](RunConfig& c,
                                                      const std::string& v) {
                   c.process.*f = parse_double(v, full) * scale;
                 },
                 [f, scale](const RunConfig& c) {
                   return fmt((c.process.*f) / scale);
                 }});
  };
  auto add_int = [&](const char* full, const char* prov, int RunConfig::*f) {
    b.push_back({full, prov,
                 [f, full = std::string(full)](RunConfig& c,
                                               const std::string& v) {
                   c.*f = parse_int(v, full);
                 },
                 [f](const RunConfig& c) { return std::to_string(c.*f); }});
  };
  auto add_bool = [&](const char* full, const char* prov, bool RunConfig::*f) {
    b.push_back({full, prov,
                 [f, full = std::string(full)](RunConfig& c,
                                               const std::string& v) {
                   c.*f = parse_bool(v, full);
                 },
                 [f](const RunConfig& c) {
                   return c.*f ? std::string("true") : std::string("false");
                 }});
  };

  add_str("paths.stl", "user", &RunConfig::stl_path);
  add_str("paths.material_csv", "assumed", &RunConfig::material_csv);
  add_str("paths.measured_csv", "user", &RunConfig::measured_csv);
  add_str("paths.output", "assumed", &RunConfig::output_dir);

  add_double("grid.bed_x_mm", "assumed", &RunConfig::bed_x, 1e-3);
  add_double("grid.bed_y_mm", "assumed", &RunConfig::bed_y, 1e-3);
  add_double("grid.plate_thickness_mm", "assumed", &RunConfig::plate_thickness,
             1e-3);
  add_double("grid.build_height_mm", "assumed", &RunConfig::build_height, 1e-3);
  add_double("grid.h_plane_mm", "assumed", &RunConfig::h_plane, 1e-3);
  add_double("grid.h_plate_z_mm", "assumed", &RunConfig::h_plate_z, 1e-3);
  add_double("grid.h_local_mm", "paper", &RunConfig::h_local, 1e-3);
  add_double("grid.local_margin_mm", "assumed", &RunConfig::local_margin, 1e-3);
  add_double("grid.local_depth_mm", "assumed", &RunConfig::local_depth, 1e-3);
  add_bool("grid.local_full_bed", "assumed", &RunConfig::local_full_bed);

  add_proc("process.laser_power_W", "paper", &ProcessParams::laser_power);
  add_proc("process.absorptivity", "paper", &ProcessParams::absorptivity);
  add_proc("process.spot_size_um", "paper", &ProcessParams::spot_size, 1e-6);
  add_proc("process.scan_speed_mm_s", "paper", &ProcessParams::scan_speed, 1e-3);
  add_proc("process.layer_thickness_um", "paper",
           &ProcessParams::layer_thickness, 1e-6);
  b.push_back({"process.layers_per_agglomeration", "paper",
               [](RunConfig& c, const std::string& v) {
                 c.process.layers_per_agglomeration =
                     parse_int(v, "process.layers_per_agglomeration");
               },
               [](const RunConfig& c) {
                 return std::to_string(c.process.layers_per_agglomeration);
               }});
  add_proc("process.ilct_s", "paper", &ProcessParams::interlayer_cooling_s);
  add_proc("process.recoat_s", "assumed", &ProcessParams::recoat_s);
  add_proc("process.recoat_dt_s", "assumed", &ProcessParams::recoat_dt_s);
  add_proc("process.cool_dt_s", "assumed", &ProcessParams::cooling_dt_s);
  b.push_back({"process.chamber_temp_C", "paper",
               [](RunConfig& c, const std::string& v) {
                 c.process.T_ambient =
                     to_kelvin(parse_double(v, "process.chamber_temp_C"));
               },
               [](const RunConfig& c) {
                 return fmt(to_celsius(c.process.T_ambient));
               }});
  b.push_back({"process.plate_temp_C", "paper",
               [](RunConfig& c, const std::string& v) {
                 c.process.T_plate =
                     to_kelvin(parse_double(v, "process.plate_temp_C"));
               },
               [](const RunConfig& c) {
                 return fmt(to_celsius(c.process.T_plate));
               }});

  add_double("material.porosity", "paper", &RunConfig::porosity);
  add_double("material.gas_conductivity_W_mK", "paper",
             &RunConfig::gas_conductivity);
  add_double("material.powder_diameter_um", "assumed",
             &RunConfig::powder_diameter, 1e-6);
  add_double("material.sigma_sb_W_m2K4", "assumed", &RunConfig::sigma_sb);
  add_double("material.emissivity", "paper", &RunConfig::emissivity);
  add_double("material.h_conv_W_m2K", "paper", &RunConfig::h_conv);
  add_double("material.h_pow_W_m2K", "paper", &RunConfig::h_pow);
  add_double("material.smoothing_delta_per_K", "paper",
             &RunConfig::smoothing_delta);
  add_double("material.smoothing_floor", "assumed", &RunConfig::smoothing_floor);

  b.push_back({"coupling.mode", "paper",
               [](RunConfig& c, const std::string& v) {
                 if (v == "sequential") {
                   c.coupling_mode = CouplingMode::Sequential;
                 } else if (v == "parallel") {
                   c.coupling_mode = CouplingMode::Parallel;
                 } else {
                   throw std::invalid_argument(
                       "config: coupling.mode must be sequential or parallel");
                 }
               },
               [](const RunConfig& c) {
                 return c.coupling_mode == CouplingMode::Sequential
                            ? std::string("sequential")
                            : std::string("parallel");
               }});
  add_double("coupling.theta", "paper", &RunConfig::theta);
  add_double("coupling.tolerance", "assumed", &RunConfig::coupling_tol);
  add_int("coupling.max_outer", "assumed", &RunConfig::coupling_max_outer);

  add_double("solver.tolerance", "assumed", &RunConfig::solver_tol);
  add_int("solver.max_iterations", "assumed", &RunConfig::solver_max_iter);
  add_double("solver.picard_tolerance", "assumed", &RunConfig::picard_tol);
  add_int("solver.picard_max", "assumed", &RunConfig::picard_max);

  add_int("run.n_layers", "assumed", &RunConfig::n_layers);
  add_int("run.snapshot_every", "assumed", &RunConfig::snapshot_every);
  b.push_back({"run.dwell_mode", "assumed",
               [](RunConfig& c, const std::string& v) {
                 if (v == "part_footprint") {
                   c.dwell_mode = DwellMode::PartFootprint;
                 } else if (v == "full_bed") {
                   c.dwell_mode = DwellMode::FullBed;
                 } else {
                   throw std::invalid_argument(
                       "config: run.dwell_mode must be part_footprint or "
                       "full_bed");
                 }
               },
               [](const RunConfig& c) {
                 return c.dwell_mode == DwellMode::PartFootprint
                            ? std::string("part_footprint")
                            : std::string("full_bed");
               }});
  add_bool("run.dwell_on_local", "assumed", &RunConfig::dwell_on_local);
  add_int("run.workers", "assumed", &RunConfig::workers);
  add_bool("run.verbose", "assumed", &RunConfig::verbose);
  add_bool("run.audits", "assumed", &RunConfig::audits);
  return b;
}

}  // namespace

void RunConfig::validate() const {
  auto in_range = [](double v, double lo, double hi, const char* what) {
    if (!(v >= lo && v <= hi)) {
      throw std::invalid_argument(std::string("config: ") + what +
                                  " out of range");
    }
  };
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string("config: ") + what +
                                  " must be positive");
    }
  };
  positive(bed_x, "grid.bed_x_mm");
  positive(bed_y, "grid.bed_y_mm");
  positive(plate_thickness, "grid.plate_thickness_mm");
  positive(build_height, "grid.build_height_mm");
  positive(h_plane, "grid.h_plane_mm");
  positive(h_plate_z, "grid.h_plate_z_mm");
  positive(h_local, "grid.h_local_mm");
  positive(local_depth, "grid.local_depth_mm");
  if (local_margin < 0.0) {
    throw std::invalid_argument("config: grid.local_margin_mm must be >= 0");
  }
  process.validate();
  in_range(porosity, 1e-9, 1.0 - 1e-9, "material.porosity");
  positive(gas_conductivity, "material.gas_conductivity_W_mK");
  if (powder_diameter < 0.0) {
    throw std::invalid_argument("config: material.powder_diameter_um >= 0");
  }
  positive(sigma_sb, "material.sigma_sb_W_m2K4");
  in_range(emissivity, 0.0, 1.0, "material.emissivity");
  if (h_conv < 0.0 || h_pow < 0.0) {
    throw std::invalid_argument("config: heat transfer coefficients >= 0");
  }
  if (smoothing_delta < 0.0) {
    throw std::invalid_argument("config: material.smoothing_delta_per_K >= 0");
  }
  in_range(smoothing_floor, 1e-12, 1.0, "material.smoothing_floor");
  in_range(theta, 1e-12, 1.0, "coupling.theta");
  positive(coupling_tol, "coupling.tolerance");
  if (coupling_max_outer < 1) {
    throw std::invalid_argument("config: coupling.max_outer >= 1");
  }
  positive(solver_tol, "solver.tolerance");
  if (solver_max_iter < 1 || picard_max < 1) {
    throw std::invalid_argument("config: solver iteration budgets >= 1");
  }
  positive(picard_tol, "solver.picard_tolerance");
  if (n_layers < 0) throw std::invalid_argument("config: run.n_layers >= 0");
  if (snapshot_every < 0) {
    throw std::invalid_argument("config: run.snapshot_every >= 0");
  }
  if (workers < 1) throw std::invalid_argument("config: run.workers >= 1");

  // the agglomerated layer must tile the build height and the fine lattice
  const double t_a = process.agglomerated_thickness();
  const double layers = build_height / t_a;
  if (std::abs(layers - std::round(layers)) > 1e-9) {
    throw std::invalid_argument(
        "config: build height must be a whole number of agglomerated layers");
  }
  const double cells = t_a / h_local;
  if (std::abs(cells - std::round(cells)) > 1e-9 || cells < 1.0 - 1e-9) {
    throw std::invalid_argument(
        "config: agglomerated thickness must be a multiple of h_local");
  }
  if (n_layers > static_cast<int>(std::llround(layers))) {
    throw std::invalid_argument(
        "config: run.n_layers exceeds the configured build height");
  }
}

GridSpec RunConfig::grid_spec() const {
  GridSpec g;
  g.plate = Box3(Vec3(0, 0, -plate_thickness), Vec3(bed_x, bed_y, 0));
  g.powder_envelope = Box3(Vec3(0, 0, 0), Vec3(bed_x, bed_y, build_height));
  g.h_plane = h_plane;
  g.h_plate_z = h_plate_z;
  g.h_local = h_local;
  g.local_margin = local_margin;
  g.local_depth = local_depth;
  g.local_full_bed = local_full_bed;
  return g;
}

SurfaceCoefficients RunConfig::surface_coefficients() const {
  return {h_conv, h_pow, emissivity};
}

MaterialModel RunConfig::material_model() const {
  MaterialModel mat;
  mat.table = MaterialTable::load_csv(material_csv);
  mat.powder.porosity = porosity;
  mat.powder.gas_conductivity = gas_conductivity;
  mat.powder.particle_diameter = powder_diameter;
  mat.powder.sigma_sb = sigma_sb;
  mat.smoothing.delta_per_K = smoothing_delta;
  mat.smoothing.floor_value = smoothing_floor;
  return mat;
}

CouplingConfig RunConfig::coupling_config() const {
  CouplingConfig cc;
  cc.mode = coupling_mode;
  cc.theta = theta;
  cc.tolerance = coupling_tol;
  cc.max_outer = coupling_max_outer;
  cc.solver.tol_rel = solver_tol;
  cc.solver.max_iter = solver_max_iter;
  cc.workers = workers;
  return cc;
}

BuildOptions RunConfig::build_options() const {
  BuildOptions bo;
  bo.n_layers = n_layers;
  bo.snapshot_every = snapshot_every;
  bo.output_dir = output_dir;
  bo.run_audits = audits;
  bo.dwell_mode = dwell_mode;
  bo.dwell_on_local = dwell_on_local;
  bo.steady_picard_tol = picard_tol;
  bo.steady_picard_max = picard_max;
  return bo;
}

RunConfig default_config() {
  RunConfig cfg;
  for (const KeyBinding& kb : bindings()) {
    cfg.provenance[kb.full] = kb.default_provenance;
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);

  RunConfig cfg = default_config();
  const auto binds = bindings();
  auto find = [&](const std::string& full) -> const KeyBinding* {
    for (const KeyBinding& kb : binds) {
      if (kb.full == full) return &kb;
    }
    return nullptr;
  };

  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config: bad section at line " +
                                    std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key=value at line " +
                                  std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    const KeyBinding* kb = find(full);
    if (!kb) {
      throw std::invalid_argument("config: unknown key '" + full + "' at line " +
                                  std::to_string(lineno));
    }
    kb->set(cfg, value);
    cfg.provenance[full] = "user";
  }
  cfg.validate();
  return cfg;
}

void write_manifest(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot open " + path);
  const auto binds = bindings();
  std::string section;
  out << "# resolved run configuration\n";
  for (const KeyBinding& kb : binds) {
    const auto dot = kb.full.find('.');
    const std::string sec = kb.full.substr(0, dot);
    const std::string key = kb.full.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    auto it = cfg.provenance.find(kb.full);
    const std::string prov = it == cfg.provenance.end() ? "assumed" : it->second;
    out << key << " = " << kb.get(cfg) << "  # provenance: " << prov << "\n";
  }
}

}  // namespace lpbf
