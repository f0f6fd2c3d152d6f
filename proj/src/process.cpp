#include "lpbf/process.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lpbf {
namespace {

constexpr double kMmPerM = 1e3;

std::string layer_phase_context(int layer, PhaseKind kind) {
  std::ostringstream os;
  os << "layer " << layer << " phase " << phase_name(kind);
  return os.str();
}

// In-plane footprint of the local slab, snapped to the fine lattice and kept
// at least one global cell away from the bed boundary so gamma stays immersed.
void plan_local_footprint(const GridSpec& grid, const Box3& part_bbox_m,
                          double& x_lo, double& x_hi, double& y_lo,
                          double& y_hi) {
  const Box3& bed = grid.powder_envelope;
  const int margin_cells = static_cast<int>(
      std::ceil(grid.h_plane / grid.h_local - 1e-9));

  auto plan_axis = [&](double bed_lo, double bed_hi, double want_lo,
                       double want_hi, double& out_lo, double& out_hi) {
    const int total = static_cast<int>(std::llround((bed_hi - bed_lo) / grid.h_local));
    const int min_cell = margin_cells;
    const int max_cell = total - margin_cells;
    if (max_cell - min_cell < 1) {
      throw std::invalid_argument(
          "local box: bed too small for an immersed local domain");
    }
    int lo = static_cast<int>(std::floor((want_lo - bed_lo) / grid.h_local + 1e-9));
    int hi = static_cast<int>(std::ceil((want_hi - bed_lo) / grid.h_local - 1e-9));
    lo = std::clamp(lo, min_cell, max_cell - 1);
    hi = std::clamp(hi, lo + 1, max_cell);
    out_lo = bed_lo + lo * grid.h_local;
    out_hi = bed_lo + hi * grid.h_local;
  };

  if (grid.local_full_bed) {
    plan_axis(bed.min().x(), bed.max().x(), bed.min().x(), bed.max().x(), x_lo,
              x_hi);
    plan_axis(bed.min().y(), bed.max().y(), bed.min().y(), bed.max().y(), y_lo,
              y_hi);
  } else {
    plan_axis(bed.min().x(), bed.max().x(),
              part_bbox_m.min().x() - grid.local_margin,
              part_bbox_m.max().x() + grid.local_margin, x_lo, x_hi);
    plan_axis(bed.min().y(), bed.max().y(),
              part_bbox_m.min().y() - grid.local_margin,
              part_bbox_m.max().y() + grid.local_margin, y_lo, y_hi);
  }
}

std::vector<std::array<MaterialLabel, 4>> classify_element_qps(
    const TriangleSoup& part, const Mesh& mesh, const std::vector<int>& elements,
    double z_lo_m, double z_hi_m, int layer) {
  std::vector<Vec3> pts;
  pts.reserve(elements.size() * 4);
  for (int e : elements) {
    for (int q = 0; q < 4; ++q) pts.push_back(qp_position(mesh, e, q) * kMmPerM);
  }
  const double slack = 1e-6;
  const auto cls = classify_layer_points(part, pts, z_lo_m * kMmPerM - slack,
                                         z_hi_m * kMmPerM + slack, layer);
  std::vector<std::array<MaterialLabel, 4>> labels(elements.size());
  for (std::size_t i = 0; i < elements.size(); ++i) {
    for (int q = 0; q < 4; ++q) labels[i][q] = cls[i * 4 + q].label;
  }
  return labels;
}

void audit_or_throw(const Mesh& mesh, const char* which,
                    std::vector<std::string>* failures) {
  const MeshAudit audit = audit_mesh(mesh);
  if (!audit.pass()) {
    const std::string msg = std::string(which) + " mesh audit failed: " +
                            audit.detail + " volume_error_rel=" +
                            std::to_string(audit.volume_error_rel);
    if (failures) failures->push_back(msg);
    throw std::runtime_error(msg);
  }
}

}  // namespace

void ProcessParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string("process params: ") + what +
                                  " must be positive");
    }
  };
  positive(laser_power, "laser power");
  positive(absorptivity, "absorptivity");
  positive(spot_size, "spot size");
  positive(scan_speed, "scan speed");
  positive(layer_thickness, "layer thickness");
  positive(interlayer_cooling_s, "interlayer cooling time");
  positive(recoat_s, "recoat duration");
  positive(recoat_dt_s, "recoat time step");
  positive(cooling_dt_s, "cooling time step");
  positive(T_ambient, "chamber temperature");
  positive(T_plate, "plate temperature");
  if (layers_per_agglomeration < 1) {
    throw std::invalid_argument("process params: layers per agglomeration >= 1");
  }
}

double equivalent_heat_source(const ProcessParams& params, double t_a) {
  return 4.0 * params.absorptivity * params.laser_power /
         (M_PI * params.spot_size * params.spot_size * t_a);
}

double heating_time_step(const ProcessParams& params) {
  const double spot_radius = 0.5 * params.spot_size;
  return 2.0 * spot_radius / params.scan_speed;
}

const char* phase_name(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::Activate: return "activate";
    case PhaseKind::Diffuse: return "diffuse";
    case PhaseKind::Heat: return "heat";
    case PhaseKind::Cool: return "cool";
  }
  return "?";
}

std::vector<ScheduleEvent> build_schedule(const ProcessParams& params,
                                          int n_layers) {
  params.validate();
  std::vector<ScheduleEvent> events;
  events.reserve(static_cast<std::size_t>(n_layers) * 4);
  const double dt_a = heating_time_step(params);
  for (int layer = 1; layer <= n_layers; ++layer) {
    events.push_back({PhaseKind::Activate, 0.0, 0.0, layer});
    events.push_back({PhaseKind::Diffuse, params.recoat_s, params.recoat_dt_s,
                      layer});
    events.push_back({PhaseKind::Heat, dt_a, dt_a, layer});
    events.push_back({PhaseKind::Cool, params.interlayer_cooling_s,
                      params.cooling_dt_s, layer});
  }
  return events;
}

double dwell_temperature(const Mesh& mesh, const Eigen::VectorXd& T,
                         const TriangleSoup* part, DwellMode mode,
                         double section_z_m, bool* used_fallback) {
  constexpr std::array<std::array<double, 3>, 3> tri_qp = {{
      {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
      {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
      {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
  }};
  if (used_fallback) *used_fallback = false;

  auto average = [&](bool restrict_to_part) -> std::pair<double, double> {
    double sum = 0.0, weight = 0.0;
    for (const BoundaryFace& f : mesh.boundary) {
      if (f.tag != FaceTag::TopSurface) continue;
      const Vec3& a = mesh.nodes[f.nodes[0]];
      const Vec3& b = mesh.nodes[f.nodes[1]];
      const Vec3& c = mesh.nodes[f.nodes[2]];
      for (int q = 0; q < 3; ++q) {
        const auto& l = tri_qp[q];
        const Vec3 x = l[0] * a + l[1] * b + l[2] * c;
        if (restrict_to_part) {
          const Vec3 probe_mm(x.x() * kMmPerM, x.y() * kMmPerM,
                              section_z_m * kMmPerM);
          if (part->classify(probe_mm) != MaterialLabel::Solid) continue;
        }
        const double w = f.area / 3.0;
        sum += w * (l[0] * T[f.nodes[0]] + l[1] * T[f.nodes[1]] +
                    l[2] * T[f.nodes[2]]);
        weight += w;
      }
    }
    return {sum, weight};
  };

  if (mode == DwellMode::PartFootprint) {
    if (!part) {
      throw std::invalid_argument(
          "dwell: part geometry required for footprint mode");
    }
    const auto [sum, weight] = average(true);
    if (weight > 0.0) return sum / weight;
    if (used_fallback) *used_fallback = true;
  }
  const auto [sum, weight] = average(false);
  if (weight <= 0.0) {
    throw std::runtime_error("dwell: mesh has no top-surface faces");
  }
  return sum / weight;
}

BuildResult run_build(const TriangleSoup& part, const GridSpec& grid,
                      const MaterialModel& mat,
                      const SurfaceCoefficients& surf,
                      const ProcessParams& proc, const CouplingConfig& coupling,
                      const BuildOptions& opts) {
  proc.validate();
  mat.powder.validate();
  mat.smoothing.validate();

  BuildResult res;
  res.global_mesh = build_global_mesh(grid.plate, grid.powder_envelope,
                                      grid.h_plane, grid.h_plate_z);
  Mesh& gmesh = res.global_mesh;

  const auto gbc = BoundaryConditionSet::global_defaults(
      surf.h_conv, surf.h_pow, proc.T_ambient, proc.T_plate);
  const auto lbc = BoundaryConditionSet::local_defaults(
      surf.h_conv, proc.T_ambient, surf.emissivity, mat.powder.sigma_sb);

  CoupledState cs;
  cs.global = steady_plate_solve(gmesh, gbc, mat, opts.steady_picard_tol,
                                 opts.steady_picard_max, coupling.solver);
  res.plate_state = cs.global;
  if (opts.n_layers == 0) {
    res.global = cs.global;
    return res;
  }

  const double t_a = proc.agglomerated_thickness();
  GrowthState growth{0, grid.plate.max().z(), t_a};

  const Box3 part_bbox_m(Vec3(part.bounding_box().min() / kMmPerM),
                         Vec3(part.bounding_box().max() / kMmPerM));
  LocalBox box;
  plan_local_footprint(grid, part_bbox_m, box.x_lo, box.x_hi, box.y_lo,
                       box.y_hi);
  box.depth = grid.local_depth;
  box.floor_z = grid.plate.max().z();
  box.h = grid.h_local;

  Mesh lmesh;
  InterfaceMap map;
  Mesh prev_lmesh;
  Eigen::VectorXd prev_local_T;
  bool have_prev_local = false;

  const double dt_a = heating_time_step(proc);
  const double q_flash = equivalent_heat_source(proc, t_a);
  const int diffuse_steps = std::max(
      1, static_cast<int>(std::llround(proc.recoat_s / proc.recoat_dt_s)));
  const int cool_steps =
      std::max(1, static_cast<int>(std::llround(proc.interlayer_cooling_s /
                                                proc.cooling_dt_s)));

  double sim_t = 0.0;

  auto run_phase = [&](int layer, PhaseKind kind, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(layer_phase_context(layer, kind) + ": " +
                               e.what());
    }
  };

  for (int layer = 1; layer <= opts.n_layers; ++layer) {
    run_phase(layer, PhaseKind::Activate, [&] {
      const int prev_node_count = gmesh.node_count();
      const BornIds born = activate_layer(gmesh, growth);
      if (born.nodes.empty() || born.nodes.front() != prev_node_count) {
        throw std::logic_error("activation did not append node ids");
      }

      // freeze material labels of the born layer
      const auto born_labels =
          classify_element_qps(part, gmesh, born.elements, growth.top_z - t_a,
                               growth.top_z, layer);
      cs.global.qp_labels.insert(cs.global.qp_labels.end(),
                                 born_labels.begin(), born_labels.end());

      // fresh powder enters at chamber temperature; shared nodes keep theirs
      const int n = gmesh.node_count();
      Eigen::VectorXd grown = Eigen::VectorXd::Constant(n, proc.T_ambient);
      grown.head(prev_node_count) = cs.global.T;
      cs.global.T = grown;
      cs.global.T_prev = cs.global.T;

      if (layer == 1) {
        box.z_top = growth.top_z;
      } else {
        box = shift_local_box(box, growth);
      }
      if (std::abs(box.z_top - growth.top_z) > 1e-12) {
        throw std::logic_error("local box out of sync with growth");
      }

      lmesh = build_local_mesh(box, gmesh.extent(), growth.top_z);

      DomainState lstate;
      lstate.role = DomainRole::Local;
      std::vector<int> all_elems(lmesh.element_count());
      for (int e = 0; e < lmesh.element_count(); ++e) all_elems[e] = e;
      lstate.qp_labels = classify_element_qps(part, lmesh, all_elems,
                                              box.z_bottom(), box.z_top, layer);
      lstate.T.resize(lmesh.node_count());
      for (int nd = 0; nd < lmesh.node_count(); ++nd) {
        const Vec3& p = lmesh.nodes[nd];
        double value;
        if (have_prev_local && prev_lmesh.extent().contains(p)) {
          const Location loc = locate_point(prev_lmesh, p);
          const auto& t = prev_lmesh.tets[loc.element];
          value = loc.bary[0] * prev_local_T[t[0]] +
                  loc.bary[1] * prev_local_T[t[1]] +
                  loc.bary[2] * prev_local_T[t[2]] +
                  loc.bary[3] * prev_local_T[t[3]];
        } else {
          const Location loc = locate_point(gmesh, p);
          const auto& t = gmesh.tets[loc.element];
          value = loc.bary[0] * cs.global.T[t[0]] +
                  loc.bary[1] * cs.global.T[t[1]] +
                  loc.bary[2] * cs.global.T[t[2]] +
                  loc.bary[3] * cs.global.T[t[3]];
        }
        lstate.T[nd] = value;
      }
      lstate.T_prev = lstate.T;
      cs.local = std::move(lstate);

      map = build_interface_map(gmesh, lmesh);

      if (opts.run_audits) {
        audit_or_throw(gmesh, "global", &res.audit_failures);
        audit_or_throw(lmesh, "local", &res.audit_failures);
        const double lx = box.x_hi - box.x_lo;
        const double ly = box.y_hi - box.y_lo;
        const double d = box.z_top - box.z_bottom();
        const double expected_area = 2.0 * (lx + ly) * d + lx * ly;
        const double area_err =
            std::abs(map.gamma_area - expected_area) / expected_area;
        if (area_err > 1e-10) {
          const std::string msg =
              "gamma area audit failed: rel err " + std::to_string(area_err);
          res.audit_failures.push_back(msg);
          throw std::runtime_error(msg);
        }
      }
    });

    run_phase(layer, PhaseKind::Diffuse, [&] {
      for (int s = 0; s < diffuse_steps; ++s) {
        coupled_step(cs, gmesh, lmesh, map, gbc, lbc, mat, coupling,
                     proc.recoat_dt_s, {}, layer * 1000 + s);
        sim_t += proc.recoat_dt_s;
      }
    });

    // dwell sample: upper surface just before the laser flash
    {
      LayerRecord rec;
      rec.layer = layer;
      rec.sim_time_s = sim_t;
      const Mesh& dwell_mesh = opts.dwell_on_local ? lmesh : gmesh;
      const Eigen::VectorXd& dwell_T =
          opts.dwell_on_local ? cs.local.T : cs.global.T;
      rec.mode_used = opts.dwell_mode;
      rec.dwell_K =
          dwell_temperature(dwell_mesh, dwell_T, &part, opts.dwell_mode,
                            growth.top_z - 0.5 * t_a, &rec.dwell_fallback);
      if (rec.dwell_fallback) rec.mode_used = DwellMode::FullBed;
      res.dwell.push_back(rec);
    }

    run_phase(layer, PhaseKind::Heat, [&] {
      const double z_lo = growth.top_z - t_a;
      CoupledSources sources;
      sources.global_source = [&, z_lo](int e, int q, const Vec3& x) {
        return (x.z() > z_lo &&
                cs.global.qp_labels[e][q] == MaterialLabel::Solid)
                   ? q_flash
                   : 0.0;
      };
      sources.local_source = [&, z_lo](int e, int q, const Vec3& x) {
        return (x.z() > z_lo &&
                cs.local.qp_labels[e][q] == MaterialLabel::Solid)
                   ? q_flash
                   : 0.0;
      };

      const Eigen::VectorXd prev_g = cs.global.T;
      coupled_step(cs, gmesh, lmesh, map, gbc, lbc, mat, coupling, dt_a,
                   sources, layer * 1000 + 500);
      sim_t += dt_a;
      res.dwell.back().heat_outer_iterations = cs.iterations;

      if (opts.run_audits) {
        DomainState lag = cs.global;
        lag.T_prev = prev_g;
        const Eigen::VectorXd kp =
            interface_kappa(map, gmesh, cs.global, cs.global.T, mat, true);
        const Eigen::VectorXd km =
            interface_kappa(map, lmesh, cs.local, cs.local.T, mat, false);
        const Eigen::VectorXd flux =
            assemble_flux_functional(map, lmesh, cs.local.T, kp, km);
        AssembleOptions audit_opts;
        audit_opts.dt = dt_a;
        audit_opts.source = sources.global_source;
        audit_opts.flux_functional = &flux;
        res.heat_audits.push_back(
            {layer,
             energy_breakdown(gmesh, lag, gbc, mat, audit_opts, cs.global.T)});
      }
    });

    run_phase(layer, PhaseKind::Cool, [&] {
      for (int s = 0; s < cool_steps; ++s) {
        coupled_step(cs, gmesh, lmesh, map, gbc, lbc, mat, coupling,
                     proc.cooling_dt_s, {}, layer * 1000 + 600 + s);
        sim_t += proc.cooling_dt_s;
      }
    });

    if (opts.snapshot_every > 0 &&
        (layer % opts.snapshot_every == 0 || layer == opts.n_layers)) {
      namespace fs = std::filesystem;
      fs::create_directories(opts.output_dir);
      char name[64];
      std::snprintf(name, sizeof(name), "global_layer_%04d.vtk", layer);
      const std::string gpath = (fs::path(opts.output_dir) / name).string();
      write_vtk(gpath, gmesh, cs.global.T, "global temperature");
      std::snprintf(name, sizeof(name), "local_layer_%04d.vtk", layer);
      const std::string lpath = (fs::path(opts.output_dir) / name).string();
      write_vtk(lpath, lmesh, cs.local.T, "local temperature");
      res.snapshot_files.push_back(gpath);
      res.snapshot_files.push_back(lpath);
    }

    prev_lmesh = lmesh;
    prev_local_T = cs.local.T;
    have_prev_local = true;
  }

  res.total_sim_time_s = sim_t;
  res.global = cs.global;
  res.local = cs.local;
  res.local_mesh = lmesh;
  res.local_box = box;
  return res;
}

void write_dwell_csv(const std::string& path,
                     const std::vector<LayerRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dwell csv: cannot open " + path);
  out << "layer_index,sim_time_s,dwell_T_K,dwell_T_degC,mode\n";
  out.precision(12);
  for (const LayerRecord& r : records) {
    out << r.layer << "," << r.sim_time_s << "," << r.dwell_K << ","
        << to_celsius(r.dwell_K) << ","
        << (r.mode_used == DwellMode::PartFootprint ? "part_footprint"
                                                    : "full_bed")
        << "\n";
  }
}

}  // namespace lpbf
