#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "lpbf/checks.hpp"
#include "lpbf/config.hpp"
#include "lpbf/metrics.hpp"
#include "lpbf/process.hpp"

namespace fs = std::filesystem;
using namespace lpbf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CliOverrides {
  std::string config_path;
  std::string output_dir;
  int workers = 0;
  bool verbose = false;
};

RunConfig load_with_overrides(const CliOverrides& cli) {
  RunConfig cfg = cli.config_path.empty() ? default_config()
                                          : load_config(cli.config_path);
  if (!cli.output_dir.empty()) {
    cfg.output_dir = cli.output_dir;
    cfg.provenance["paths.output"] = "user";
  }
  if (cli.workers > 0) {
    cfg.workers = cli.workers;
    cfg.provenance["run.workers"] = "user";
  }
  if (cli.verbose) {
    cfg.verbose = true;
    cfg.provenance["run.verbose"] = "user";
  }
  cfg.validate();
  return cfg;
}

int cmd_run(const CliOverrides& cli) {
  RunConfig cfg;
  try {
    cfg = load_with_overrides(cli);
    if (cfg.stl_path.empty()) {
      throw std::invalid_argument("config: paths.stl is required for run");
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    fs::create_directories(cfg.output_dir);
    write_manifest((fs::path(cfg.output_dir) / "manifest.cfg").string(), cfg);

    const TriangleSoup part = load_stl(cfg.stl_path);
    if (part.dropped_degenerate() > 0) {
      std::cout << "note: dropped " << part.dropped_degenerate()
                << " degenerate facets\n";
    }
    const MaterialModel mat = cfg.material_model();

    CouplingConfig coupling = cfg.coupling_config();
    std::ofstream trace_out;
    if (cfg.verbose) {
      trace_out.open((fs::path(cfg.output_dir) / "trace.csv").string());
      trace_out << "step,iteration,residual,mode,wall_seconds\n";
      coupling.trace = [&trace_out](const IterationTrace& t) {
        trace_out << t.step << "," << t.iteration << "," << t.residual << ","
                  << (t.mode == CouplingMode::Sequential ? "sequential"
                                                         : "parallel")
                  << "," << t.wall_seconds << "\n";
      };
    }

    const auto t0 = std::chrono::steady_clock::now();
    const BuildResult result =
        run_build(part, cfg.grid_spec(), mat, cfg.surface_coefficients(),
                  cfg.process, coupling, cfg.build_options());
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    write_dwell_csv((fs::path(cfg.output_dir) / "dwell.csv").string(),
                    result.dwell);

    if (!cfg.measured_csv.empty()) {
      const DwellSeries measured = load_dwell_series_csv(cfg.measured_csv);
      DwellSeries sim;
      for (const LayerRecord& r : result.dwell) sim.values.push_back(r.dwell_K);
      const MaxRelativeError eps = max_relative_error(sim, measured);
      const double p = pearson_percent(sim, measured);
      write_metrics_report(
          (fs::path(cfg.output_dir) / "metrics.json").string(), eps, p,
          sim.size());
      std::cout << "metrics: eps_max " << eps.percent << "% at layer "
                << eps.layer << ", pearson " << p << "%\n";
    }

    std::cout << "completed " << result.dwell.size() << " layers, sim time "
              << result.total_sim_time_s << " s, wall " << wall << " s\n";
    if (!result.dwell.empty()) {
      std::cout << "final dwell " << to_celsius(result.dwell.back().dwell_K)
                << " C\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_verify(const CliOverrides& cli) {
  RunConfig cfg;
  try {
    cfg = load_with_overrides(cli);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const auto results = run_verification_suite(cfg);
    for (const CheckResult& r : results) {
      std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name
                << "  measured=" << r.measured << " threshold=" << r.threshold;
      if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
      std::cout << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "verify failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_mesh_info(const CliOverrides& cli) {
  RunConfig cfg;
  try {
    cfg = load_with_overrides(cli);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const GridSpec grid = cfg.grid_spec();
    Mesh mesh = build_global_mesh(grid.plate, grid.powder_envelope,
                                  grid.h_plane, grid.h_plate_z);
    std::cout << "plate mesh: " << mesh.node_count() << " nodes, "
              << mesh.element_count() << " tets\n";
    GrowthState growth{0, grid.plate.max().z(),
                       cfg.process.agglomerated_thickness()};
    for (int i = 0; i < cfg.n_layers; ++i) activate_layer(mesh, growth);
    std::cout << "after " << cfg.n_layers << " layers: " << mesh.node_count()
              << " nodes, " << mesh.element_count() << " tets, top z "
              << growth.top_z * 1e3 << " mm\n";
    const MeshAudit audit = audit_mesh(mesh);
    std::cout << "audit: " << (audit.pass() ? "pass" : "FAIL")
              << " volume_error_rel=" << audit.volume_error_rel << "\n";
    return audit.pass() ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "mesh-info failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_classify_test(const std::string& stl_path, int n_points,
                      unsigned seed) {
  try {
    const TriangleSoup soup = load_stl(stl_path);
    const Box3& bb = soup.bounding_box();
    std::cout << "facets: " << soup.triangles().size() << " (dropped "
              << soup.dropped_degenerate() << " degenerate)\n";
    std::cout << "bbox mm: [" << bb.min().transpose() << "] .. ["
              << bb.max().transpose() << "]\n";

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 lo = bb.min() - 0.1 * bb.sizes();
    const Vec3 span = 1.2 * bb.sizes();
    int solid = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n_points; ++i) {
      const Vec3 p =
          lo + Vec3(u(rng) * span.x(), u(rng) * span.y(), u(rng) * span.z());
      if (classify_point(soup, p).label == MaterialLabel::Solid) ++solid;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::cout << "classified " << n_points << " points in " << wall
              << " s: " << solid << " solid, " << (n_points - solid)
              << " powder\n";
    const double sample_volume = span.prod();
    std::cout << "solid volume estimate: "
              << sample_volume * solid / std::max(1, n_points) << " mm^3\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "classify-test failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"part-scale thermal simulation of laser powder bed fusion"};
  app.require_subcommand(1);

  CliOverrides cli;

  auto* run = app.add_subcommand("run", "run a full build simulation");
  run->add_option("--config", cli.config_path, "configuration file");
  run->add_option("--output", cli.output_dir, "output directory override");
  run->add_option("--workers", cli.workers, "assembly worker threads");
  run->add_flag("--verbose", cli.verbose, "emit per-iteration trace CSV");

  auto* verify =
      app.add_subcommand("verify", "run the built-in property suites");
  verify->add_option("--config", cli.config_path, "configuration file");
  verify->add_option("--workers", cli.workers, "assembly worker threads");
  verify->add_flag("--verbose", cli.verbose, "verbose output");

  auto* info = app.add_subcommand("mesh-info", "report mesh sizes for a config");
  info->add_option("--config", cli.config_path, "configuration file");

  std::string stl_path;
  int n_points = 10000;
  unsigned seed = 12345;
  auto* classify =
      app.add_subcommand("classify-test", "inside/outside sampling of an STL");
  classify->add_option("--stl", stl_path, "STL file")->required();
  classify->add_option("--n", n_points, "number of sample points");
  classify->add_option("--seed", seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(cli);
  if (verify->parsed()) return cmd_verify(cli);
  if (info->parsed()) return cmd_mesh_info(cli);
  if (classify->parsed()) return cmd_classify_test(stl_path, n_points, seed);
  return kExitConfig;
}
