// Regenerates the bundled scenario geometry under data/.
#include <iostream>
#include <vector>

#include "lpbf/shapes.hpp"

using namespace lpbf;

namespace {

// Arched beam profile in the x-z plane (mm): a concave outline whose lower
// cross-sections split into separate legs, exercising multi-region layers.
std::vector<Eigen::Vector2d> beam_outline() {
  return {
      {4.0, 0.0},  {10.0, 0.0}, {10.0, 4.0}, {13.0, 4.0}, {13.0, 0.0},
      {17.0, 0.0}, {17.0, 4.0}, {20.0, 4.0}, {20.0, 0.0}, {26.0, 0.0},
      {26.0, 7.0}, {22.0, 10.0}, {8.0, 10.0}, {4.0, 7.0},
  };
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data";
  try {
    // validation cylinder: r 5 mm, height 20 mm, centered on a 30x30 mm bed
    write_stl_binary(out_dir + "/cylinder.stl",
                     cylinder_triangles(5.0, 15.0, 15.0, 0.0, 20.0, 512));

    // complex-geometry scenario: extruded concave profile, y in [11, 19] mm
    write_stl_binary(out_dir + "/beam.stl",
                     extruded_polygon_triangles(beam_outline(), 11.0, 19.0));

    std::cout << "wrote " << out_dir << "/cylinder.stl and " << out_dir
              << "/beam.stl\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "asset generation failed: " << e.what() << "\n";
    return 1;
  }
}
