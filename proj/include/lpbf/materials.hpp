#pragma once

#include <string>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf {

struct SolidProps {
  double conductivity;    // W/m/K
  double heat_capacity;   // J/kg/K
  double density;         // kg/m^3
};

/// Temperature-indexed solid properties, tabulated in degrees Celsius with
/// strictly increasing knots. Lookups clamp below the first row and
/// extrapolate linearly above the last segment.
class MaterialTable {
 public:
  static MaterialTable from_rows(std::vector<double> temp_C,
                                 std::vector<double> conductivity,
                                 std::vector<double> heat_capacity,
                                 std::vector<double> density);
  /// CSV with header T_degC,k_W_mK,c_J_kgK,rho_kg_m3.
  static MaterialTable load_csv(const std::string& path);
  /// Two identical rows; handy for constant-coefficient studies.
  static MaterialTable constant(double conductivity, double heat_capacity,
                                double density);

  std::size_t rows() const { return temp_C_.size(); }
  double min_temperature_C() const { return temp_C_.front(); }
  double max_temperature_C() const { return temp_C_.back(); }

  SolidProps interpolate(double temp_C) const;

 private:
  std::vector<double> temp_C_;
  std::vector<double> k_;
  std::vector<double> c_;
  std::vector<double> rho_;
};

inline SolidProps interpolate_solid(const MaterialTable& table, double temp_C) {
  return table.interpolate(temp_C);
}

/// Spherical-particle powder bed surrounding the consolidated part.
struct PowderModel {
  double porosity = 0.35;              // [-]
  double gas_conductivity = 0.0172;    // W/m/K, inert chamber gas
  double particle_diameter = 30e-6;    // m
  double sigma_sb = kStefanBoltzmann;  // W/m^2/K^4

  void validate() const;
};

inline double powder_density(double rho_sol, double porosity) {
  return (1.0 - porosity) * rho_sol;
}

inline double powder_heat_capacity(double c_sol) { return c_sol; }

/// Powder conductivity from the solid value and the gas-filled pore model.
/// temp_K must be absolute temperature: the radiative exchange between
/// particles scales with T^3.
double powder_conductivity(const PowderModel& model, double k_sol,
                           double temp_K);

/// Gradient-driven attenuation applied to powder conductivity in elements cut
/// by the solid/powder interface. delta_per_K carries units 1/K so the result
/// is dimensionless; the floor keeps conductivity positive under the steep
/// gradients of the heating step.
struct SmoothingParams {
  double delta_per_K = 0.2;
  double element_length = 0.0;  // m, nominal length of the owning mesh
  double floor_value = 0.05;

  void validate() const;
};

double smoothing_factor(const SmoothingParams& params, const Vec3& grad_T);

}  // namespace lpbf
