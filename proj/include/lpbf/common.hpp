#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace lpbf {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Box3 = Eigen::AlignedBox3d;

constexpr double kCelsiusOffset = 273.15;
constexpr double kStefanBoltzmann = 5.670374419e-8;  // W/m^2/K^4

inline double to_kelvin(double celsius) { return celsius + kCelsiusOffset; }
inline double to_celsius(double kelvin) { return kelvin - kCelsiusOffset; }

/// Linear-solver failure carrying the last residual for diagnostics.
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual(residual), iterations(iterations) {}
  double residual;
  int iterations;
};

/// Outer local/global iteration failed to converge within the budget.
class CouplingError : public std::runtime_error {
 public:
  CouplingError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

}  // namespace lpbf
