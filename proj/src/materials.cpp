#include "lpbf/materials.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lpbf {

MaterialTable MaterialTable::from_rows(std::vector<double> temp_C,
                                       std::vector<double> conductivity,
                                       std::vector<double> heat_capacity,
                                       std::vector<double> density) {
  const std::size_t n = temp_C.size();
  if (n == 0 || conductivity.size() != n || heat_capacity.size() != n ||
      density.size() != n) {
    throw std::invalid_argument("material table: empty or ragged columns");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(conductivity[i] > 0.0 && heat_capacity[i] > 0.0 && density[i] > 0.0)) {
      throw std::invalid_argument("material table: nonpositive property value");
    }
    if (i > 0 && !(temp_C[i] > temp_C[i - 1])) {
      throw std::invalid_argument(
          "material table: temperatures must be strictly increasing");
    }
  }
  MaterialTable t;
  t.temp_C_ = std::move(temp_C);
  t.k_ = std::move(conductivity);
  t.c_ = std::move(heat_capacity);
  t.rho_ = std::move(density);
  return t;
}

MaterialTable MaterialTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("material csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("material csv: empty file " + path);
  }
  // tolerate UTF-8 BOM and whitespace around the header
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
    line.erase(0, 3);
  }
  std::string header = line;
  header.erase(std::remove_if(header.begin(), header.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               header.end());
  if (header != "T_degC,k_W_mK,c_J_kgK,rho_kg_m3") {
    throw std::runtime_error("material csv: unexpected header '" + line + "'");
  }

  std::vector<double> T, k, c, rho;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[4];
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, field, ',')) {
        throw std::runtime_error("material csv: short row at line " +
                                 std::to_string(lineno));
      }
      try {
        vals[i] = std::stod(field);
      } catch (const std::exception&) {
        throw std::runtime_error("material csv: bad number at line " +
                                 std::to_string(lineno));
      }
    }
    T.push_back(vals[0]);
    k.push_back(vals[1]);
    c.push_back(vals[2]);
    rho.push_back(vals[3]);
  }
  return from_rows(std::move(T), std::move(k), std::move(c), std::move(rho));
}

MaterialTable MaterialTable::constant(double conductivity, double heat_capacity,
                                      double density) {
  return from_rows({0.0, 1000.0}, {conductivity, conductivity},
                   {heat_capacity, heat_capacity}, {density, density});
}

SolidProps MaterialTable::interpolate(double temp_C) const {
  const std::size_t n = temp_C_.size();
  if (n == 1 || temp_C <= temp_C_.front()) {
    return {k_.front(), c_.front(), rho_.front()};
  }
  // above the last knot: continue on the final segment's slope
  std::size_t hi = n - 1;
  if (temp_C < temp_C_.back()) {
    hi = static_cast<std::size_t>(
        std::upper_bound(temp_C_.begin(), temp_C_.end(), temp_C) -
        temp_C_.begin());
  }
  const std::size_t lo = hi - 1;
  const double w = (temp_C - temp_C_[lo]) / (temp_C_[hi] - temp_C_[lo]);
  auto lerp = [&](const std::vector<double>& v) {
    return v[lo] + w * (v[hi] - v[lo]);
  };
  return {lerp(k_), lerp(c_), lerp(rho_)};
}

void PowderModel::validate() const {
  if (!(porosity > 0.0 && porosity < 1.0)) {
    throw std::invalid_argument("powder model: porosity must be in (0,1)");
  }
  if (!(gas_conductivity > 0.0)) {
    throw std::invalid_argument("powder model: gas conductivity must be > 0");
  }
  if (!(particle_diameter >= 0.0)) {
    throw std::invalid_argument("powder model: particle diameter must be >= 0");
  }
  if (!(sigma_sb > 0.0)) {
    throw std::invalid_argument("powder model: sigma_sb must be > 0");
  }
}

double powder_conductivity(const PowderModel& model, double k_sol,
                           double temp_K) {
  if (!(k_sol > model.gas_conductivity)) {
    throw std::domain_error(
        "powder conductivity: requires k_sol > k_gas (log/denominator "
        "pathologies otherwise)");
  }
  if (!(temp_K > 0.0)) {
    throw std::domain_error("powder conductivity: absolute temperature required");
  }
  const double k_gas = model.gas_conductivity;
  const double radiative =
      (4.0 / 3.0) * model.sigma_sb * temp_K * temp_K * temp_K *
      model.particle_diameter / k_gas;
  const double s = std::sqrt(1.0 - model.porosity);
  const double a = 2.0 / (1.0 - k_gas / k_sol);
  const double rhs = (1.0 - s) * (1.0 + radiative) +
                     s * a * (a * std::log(k_sol / k_gas) - 1.0) +
                     s * radiative;
  return k_gas * rhs;
}

void SmoothingParams::validate() const {
  if (!(floor_value > 0.0 && floor_value <= 1.0)) {
    throw std::invalid_argument("smoothing: floor must be in (0,1]");
  }
  if (!(delta_per_K >= 0.0)) {
    throw std::invalid_argument("smoothing: delta must be >= 0");
  }
  if (!(element_length >= 0.0)) {
    throw std::invalid_argument("smoothing: element length must be >= 0");
  }
}

double smoothing_factor(const SmoothingParams& params, const Vec3& grad_T) {
  const double s = 1.0 - grad_T.norm() * params.element_length * params.delta_per_K;
  return std::max(params.floor_value, s);
}

}  // namespace lpbf
