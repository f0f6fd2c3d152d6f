#include "lpbf/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lpbf/common.hpp"

namespace lpbf {

MaxRelativeError max_relative_error(const DwellSeries& sim,
                                    const DwellSeries& meas) {
  if (sim.size() != meas.size() || sim.size() == 0) {
    throw std::invalid_argument("max_relative_error: series length mismatch");
  }
  MaxRelativeError out{0.0, 1};
  for (std::size_t i = 0; i < sim.size(); ++i) {
    if (meas.values[i] == 0.0) {
      throw std::invalid_argument("max_relative_error: zero measured value");
    }
    const double e = std::abs(sim.values[i] - meas.values[i]) /
                     std::abs(meas.values[i]) * 100.0;
    if (e > out.percent) {
      out.percent = e;
      out.layer = static_cast<int>(i) + 1;
    }
  }
  return out;
}

double pearson_percent(const DwellSeries& sim, const DwellSeries& meas) {
  const std::size_t n = sim.size();
  if (n != meas.size() || n < 2) {
    throw std::invalid_argument("pearson: need equal lengths >= 2");
  }
  double mean_s = 0.0, mean_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_s += sim.values[i];
    mean_m += meas.values[i];
  }
  mean_s /= n;
  mean_m /= n;
  double num = 0.0, den_s = 0.0, den_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ds = sim.values[i] - mean_s;
    const double dm = meas.values[i] - mean_m;
    num += ds * dm;
    den_s += ds * ds;
    den_m += dm * dm;
  }
  if (den_s == 0.0 || den_m == 0.0) {
    throw std::invalid_argument("pearson: undefined for a constant series");
  }
  return num / std::sqrt(den_s * den_m) * 100.0;
}

DwellSeries load_dwell_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dwell series: cannot open " + path);
  DwellSeries series;
  std::string line;
  int expected = 1;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (first &&
        line.find_first_not_of("0123456789.,-+eE \t\r") != std::string::npos) {
      first = false;  // header row
      continue;
    }
    first = false;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw std::runtime_error("dwell series: bad row '" + line + "'");
    }
    const int idx = std::stoi(a);
    if (idx != expected) {
      throw std::runtime_error(
          "dwell series: indices must be contiguous from 1");
    }
    ++expected;
    series.values.push_back(to_kelvin(std::stod(b)));
  }
  if (series.values.empty()) {
    throw std::runtime_error("dwell series: no rows in " + path);
  }
  return series;
}

void write_metrics_report(const std::string& path, const MaxRelativeError& eps,
                          double pearson, std::size_t n_layers) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics report: cannot open " + path);
  out.precision(10);
  out << "{\n"
      << "  \"n_layers\": " << n_layers << ",\n"
      << "  \"eps_max_percent\": " << eps.percent << ",\n"
      << "  \"eps_max_layer\": " << eps.layer << ",\n"
      << "  \"pearson_percent\": " << pearson << "\n"
      << "}\n";
}

}  // namespace lpbf
