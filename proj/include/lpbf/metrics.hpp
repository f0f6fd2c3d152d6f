#pragma once

#include <string>
#include <vector>

namespace lpbf {

/// Dwell temperatures per agglomerated layer, index 1..N, kelvin.
struct DwellSeries {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct MaxRelativeError {
  double percent;
  int layer;  // 1-based argmax
};

MaxRelativeError max_relative_error(const DwellSeries& sim,
                                    const DwellSeries& meas);

double pearson_percent(const DwellSeries& sim, const DwellSeries& meas);

/// Two-column CSV (layer_index, T_degC); rows must be contiguous from 1.
DwellSeries load_dwell_series_csv(const std::string& path);

void write_metrics_report(const std::string& path, const MaxRelativeError& eps,
                          double pearson, std::size_t n_layers);

}  // namespace lpbf
