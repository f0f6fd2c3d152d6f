#include <doctest.h>

#include <fstream>

#include "lpbf/metrics.hpp"
#include "test_support.hpp"

using namespace lpbf;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("max relative error: hand-worked cases") {
  const DwellSeries meas{{100.0, 200.0}};
  const DwellSeries sim{{110.0, 190.0}};
  const MaxRelativeError e = max_relative_error(sim, meas);
  CHECK(e.percent == doctest::Approx(10.0));
  CHECK(e.layer == 1);

  CHECK(max_relative_error(meas, meas).percent == doctest::Approx(0.0));

  // under-prediction must count too
  const DwellSeries under{{80.0, 200.0}};
  CHECK(max_relative_error(under, meas).percent == doctest::Approx(20.0));
}

TEST_CASE("max relative error: scale invariance and positivity") {
  const DwellSeries meas{{320.0, 340.0, 410.0, 395.0}};
  const DwellSeries sim{{318.0, 349.0, 400.0, 401.0}};
  const MaxRelativeError base = max_relative_error(sim, meas);
  CHECK(base.percent > 0.0);
  for (double c : {0.5, 3.0, 250.0}) {
    DwellSeries ms = meas, ss = sim;
    for (double& v : ms.values) v *= c;
    for (double& v : ss.values) v *= c;
    const MaxRelativeError scaled = max_relative_error(ss, ms);
    CHECK(scaled.percent == doctest::Approx(base.percent).epsilon(1e-12));
    CHECK(scaled.layer == base.layer);
  }
}

TEST_CASE("max relative error: error paths") {
  CHECK_THROWS_AS(max_relative_error({{1.0}}, {{1.0, 2.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(max_relative_error({{1.0}}, {{0.0}}), std::invalid_argument);
}

TEST_CASE("pearson: perfect, affine, and anti-correlated") {
  const DwellSeries meas{{1.0, 2.0, 3.0}};
  CHECK(pearson_percent(meas, meas) == doctest::Approx(100.0));

  DwellSeries affine{{0.0, 0.0, 0.0}};
  for (int i = 0; i < 3; ++i) affine.values[i] = 4.2 * meas.values[i] + 17.0;
  CHECK(pearson_percent(affine, meas) == doctest::Approx(100.0));

  const DwellSeries reversed{{3.0, 2.0, 1.0}};
  CHECK(pearson_percent(reversed, meas) == doctest::Approx(-100.0));
}

TEST_CASE("pearson: symmetry and bounds") {
  const DwellSeries a{{5.0, 9.0, 2.0, 7.0, 7.5}};
  const DwellSeries b{{4.0, 8.5, 3.0, 6.0, 9.0}};
  CHECK(pearson_percent(a, b) == doctest::Approx(pearson_percent(b, a)));
  CHECK(std::abs(pearson_percent(a, b)) <= 100.0 + 1e-9);
}

TEST_CASE("pearson: degenerate inputs") {
  CHECK_THROWS_AS(pearson_percent({{1.0}}, {{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(pearson_percent({{2.0, 2.0}}, {{1.0, 3.0}}),
                  std::invalid_argument);
}

TEST_CASE("measured series csv loader") {
  testing::TempDir tmp("metrics");
  {
    std::ofstream out(tmp.file("meas.csv"));
    out << "layer_index,T_degC\n1,100\n2,110.5\n3,115\n";
  }
  const DwellSeries s = load_dwell_series_csv(tmp.file("meas.csv"));
  REQUIRE(s.size() == 3);
  CHECK(s.values[1] == doctest::Approx(110.5 + 273.15));

  {
    std::ofstream out(tmp.file("gap.csv"));
    out << "1,100\n3,115\n";
  }
  CHECK_THROWS(load_dwell_series_csv(tmp.file("gap.csv")));
}

TEST_CASE("metrics report file") {
  testing::TempDir tmp("metrics");
  write_metrics_report(tmp.file("report.json"), {13.95, 2}, 99.74, 20);
  std::ifstream in(tmp.file("report.json"));
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"eps_max_percent\": 13.95") != std::string::npos);
  CHECK(text.find("\"pearson_percent\": 99.74") != std::string::npos);
  CHECK(text.find("\"n_layers\": 20") != std::string::npos);
}

TEST_SUITE_END();
