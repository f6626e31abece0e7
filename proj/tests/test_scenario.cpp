#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "motbounds/scenario.hpp"

using namespace motb;

namespace {

const ResultRow& find_row(const ResultTable& table, const std::string& payoff,
                          const std::string& scenario, const std::string& side) {
  for (const ResultRow& row : table.rows) {
    if (row.payoff == payoff && row.scenario == scenario && row.side == side) return row;
  }
  FAIL("missing row ", payoff, "/", scenario, "/", side);
  static ResultRow dummy;
  return dummy;
}

std::string inline_square_config(const std::string& extra_scenarios) {
  return R"({
    "name": "square",
    "marginals": {"source": "inline", "maturities": 1, "assets": 2,
      "spots": [2, 2], "atoms": [[1,2,3],[1,2,3]]},
    "payoffs": [
      {"label":"one","kind":"custom","expression":{"op":"const","value":1}},
      {"label":"xy","kind":"custom","expression":
        {"op":"mul","a":{"op":"coord","i":0,"k":0},"b":{"op":"coord","i":0,"k":1}}}
    ],
    "scenarios": [)" +
         extra_scenarios + R"(]
  })";
}

}  // namespace

TEST_CASE("config parsing") {
  ScenarioConfig config = parse_scenario_config(bundled_config("table1"));
  CHECK(config.name == "table1");
  CHECK(config.payoffs.size() == 4);
  CHECK(config.scenarios.size() == 6);
  CHECK(config.marginals.kind == MarginalSource::Kind::inline_atoms);
  CHECK(config.scenarios[1].dependence.constant_correlation);
  REQUIRE(config.scenarios[2].dependence.correlation_lb.size() == 2);
  CHECK(config.scenarios[2].dependence.correlation_lb[0] == -0.5);

  CHECK(bundled_config_names().size() == 3);
  CHECK_THROWS_AS(bundled_config("nope"), RunError);
  CHECK_THROWS_AS(parse_scenario_config("{not json"), RunError);
  CHECK_THROWS_AS(parse_scenario_config(R"({"marginals":{"source":"teapot"}})"), RunError);
  try {
    parse_scenario_config("[]");
  } catch (const RunError& e) {
    CHECK(e.code() == RunExit::input_error);
  }
}

TEST_CASE("trivial bounds: payoff identically one") {
  ScenarioConfig config = parse_scenario_config(inline_square_config(""));
  ResultTable table = run_bounds(config);
  CHECK(find_row(table, "one", "none", "lower").value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(find_row(table, "one", "none", "upper").value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(find_row(table, "xy", "none", "lower").value <=
        find_row(table, "xy", "none", "upper").value);
}

TEST_CASE("csv output is byte-stable with pinned formatting") {
  ScenarioConfig config = parse_scenario_config(inline_square_config(""));
  const std::string csv1 = to_csv(run_bounds(config));
  const std::string csv2 = to_csv(run_bounds(config));
  CHECK(csv1 == csv2);
  CHECK(csv1.rfind("payoff,scenario,side,value,status,seconds\n", 0) == 0);
  // Comonotone E[XY] on two uniform{1,2,3} axes = (1+4+9)/3; 10 significant
  // digits of 14/3 pin the float formatting.
  CHECK(csv1.find("xy,none,upper,4.666666667,optimal,0\n") != std::string::npos);
}

TEST_CASE("published golden table via the bundled config") {
  ScenarioConfig config = parse_scenario_config(bundled_config("table1"));
  ResultTable table = run_bounds(config);
  REQUIRE(table.rows.size() == 48);

  const std::vector<std::string> scenarios = {
      "1-none",  "2-const-corr", "3-corr-lb-neg0.5", "4-corr-lb-pos0.5",
      "5-const-corr-lb-neg0.5", "6-const-corr-lb-pos0.5"};
  const std::map<std::string, std::vector<double>> lower = {
      {"c3", {0.25, 0.2781, 0.3179, 0.5375, 0.329, 0.639}},
      {"c4", {1.9611, 1.9611, 1.9611, 1.9611, 1.9611, 1.9611}},
      {"c5", {0.0, 0.0795, 0.0, 0.0, 0.0795, 0.0795}},
      {"c6", {0.0012, 0.0012, 0.0012, 0.0012, 0.0012, 0.0014}}};
  const std::map<std::string, std::vector<double>> upper = {
      {"c3", {1.0111, 0.9781, 1.0111, 1.0111, 0.9781, 0.9781}},
      {"c4", {3.2167, 3.198, 3.1615, 2.9714, 3.1615, 2.893}},
      {"c5", {1.9778, 1.9778, 1.9778, 0.8083, 1.9778, 0.6784}},
      {"c6", {0.0207, 0.0207, 0.0207, 0.0207, 0.0207, 0.0207}}};
  for (const auto& [payoff, values] : lower) {
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const ResultRow& row = find_row(table, payoff, scenarios[s], "lower");
      CHECK(row.status == "optimal");
      CHECK(std::fabs(row.value - values[s]) <= 5e-4);
    }
  }
  for (const auto& [payoff, values] : upper) {
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const ResultRow& row = find_row(table, payoff, scenarios[s], "upper");
      CHECK(row.status == "optimal");
      CHECK(std::fabs(row.value - values[s]) <= 5e-4);
    }
  }
}

TEST_CASE("infeasible scenario raises exit code 2 with a report") {
  // Digital price far above the survival band.
  ScenarioConfig config = parse_scenario_config(inline_square_config(
      R"({"label":"bad","digital_quotes":[{"i":0,"k":0,"l":1,"strike":1.5,"price":0.9}]})"));
  try {
    run_bounds(config);
    FAIL("expected RunError");
  } catch (const RunError& e) {
    CHECK(e.code() == RunExit::infeasible);
  }

  // Contradictory correlation pins: feasible band check kicks in.
  ScenarioConfig pins = parse_scenario_config(inline_square_config(
      R"({"label":"pins","correlation_pins":[
        {"i":0,"j":0,"k":0,"l":1,"rho":1},{"i":0,"j":0,"k":0,"l":1,"rho":-1}]})"));
  try {
    run_bounds(pins);
    FAIL("expected RunError");
  } catch (const RunError& e) {
    CHECK(e.code() == RunExit::infeasible);
    CHECK(std::string(e.what()).find("INCONSISTENT") != std::string::npos);
  }
}

TEST_CASE("correlation sweep") {
  std::string config_text = R"({
    "name": "sweep",
    "marginals": {"source": "inline", "maturities": 2, "assets": 2,
      "spots": [10, 10],
      "atoms": [[8,10,12],[8,10,12],[7,9,11,13],[4,7,10,13,16]]},
    "payoffs": [
      {"label":"c3","kind":"avg_basket","coords":[[0,0],[1,0],[0,1],[1,1]],"strike":10}
    ],
    "sweep": {"k":0,"l":1,"maturities":[0,1],
      "rho_values":[[-1,-0.5,0,0.5,1],[-1,-0.5,0,0.5,1]]}
  })";
  ScenarioConfig config = parse_scenario_config(config_text);
  ResultTable table = run_sweep(config);
  REQUIRE(table.rows.size() == 50);  // 5x5 points, two sides

  std::size_t feasible = 0, infeasible = 0;
  std::map<std::string, std::pair<double, double>> by_point;
  for (const ResultRow& row : table.rows) {
    if (row.status == "infeasible") {
      ++infeasible;
      continue;
    }
    ++feasible;
    CHECK(row.status == "optimal");
    if (row.side == "lower") by_point[row.scenario].first = row.value;
    if (row.side == "upper") by_point[row.scenario].second = row.value;
  }
  CHECK(feasible > 0);
  CHECK(infeasible > 0);  // e.g. rho(t1)=1 with rho(t2)=-1 cannot be coupled
  for (const auto& [label, bounds] : by_point) {
    CHECK(bounds.first <= bounds.second + 1e-9);
  }

  SUBCASE("single-point sweep agrees with run_bounds under the same pins") {
    ScenarioConfig point = config;
    point.sweep->rho_values = {{0.0}, {0.25}};
    ResultTable swept = run_sweep(point);
    REQUIRE(swept.rows.size() == 2);

    ScenarioConfig pinned = config;
    pinned.sweep.reset();
    ConfigScenario sc;
    sc.dependence.label = "pinned";
    sc.dependence.correlation_pins = {{0, 0, 0, 1, 0.0}, {1, 1, 0, 1, 0.25}};
    pinned.scenarios.push_back(sc);
    ResultTable direct = run_bounds(pinned);
    CHECK(swept.rows[0].value ==
          doctest::Approx(find_row(direct, "c3", "pinned", "lower").value).epsilon(1e-8));
    CHECK(swept.rows[1].value ==
          doctest::Approx(find_row(direct, "c3", "pinned", "upper").value).epsilon(1e-8));
  }

  SUBCASE("empty feasible region is an error") {
    ScenarioConfig bad = config;
    bad.sweep->rho_values = {{1.0}, {-1.0}};
    try {
      run_sweep(bad);
      FAIL("expected RunError");
    } catch (const RunError& e) {
      CHECK(e.code() == RunExit::infeasible);
    }
  }
}

TEST_CASE("bs marginal pipeline") {
  std::string config_text = R"({
    "name": "bs",
    "marginals": {"source": "bs",
      "model": {"spots":[100,50],"vols":[0.2,0.3],
        "correlation":[[1,0.5],[0.5,1]],"maturities":[1,2]},
      "quantize_atoms": 20, "synthetic_strikes": 50}
  })";
  ScenarioConfig config = parse_scenario_config(config_text);
  PipelineOutput out = run_marginal_pipeline(config);
  REQUIRE(out.per_asset.size() == 2);
  const std::vector<double> spots = {100.0, 50.0};
  for (std::size_t k = 0; k < 2; ++k) {
    REQUIRE(out.per_asset[k].size() == 2);
    CHECK(std::fabs(out.target_means[k] - spots[k]) <= 0.01 * spots[k]);
    for (const auto& [maturity, marginal] : out.per_asset[k]) {
      CHECK(marginal.size() <= 20);
      CHECK(std::fabs(marginal.mean() - out.target_means[k]) <= 1e-6 * spots[k]);
    }
    // Quantized laws keep the convex order established by equalization.
    CHECK(check_convex_order(out.per_asset[k][0].second, out.per_asset[k][1].second, 1e-6)
              .pass);
  }
  // The same source assembles into a valid martingale system.
  MarginalSystem ms = build_marginal_system(config);
  CHECK(ms.maturities() == 2);
  CHECK(ms.assets() == 2);
}

TEST_CASE("quote file pipeline and convex order violation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "motb_scenario_test";
  fs::create_directories(dir);

  auto write_quotes = [&](const fs::path& path, const std::vector<double>& atoms1,
                          const std::vector<double>& atoms2) {
    auto call = [](const std::vector<double>& atoms, double strike) {
      double acc = 0.0;
      for (double a : atoms) acc += std::max(a - strike, 0.0);
      return acc / static_cast<double>(atoms.size());
    };
    std::ofstream out(path);
    out << "asset maturity_days type strike bid ask\n";
    out.precision(17);
    for (int strike = 4; strike <= 16; ++strike) {
      const double p1 = call(atoms1, strike);
      out << "0 365 C " << strike << " " << p1 << " " << p1 << "\n";
      const double p2 = call(atoms2, strike);
      out << "0 730 C " << strike << " " << p2 << " " << p2 << "\n";
    }
  };

  SUBCASE("discrete laws round-trip through cleaning and density extraction") {
    const fs::path file = dir / "good.txt";
    write_quotes(file, {6, 10, 14}, {5, 10, 15});
    ScenarioConfig config = parse_scenario_config(R"({
      "name": "quotes",
      "marginals": {"source": "quote_files", "files": [")" +
                                                  file.string() + R"("],
        "quantize_atoms": 3}
    })");
    PipelineOutput out = run_marginal_pipeline(config);
    REQUIRE(out.per_asset.size() == 1);
    REQUIRE(out.per_asset[0].size() == 2);
    CHECK(out.target_means[0] == doctest::Approx(10.0).epsilon(1e-9));
    // u_quantize(3) of the recovered uniform three-atom laws is the identity.
    CHECK(out.per_asset[0][0].second.atoms()[0] == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(out.per_asset[0][1].second.atoms()[2] == doctest::Approx(15.0).epsilon(1e-9));
  }

  SUBCASE("violated convex order is reported as an input error") {
    const fs::path file = dir / "bad.txt";
    write_quotes(file, {6, 10, 14}, {9, 10, 11});  // later maturity less dispersed
    ScenarioConfig config = parse_scenario_config(R"({
      "name": "quotes",
      "marginals": {"source": "quote_files", "files": [")" +
                                                  file.string() + R"("]}
    })");
    try {
      run_marginal_pipeline(config);
      FAIL("expected RunError");
    } catch (const RunError& e) {
      CHECK(e.code() == RunExit::input_error);
      CHECK(std::string(e.what()).find("convex order") != std::string::npos);
    }
  }

  SUBCASE("missing file names the parse stage") {
    ScenarioConfig config = parse_scenario_config(R"({
      "name": "quotes",
      "marginals": {"source": "quote_files", "files": ["/nonexistent/q.txt"]}
    })");
    try {
      run_marginal_pipeline(config);
      FAIL("expected RunError");
    } catch (const RunError& e) {
      CHECK(e.code() == RunExit::input_error);
      CHECK(std::string(e.what()).find("parse_quote_file") != std::string::npos);
    }
  }
}

TEST_CASE("bundled example42: orthant box tightens within the unconstrained bounds") {
  ScenarioConfig config = parse_scenario_config(bundled_config("example42"));
  ResultTable table = run_bounds(config);
  for (const std::string payoff : {"c1-K08", "c1-K10", "c1-K12"}) {
    const double lower_none = find_row(table, payoff, "1-none", "lower").value;
    const double upper_none = find_row(table, payoff, "1-none", "upper").value;
    const double lower_box = find_row(table, payoff, "2-uo-box", "lower").value;
    const double upper_box = find_row(table, payoff, "2-uo-box", "upper").value;
    CHECK(lower_box >= lower_none - 1e-9);
    CHECK(upper_box <= upper_none + 1e-9);
    // The LP under the box rows cannot beat the analytic min-option bound
    // derived from the same survival cap.
    const double analytic = find_row(table, payoff, "2-uo-box", "analytic_upper").value;
    CHECK(upper_box <= analytic + 1e-6);
  }
}

TEST_CASE("bundled example43: digital-implied basket bounds are ordered") {
  ScenarioConfig config = parse_scenario_config(bundled_config("example43"));
  ResultTable table = run_bounds(config);
  const std::vector<std::string> strikes = {"basket-K08.5", "basket-K09.0", "basket-K09.5",
                                            "basket-K10.0", "basket-K10.5"};
  const std::vector<std::string> rhos = {"rho=-1.0", "rho=-0.5", "rho=+0.0", "rho=+0.5"};
  for (const std::string& rho : rhos) {
    double previous = std::numeric_limits<double>::infinity();
    for (const std::string& payoff : strikes) {
      const double upper = find_row(table, payoff, rho, "upper").value;
      CHECK(upper <= previous + 1e-9);  // non-increasing in strike
      previous = upper;
      CHECK(upper <=
            find_row(table, payoff, rho, "analytic_upper").value + 1e-6);
    }
  }
  for (const std::string& payoff : strikes) {
    for (std::size_t r = 0; r + 1 < rhos.size(); ++r) {
      // More negative digital correlation means tighter upper bounds.
      CHECK(find_row(table, payoff, rhos[r], "upper").value <=
            find_row(table, payoff, rhos[r + 1], "upper").value + 1e-9);
    }
  }
}

TEST_CASE("validate_config summarizes and rejects") {
  ScenarioConfig good = parse_scenario_config(bundled_config("table1"));
  const std::string summary = validate_config(good);
  CHECK(summary.find("180 grid cells") != std::string::npos);
  CHECK(summary.find("scenario '2-const-corr'") != std::string::npos);

  ScenarioConfig bad = good;
  bad.grid_cap = 10;  // below the 180-cell grid
  CHECK_THROWS_AS(validate_config(bad), RunError);
}
