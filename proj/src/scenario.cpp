#include "motbounds/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "motbounds/normal.hpp"
#include "motbounds/quasi_expectation.hpp"

namespace motb {

namespace {

using nlohmann::json;

[[noreturn]] void input_error(const std::string& message) {
  throw RunError(RunExit::input_error, message);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON -> domain objects

CoordinateRef parse_coord(const json& j) {
  if (!j.is_array() || j.size() != 2) input_error("coordinate must be a pair [maturity, asset]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

std::vector<CoordinateRef> parse_coords(const json& j) {
  std::vector<CoordinateRef> coords;
  for (const json& c : j) coords.push_back(parse_coord(c));
  return coords;
}

ExprPtr parse_expr(const json& j) {
  const std::string op = j.at("op").get<std::string>();
  if (op == "const") return Expr::constant(j.at("value").get<double>());
  if (op == "coord") {
    return Expr::coordinate(j.at("i").get<std::size_t>(), j.at("k").get<std::size_t>());
  }
  if (op == "positive_part") return Expr::positive_part(parse_expr(j.at("a")));
  ExprPtr a = parse_expr(j.at("a"));
  ExprPtr b = parse_expr(j.at("b"));
  if (op == "add") return Expr::add(a, b);
  if (op == "sub") return Expr::sub(a, b);
  if (op == "mul") return Expr::mul(a, b);
  if (op == "div") return Expr::div(a, b);
  if (op == "max") return Expr::max(a, b);
  if (op == "min") return Expr::min(a, b);
  input_error("unknown expression op '" + op + "'");
}

LabeledPayoff parse_payoff(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  LabeledPayoff out;
  auto coords = [&] { return parse_coords(j.at("coords")); };
  auto strike = [&] { return j.at("strike").get<double>(); };
  if (kind == "basket_call" || kind == "basket_put") {
    std::vector<double> weights = j.at("weights").get<std::vector<double>>();
    out.spec = kind == "basket_call" ? PayoffSpec::basket_call(coords(), weights, strike())
                                     : PayoffSpec::basket_put(coords(), weights, strike());
  } else if (kind == "min_call") {
    out.spec = PayoffSpec::min_call(coords(), strike());
  } else if (kind == "min_put") {
    out.spec = PayoffSpec::min_put(coords(), strike());
  } else if (kind == "avg_basket") {
    out.spec = PayoffSpec::avg_basket(coords(), strike());
  } else if (kind == "spread_product") {
    std::vector<CoordinateRef> c = coords();
    if (c.size() != 4) input_error("spread_product needs 4 coordinates");
    out.spec = PayoffSpec::spread_product(c[0], c[1], c[2], c[3],
                                          j.value("factor", 1.0));
  } else if (kind == "squared_returns_product") {
    std::vector<CoordinateRef> c = coords();
    if (c.size() != 4) input_error("squared_returns_product needs 4 coordinates");
    out.spec = PayoffSpec::squared_returns_product(c[0], c[1], c[2], c[3]);
  } else if (kind == "digital_max_below") {
    std::vector<CoordinateRef> c = coords();
    if (c.size() != 2) input_error("digital_max_below needs 2 coordinates");
    out.spec = PayoffSpec::digital_max_below(c[0], c[1], strike());
  } else if (kind == "custom") {
    out.spec = PayoffSpec::custom(parse_expr(j.at("expression")));
  } else {
    input_error("unknown payoff kind '" + kind + "'");
  }
  out.label = j.value("label", kind);
  return out;
}

QuasiCopula parse_copula(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  auto dim = [&] { return j.at("m").get<std::size_t>(); };
  if (kind == "frechet_lower") return QuasiCopula::frechet_lower(dim());
  if (kind == "frechet_upper") return QuasiCopula::frechet_upper(dim());
  if (kind == "independence") return QuasiCopula::independence(dim());
  if (kind == "gaussian") return QuasiCopula::gaussian(j.at("rho").get<double>());
  if (kind == "transpose") return QuasiCopula::transpose(parse_copula(j.at("base")));
  if (kind == "reflected") return QuasiCopula::reflected(parse_copula(j.at("base")));
  if (kind == "qstar") return QuasiCopula::qstar(parse_copula(j.at("base")), dim());
  if (kind == "pointwise_max") {
    std::vector<QuasiCopula> members;
    for (const json& m : j.at("members")) members.push_back(parse_copula(m));
    return QuasiCopula::pointwise_max(std::move(members));
  }
  if (kind == "grid") {
    return QuasiCopula::grid_interpolated(dim(), j.at("n").get<std::size_t>(),
                                          j.at("values").get<std::vector<double>>());
  }
  if (kind == "improved_upper" || kind == "improved_lower") {
    std::vector<PrescribedSet::Point> points;
    for (const json& p : j.at("prescriptions")) {
      points.push_back({p.at("u").get<std::vector<double>>(), p.at("value").get<double>()});
    }
    auto bounds = improved_frechet_bounds(PrescribedSet(std::move(points), dim()), dim());
    return kind == "improved_upper" ? bounds.first : bounds.second;
  }
  input_error("unknown quasi-copula kind '" + kind + "'");
}

ConfigScenario parse_scenario(const json& j) {
  ConfigScenario sc;
  DependenceScenario& dep = sc.dependence;
  dep.label = j.value("label", std::string("scenario"));
  if (j.contains("correlation_pins")) {
    for (const json& p : j.at("correlation_pins")) {
      dep.correlation_pins.push_back({p.at("i").get<std::size_t>(), p.at("j").get<std::size_t>(),
                                      p.at("k").get<std::size_t>(), p.at("l").get<std::size_t>(),
                                      p.at("rho").get<double>()});
    }
  }
  dep.constant_correlation = j.value("constant_correlation", false);
  if (j.contains("correlation_lb")) {
    dep.correlation_lb = j.at("correlation_lb").get<std::vector<double>>();
  }
  if (j.contains("basket_quotes")) {
    for (const json& q : j.at("basket_quotes")) {
      dep.basket_quotes.push_back({q.at("i").get<std::size_t>(), q.at("j").get<std::size_t>(),
                                   q.at("k").get<std::size_t>(), q.at("l").get<std::size_t>(),
                                   q.at("a1").get<double>(), q.at("a2").get<double>(),
                                   q.at("strike").get<double>(), q.at("price").get<double>()});
    }
  }
  if (j.contains("digital_quotes")) {
    for (const json& q : j.at("digital_quotes")) {
      dep.digital_quotes.push_back({q.at("i").get<std::size_t>(), q.at("k").get<std::size_t>(),
                                    q.at("l").get<std::size_t>(), q.at("strike").get<double>(),
                                    q.at("price").get<double>()});
    }
  }
  if (j.contains("copula_box")) {
    const json& b = j.at("copula_box");
    DependenceScenario::CopulaBox box;
    const std::string order = b.value("order", std::string("lo"));
    if (order == "lo") {
      box.order = OrthantOrder::lower;
    } else if (order == "uo") {
      box.order = OrthantOrder::upper;
    } else {
      input_error("copula_box order must be 'lo' or 'uo'");
    }
    if (b.contains("lower")) box.lower = parse_copula(b.at("lower"));
    if (b.contains("upper")) box.upper = parse_copula(b.at("upper"));
    if (b.contains("evaluation_points")) {
      box.evaluation_points =
          b.at("evaluation_points").get<std::vector<std::vector<double>>>();
    }
    dep.copula_box = std::move(box);
  }
  if (j.contains("ccd")) {
    const json& c = j.at("ccd");
    dep.ccd = DependenceScenario::CcdSpec{c.at("maturity").get<std::size_t>(),
                                          parse_copula(c.at("q2"))};
  }
  if (j.contains("ccd_from_digitals")) {
    const json& c = j.at("ccd_from_digitals");
    sc.ccd_from_digitals =
        CcdFromDigitals{c.at("maturity").get<std::size_t>(),
                        c.at("strikes").get<std::vector<double>>(), c.at("rho").get<double>()};
  }
  return sc;
}

BSModelSpec parse_model(const json& j) {
  BSModelSpec model;
  model.spots = j.at("spots").get<std::vector<double>>();
  model.vols = j.at("vols").get<std::vector<double>>();
  model.correlation = j.at("correlation").get<std::vector<std::vector<double>>>();
  model.maturities = j.at("maturities").get<std::vector<double>>();
  return model;
}

MarginalSource parse_marginals(const json& j) {
  MarginalSource src;
  const std::string source = j.at("source").get<std::string>();
  src.quantize_atoms = j.value("quantize_atoms", std::size_t{20});
  if (source == "inline") {
    src.kind = MarginalSource::Kind::inline_atoms;
    src.maturities = j.at("maturities").get<std::size_t>();
    src.assets = j.at("assets").get<std::size_t>();
    src.atoms = j.at("atoms").get<std::vector<std::vector<double>>>();
    if (j.contains("weights")) {
      src.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    }
    src.spots = j.at("spots").get<std::vector<double>>();
  } else if (source == "quote_files") {
    src.kind = MarginalSource::Kind::quote_files;
    src.quote_files = j.at("files").get<std::vector<std::string>>();
  } else if (source == "bs") {
    src.kind = MarginalSource::Kind::bs_synthetic;
    src.model = parse_model(j.at("model"));
    src.synthetic_strikes = j.value("synthetic_strikes", std::size_t{50});
  } else {
    input_error("unknown marginals source '" + source + "'");
  }
  return src;
}

// ---------------------------------------------------------------------------
// Worker pool

void run_parallel(std::size_t task_count, std::size_t threads,
                  const std::function<void(std::size_t)>& task) {
  if (threads <= 1 || task_count <= 1) {
    for (std::size_t i = 0; i < task_count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  const std::size_t workers = std::min(threads, task_count);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= task_count || failed.load()) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::size_t resolve_threads(const ScenarioConfig& config) {
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("MOTB_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// ---------------------------------------------------------------------------
// Marginal system assembly

/// Snaps the residual quantization error in the mean onto the atoms, so the
/// martingale mean rows of the LP are exactly consistent with the marginal
/// rows.
DiscreteMarginal rescale_to_mean(const DiscreteMarginal& m, double target) {
  const double factor = target / m.mean();
  std::vector<double> atoms = m.atoms();
  for (double& a : atoms) a *= factor;
  return DiscreteMarginal(std::move(atoms), m.weights());
}

MarginalCdf bs_marginal(const BSModelSpec& model, std::size_t i, std::size_t k) {
  return MarginalCdf::continuous(
      [model, i, k](double x) { return bs_marginal_cdf(model, i, k, x); },
      [model, i, k](double u) { return bs_marginal_quantile(model, i, k, u); });
}

template <typename Fn>
auto with_stage(const char* stage, RunExit code, Fn&& fn) {
  try {
    return fn();
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    throw RunError(code, std::string(stage) + ": " + e.what());
  }
}

std::string feasibility_report_text(const FeasibilityReport& report) {
  std::ostringstream os;
  for (const FeasibilityStep& step : report.steps) {
    os << (step.consistent ? "consistent " : "INCONSISTENT ") << step.label << ": rhs "
       << format_number(step.rhs) << " vs admissible [" << format_number(step.admissible_lo)
       << ", " << format_number(step.admissible_hi) << "]\n";
  }
  return os.str();
}

DependenceScenario materialize(const ScenarioConfig& config, const ConfigScenario& scenario) {
  DependenceScenario dep = scenario.dependence;
  if (scenario.ccd_from_digitals) {
    if (config.marginals.kind != MarginalSource::Kind::bs_synthetic) {
      input_error("ccd_from_digitals requires a bs marginal source");
    }
    const CcdFromDigitals& blk = *scenario.ccd_from_digitals;
    dep.ccd = DependenceScenario::CcdSpec{
        blk.maturity,
        q2_from_digital_prescriptions(config.marginals.model, blk.maturity, blk.strikes,
                                      blk.rho)};
  }
  return dep;
}

struct AnalyticRow {
  std::string side;
  double value;
};

/// Analytic companion bounds for scenarios carrying a dependence-functional
/// block: basket payoffs against a CCD q2, min-calls against an upper-orthant
/// survival bound covering all axes.
std::vector<AnalyticRow> analytic_bounds(const MarginalSystem& ms, const DependenceScenario& dep,
                                         const PayoffSpec& payoff) {
  std::vector<AnalyticRow> rows;
  const bool basket_like = payoff.kind == PayoffSpec::Kind::basket_call ||
                           payoff.kind == PayoffSpec::Kind::basket_put ||
                           payoff.kind == PayoffSpec::Kind::avg_basket;
  if (dep.ccd && basket_like) {
    const std::size_t maturity = dep.ccd->maturity;
    bool same_maturity = !payoff.coords.empty();
    for (const CoordinateRef& c : payoff.coords) same_maturity &= c.maturity == maturity;
    if (same_maturity) {
      std::vector<double> alpha = payoff.weights;
      if (alpha.empty()) {
        alpha.assign(payoff.coords.size(), 1.0 / static_cast<double>(payoff.coords.size()));
      }
      std::vector<MarginalCdf> marginals;
      for (const CoordinateRef& c : payoff.coords) {
        marginals.push_back(MarginalCdf::discrete(ms.marginal(maturity, c.asset)));
      }
      const OptionSide side =
          payoff.kind == PayoffSpec::Kind::basket_put ? OptionSide::put : OptionSide::call;
      rows.push_back({"analytic_upper", basket_ccd_bound(alpha, payoff.strike, marginals,
                                                         dep.ccd->q2, side)
                                            .value});
    }
  }
  if (dep.copula_box && dep.copula_box->order == OrthantOrder::upper &&
      dep.copula_box->upper && payoff.kind == PayoffSpec::Kind::min_call &&
      ms.maturities() == 1 && payoff.coords.size() == dep.copula_box->upper->dimension() &&
      payoff.coords.size() == ms.assets()) {
    std::vector<MarginalCdf> marginals;
    for (const CoordinateRef& c : payoff.coords) {
      marginals.push_back(MarginalCdf::discrete(ms.marginal(0, c.asset)));
    }
    rows.push_back({"analytic_upper", min_option_bound(*dep.copula_box->upper, marginals,
                                                       payoff.strike, OptionSide::call)});
  }
  return rows;
}

void sort_rows(ResultTable& table) {
  std::sort(table.rows.begin(), table.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.payoff, a.scenario, a.side) < std::tie(b.payoff, b.scenario, b.side);
  });
}

std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Bundled configs

const std::map<std::string, std::string>& bundled_configs() {
  static const std::map<std::string, std::string> configs = {
      {"table1", R"json({
  "name": "table1",
  "marginals": {"source": "inline", "maturities": 2, "assets": 2,
    "spots": [10, 10],
    "atoms": [[8,10,12],[8,10,12],[7,9,11,13],[4,7,10,13,16]]},
  "payoffs": [
    {"label":"c3","kind":"avg_basket","coords":[[0,0],[1,0],[0,1],[1,1]],"strike":10},
    {"label":"c4","kind":"min_put","coords":[[0,0],[1,0],[0,1],[1,1]],"strike":10},
    {"label":"c5","kind":"spread_product","coords":[[1,1],[1,0],[0,1],[0,0]],"factor":0.25},
    {"label":"c6","kind":"squared_returns_product","coords":[[0,0],[1,0],[0,1],[1,1]]}
  ],
  "scenarios": [
    {"label":"1-none"},
    {"label":"2-const-corr","constant_correlation":true},
    {"label":"3-corr-lb-neg0.5","correlation_lb":[-0.5,-1]},
    {"label":"4-corr-lb-pos0.5","correlation_lb":[0.5,-1]},
    {"label":"5-const-corr-lb-neg0.5","constant_correlation":true,"correlation_lb":[-0.5,-1]},
    {"label":"6-const-corr-lb-pos0.5","constant_correlation":true,"correlation_lb":[0.5,-1]}
  ]
})json"},
      {"example42", R"json({
  "name": "example42",
  "marginals": {"source": "bs",
    "model": {"spots":[9,10,11],"vols":[0.5,0.5,0.5],
      "correlation":[[1,0.8,0.8],[0.8,1,0.8],[0.8,0.8,1]],"maturities":[2]},
    "quantize_atoms": 5},
  "payoffs": [
    {"label":"c1-K08","kind":"min_call","coords":[[0,0],[0,1],[0,2]],"strike":8},
    {"label":"c1-K10","kind":"min_call","coords":[[0,0],[0,1],[0,2]],"strike":10},
    {"label":"c1-K12","kind":"min_call","coords":[[0,0],[0,1],[0,2]],"strike":12}
  ],
  "scenarios": [
    {"label":"1-none"},
    {"label":"2-uo-box","copula_box":{"order":"uo",
      "upper":{"kind":"qstar","m":3,"base":{"kind":"gaussian","rho":0.8}}}}
  ]
})json"},
      {"example43", R"json({
  "name": "example43",
  "marginals": {"source": "bs",
    "model": {"spots":[10,9,11],"vols":[1,1,1],
      "correlation":[[1,0,0],[0,1,0],[0,0,1]],"maturities":[1]},
    "quantize_atoms": 5},
  "payoffs": [
    {"label":"basket-K08.5","kind":"avg_basket","coords":[[0,0],[0,1],[0,2]],"strike":8.5},
    {"label":"basket-K09.0","kind":"avg_basket","coords":[[0,0],[0,1],[0,2]],"strike":9},
    {"label":"basket-K09.5","kind":"avg_basket","coords":[[0,0],[0,1],[0,2]],"strike":9.5},
    {"label":"basket-K10.0","kind":"avg_basket","coords":[[0,0],[0,1],[0,2]],"strike":10},
    {"label":"basket-K10.5","kind":"avg_basket","coords":[[0,0],[0,1],[0,2]],"strike":10.5}
  ],
  "scenarios": [
    {"label":"rho=-1.0","ccd_from_digitals":{"maturity":0,"strikes":[8.5,9,9.5,10,10.5],"rho":-1}},
    {"label":"rho=-0.5","ccd_from_digitals":{"maturity":0,"strikes":[8.5,9,9.5,10,10.5],"rho":-0.5}},
    {"label":"rho=+0.0","ccd_from_digitals":{"maturity":0,"strikes":[8.5,9,9.5,10,10.5],"rho":0}},
    {"label":"rho=+0.5","ccd_from_digitals":{"maturity":0,"strikes":[8.5,9,9.5,10,10.5],"rho":0.5}}
  ]
})json"}};
  return configs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

ScenarioConfig parse_scenario_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    input_error(std::string("config parse: ") + e.what());
  }
  try {
    ScenarioConfig config;
    config.name = doc.value("name", std::string("scenario"));
    config.marginals = parse_marginals(doc.at("marginals"));
    if (doc.contains("payoffs")) {
      for (const json& p : doc.at("payoffs")) config.payoffs.push_back(parse_payoff(p));
    }
    if (doc.contains("scenarios")) {
      for (const json& s : doc.at("scenarios")) config.scenarios.push_back(parse_scenario(s));
    }
    const std::string sides = doc.value("sides", std::string("both"));
    if (sides == "both") {
      config.sides = ScenarioConfig::Sides::both;
    } else if (sides == "lower") {
      config.sides = ScenarioConfig::Sides::lower;
    } else if (sides == "upper") {
      config.sides = ScenarioConfig::Sides::upper;
    } else {
      input_error("sides must be lower|upper|both");
    }
    config.grid_cap = doc.value("grid_cap", std::size_t{5000000});
    config.threads = doc.value("threads", std::size_t{0});
    config.report_timing = doc.value("report_timing", false);
    config.out_path = doc.value("out", std::string());
    if (doc.contains("tol")) {
      config.lp_options.feasibility_tol = doc.at("tol").get<double>();
    }
    if (doc.contains("sweep")) {
      const json& s = doc.at("sweep");
      SweepAxes sweep;
      sweep.k = s.value("k", std::size_t{0});
      sweep.l = s.value("l", std::size_t{1});
      sweep.maturities = s.at("maturities").get<std::vector<std::size_t>>();
      sweep.rho_values = s.at("rho_values").get<std::vector<std::vector<double>>>();
      if (sweep.maturities.size() != sweep.rho_values.size()) {
        input_error("sweep: maturities and rho_values must align");
      }
      for (const auto& axis : sweep.rho_values) {
        if (axis.empty()) input_error("sweep: empty rho axis");
        for (double r : axis) {
          if (!std::isfinite(r)) input_error("sweep: non-finite rho value");
        }
      }
      config.sweep = std::move(sweep);
    }
    return config;
  } catch (const json::exception& e) {
    input_error(std::string("config schema: ") + e.what());
  }
}

const std::string& bundled_config(const std::string& name) {
  const auto& configs = bundled_configs();
  auto it = configs.find(name);
  if (it == configs.end()) input_error("unknown bundled config '" + name + "'");
  return it->second;
}

std::vector<std::string> bundled_config_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : bundled_configs()) names.push_back(name);
  return names;
}

ScenarioConfig load_scenario_config(const std::string& path_or_name) {
  std::ifstream in(path_or_name);
  if (!in) {
    if (bundled_configs().count(path_or_name)) {
      return parse_scenario_config(bundled_config(path_or_name));
    }
    input_error("cannot open config '" + path_or_name + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_config(buffer.str());
}

// ---------------------------------------------------------------------------
// Marginal pipeline

PipelineOutput run_marginal_pipeline(const ScenarioConfig& config) {
  const MarginalSource& src = config.marginals;
  PipelineOutput out;
  std::ostringstream diag;

  if (src.kind == MarginalSource::Kind::inline_atoms) {
    MarginalSystem ms = with_stage("validate", RunExit::input_error, [&] {
      std::vector<DiscreteMarginal> marginals;
      for (std::size_t a = 0; a < src.atoms.size(); ++a) {
        if (a < src.weights.size() && !src.weights[a].empty()) {
          marginals.emplace_back(src.atoms[a], src.weights[a]);
        } else {
          marginals.push_back(uniform_atoms(src.atoms[a]));
        }
      }
      return MarginalSystem(src.maturities, src.assets, std::move(marginals), src.spots);
    });
    out.per_asset.resize(ms.assets());
    for (std::size_t k = 0; k < ms.assets(); ++k) {
      for (std::size_t i = 0; i < ms.maturities(); ++i) {
        out.per_asset[k].emplace_back(i + 1, ms.marginal(i, k));
      }
    }
    out.target_means = ms.spots();
    diag << "inline atoms: validated, passed through\n";
    out.diagnostics = diag.str();
    return out;
  }

  // Collect one call/put curve per (asset, maturity id).
  std::map<std::size_t, std::map<std::size_t, QuoteCurve>> curves;
  if (src.kind == MarginalSource::Kind::quote_files) {
    for (const std::string& path : src.quote_files) {
      std::vector<QuoteCurve> parsed = with_stage("parse_quote_file", RunExit::input_error, [&] {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open '" + path + "'");
        return parse_quote_file(in);
      });
      for (QuoteCurve& c : parsed) {
        if (c.type == QuoteType::digital_max) {
          diag << "skipping digital curve (dependence data, not a marginal)\n";
          continue;
        }
        curves[c.assets.at(0)].emplace(c.maturity, std::move(c));
      }
    }
  } else {
    with_stage("bs_synthesize", RunExit::input_error, [&] {
      src.model.validate();
      return 0;
    });
    const BSModelSpec& model = src.model;
    for (std::size_t k = 0; k < model.spots.size(); ++k) {
      for (std::size_t i = 0; i < model.maturities.size(); ++i) {
        QuoteCurve c;
        c.type = QuoteType::call;
        c.maturity = i + 1;
        c.assets = {k};
        const double k_lo = bs_marginal_quantile(model, i, k, 0.001);
        const double k_hi = bs_marginal_quantile(model, i, k, 0.999);
        const std::size_t n = std::max<std::size_t>(src.synthetic_strikes, 3);
        for (std::size_t s = 0; s < n; ++s) {
          const double strike = k_lo + (k_hi - k_lo) * static_cast<double>(s) /
                                           static_cast<double>(n - 1);
          const double mid = bs_call_price(model, i, k, strike);
          c.quotes.push_back({strike, mid, mid});
        }
        curves[k].emplace(c.maturity, std::move(c));
      }
    }
  }
  if (curves.empty()) input_error("no usable quote curves");

  for (auto& [asset, by_maturity] : curves) {
    std::vector<std::size_t> maturity_ids;
    std::vector<DiscreteMarginal> raw;
    for (auto& [maturity, curve] : by_maturity) {
      QuoteCurve cleaned = with_stage("clean_quotes", RunExit::input_error,
                                      [&] { return clean_quotes(curve); });
      std::vector<double> density = with_stage("breeden_litzenberger", RunExit::input_error,
                                               [&] { return breeden_litzenberger(cleaned); });
      std::vector<double> strikes;
      for (const Quote& q : cleaned.quotes) strikes.push_back(q.strike);
      raw.push_back(with_stage("marginal_from_density", RunExit::input_error,
                               [&] { return marginal_from_density(strikes, density); }));
      maturity_ids.push_back(maturity);
      diag << "asset " << asset << " maturity " << maturity << ": " << cleaned.quotes.size()
           << " quotes kept, mean " << format_number(raw.back().mean()) << "\n";
    }
    EqualizeResult eq = with_stage("equalize_means", RunExit::input_error,
                                   [&] { return equalize_means(raw); });
    if (!eq.convex_order_ok) {
      std::ostringstream os;
      os << "equalize_means: convex order violated for asset " << asset << ":\n";
      for (const ConvexOrderReport& r : eq.convex_order) {
        if (!r.pass) {
          os << "  worst margin " << format_number(r.worst_margin) << " at strike "
             << format_number(r.worst_strike) << ": " << r.message << "\n";
        }
      }
      throw RunError(RunExit::input_error, os.str());
    }
    diag << "asset " << asset << ": equalized to mean " << format_number(eq.target_mean)
         << "\n";
    std::vector<std::pair<std::size_t, DiscreteMarginal>> rows;
    for (std::size_t i = 0; i < eq.marginals.size(); ++i) {
      DiscreteMarginal quantized =
          with_stage("u_quantize", RunExit::numerical_failure, [&] {
            return rescale_to_mean(
                u_quantize(MarginalCdf::discrete(eq.marginals[i]), src.quantize_atoms),
                eq.target_mean);
          });
      rows.emplace_back(maturity_ids[i], std::move(quantized));
    }
    out.per_asset.push_back(std::move(rows));
    out.target_means.push_back(eq.target_mean);
  }
  out.diagnostics = diag.str();
  return out;
}

MarginalSystem build_marginal_system(const ScenarioConfig& config) {
  const MarginalSource& src = config.marginals;
  if (src.kind == MarginalSource::Kind::inline_atoms) {
    return with_stage("marginals", RunExit::input_error, [&] {
      std::vector<DiscreteMarginal> marginals;
      for (std::size_t a = 0; a < src.atoms.size(); ++a) {
        if (a < src.weights.size() && !src.weights[a].empty()) {
          marginals.emplace_back(src.atoms[a], src.weights[a]);
        } else {
          marginals.push_back(uniform_atoms(src.atoms[a]));
        }
      }
      return MarginalSystem(src.maturities, src.assets, std::move(marginals), src.spots);
    });
  }
  if (src.kind == MarginalSource::Kind::bs_synthetic) {
    return with_stage("marginals", RunExit::input_error, [&] {
      src.model.validate();
      const std::size_t n = src.model.maturities.size();
      const std::size_t d = src.model.spots.size();
      std::vector<DiscreteMarginal> marginals;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          marginals.push_back(rescale_to_mean(
              u_quantize(bs_marginal(src.model, i, k), src.quantize_atoms),
              src.model.spots[k]));
        }
      }
      return MarginalSystem(n, d, std::move(marginals), src.model.spots, 1e-9);
    });
  }
  PipelineOutput pipeline = run_marginal_pipeline(config);
  return with_stage("marginals", RunExit::input_error, [&] {
    const std::size_t d = pipeline.per_asset.size();
    const std::size_t n = pipeline.per_asset.front().size();
    for (const auto& rows : pipeline.per_asset) {
      if (rows.size() != n) {
        throw std::runtime_error("assets disagree on the number of maturities");
      }
    }
    std::vector<DiscreteMarginal> marginals;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) marginals.push_back(pipeline.per_asset[k][i].second);
    }
    return MarginalSystem(n, d, std::move(marginals), pipeline.target_means, 1e-9);
  });
}

// ---------------------------------------------------------------------------
// Bound runs

ResultTable run_bounds(const ScenarioConfig& config) {
  if (config.payoffs.empty()) input_error("run_bounds: no payoffs configured");
  MarginalSystem ms = build_marginal_system(config);
  JointGrid grid = with_stage("grid", RunExit::input_error,
                              [&] { return JointGrid(ms, config.grid_cap); });
  std::vector<LinearConstraint> base = marginal_constraints(grid, ms);
  {
    std::vector<LinearConstraint> mart = martingale_constraints(grid, ms);
    base.insert(base.end(), std::make_move_iterator(mart.begin()),
                std::make_move_iterator(mart.end()));
    dedupe_constraints(base);
  }

  std::vector<std::vector<double>> payoff_values;
  for (const LabeledPayoff& p : config.payoffs) {
    payoff_values.push_back(with_stage("payoff", RunExit::input_error,
                                       [&] { return evaluate_payoff(p.spec, grid); }));
  }

  struct Prepared {
    DependenceScenario dep;
    std::vector<LinearConstraint> constraints;  // base + extras
    std::vector<LinearConstraint> extras;
  };
  std::vector<Prepared> prepared;
  std::vector<ConfigScenario> scenarios = config.scenarios;
  if (scenarios.empty()) scenarios.push_back({});
  for (const ConfigScenario& sc : scenarios) {
    Prepared prep;
    try {
      prep.dep = materialize(config, sc);
      prep.extras = scenario_constraints(grid, ms, prep.dep);
    } catch (const RunError&) {
      throw;
    } catch (const std::domain_error& e) {
      throw RunError(RunExit::infeasible,
                     "scenario '" + sc.dependence.label + "': " + e.what());
    } catch (const std::exception& e) {
      input_error("scenario '" + sc.dependence.label + "': " + e.what());
    }
    prep.constraints = base;
    prep.constraints.insert(prep.constraints.end(), prep.extras.begin(), prep.extras.end());
    prepared.push_back(std::move(prep));
  }

  struct Task {
    std::size_t scenario, payoff;
    BoundResult result;
    double seconds = 0.0;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < prepared.size(); ++s) {
    for (std::size_t p = 0; p < payoff_values.size(); ++p) tasks.push_back({s, p, {}, 0.0});
  }
  run_parallel(tasks.size(), resolve_threads(config), [&](std::size_t t) {
    const auto start = std::chrono::steady_clock::now();
    tasks[t].result = solve_bounds(grid, payoff_values[tasks[t].payoff],
                                   prepared[tasks[t].scenario].constraints, config.lp_options);
    tasks[t].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count();
  });

  ResultTable table;
  for (const Task& t : tasks) {
    const Prepared& prep = prepared[t.scenario];
    const std::string& payoff_label = config.payoffs[t.payoff].label;
    const auto check = [&](const SideResult& side) {
      if (side.status == SolveStatus::infeasible) {
        FeasibilityReport report =
            feasibility_check(grid, base, prep.extras, config.lp_options);
        throw RunError(RunExit::infeasible, "scenario '" + prep.dep.label +
                                                "' infeasible:\n" +
                                                feasibility_report_text(report));
      }
      if (side.status != SolveStatus::optimal) {
        throw RunError(RunExit::numerical_failure,
                       "scenario '" + prep.dep.label + "', payoff '" + payoff_label +
                           "': " + to_string(side.status));
      }
    };
    const double seconds = config.report_timing ? t.seconds : 0.0;
    if (config.sides != ScenarioConfig::Sides::upper) {
      check(t.result.lower);
      table.rows.push_back({payoff_label, prep.dep.label, "lower", t.result.lower.value,
                            to_string(t.result.lower.status), seconds});
    }
    if (config.sides != ScenarioConfig::Sides::lower) {
      check(t.result.upper);
      table.rows.push_back({payoff_label, prep.dep.label, "upper", t.result.upper.value,
                            to_string(t.result.upper.status), seconds});
    }
    for (const AnalyticRow& a :
         analytic_bounds(ms, prep.dep, config.payoffs[t.payoff].spec)) {
      table.rows.push_back({payoff_label, prep.dep.label, a.side, a.value, "analytic", 0.0});
    }
  }
  sort_rows(table);
  return table;
}

ResultTable run_sweep(const ScenarioConfig& config) {
  if (!config.sweep) input_error("run_sweep: no sweep axes configured");
  if (config.payoffs.empty()) input_error("run_sweep: no payoffs configured");
  const SweepAxes& sweep = *config.sweep;
  MarginalSystem ms = build_marginal_system(config);
  if (sweep.k >= ms.assets() || sweep.l >= ms.assets() || sweep.k == sweep.l) {
    input_error("run_sweep: invalid asset pair");
  }
  for (std::size_t m : sweep.maturities) {
    if (m >= ms.maturities()) input_error("run_sweep: maturity index out of range");
  }
  JointGrid grid(ms, config.grid_cap);
  std::vector<LinearConstraint> base = marginal_constraints(grid, ms);
  {
    std::vector<LinearConstraint> mart = martingale_constraints(grid, ms);
    base.insert(base.end(), std::make_move_iterator(mart.begin()),
                std::make_move_iterator(mart.end()));
    dedupe_constraints(base);
  }
  std::vector<std::vector<double>> payoff_values;
  for (const LabeledPayoff& p : config.payoffs) {
    payoff_values.push_back(with_stage("payoff", RunExit::input_error,
                                       [&] { return evaluate_payoff(p.spec, grid); }));
  }

  // Cartesian product of the per-maturity rho lists.
  std::vector<std::vector<double>> points;
  {
    std::vector<double> current(sweep.maturities.size(), 0.0);
    std::function<void(std::size_t)> rec = [&](std::size_t axis) {
      if (axis == sweep.maturities.size()) {
        points.push_back(current);
        return;
      }
      for (double rho : sweep.rho_values[axis]) {
        current[axis] = rho;
        rec(axis + 1);
      }
    };
    rec(0);
  }

  struct PointResult {
    std::string label;
    bool feasible = true;
    std::vector<BoundResult> per_payoff;
    std::vector<double> seconds;
  };
  std::vector<PointResult> results(points.size());
  run_parallel(points.size(), resolve_threads(config), [&](std::size_t idx) {
    PointResult& out = results[idx];
    std::ostringstream label;
    std::vector<LinearConstraint> extras;
    for (std::size_t a = 0; a < sweep.maturities.size(); ++a) {
      const std::size_t maturity = sweep.maturities[a];
      if (a > 0) label << ";";
      label << "rho[t" << maturity + 1 << "]=" << format_number(points[idx][a]);
      extras.push_back(correlation_eq_constraint(grid, ms, maturity, maturity, sweep.k, sweep.l,
                                                 points[idx][a]));
    }
    out.label = label.str();
    FeasibilityReport report = feasibility_check(grid, base, extras, config.lp_options);
    if (!report.consistent) {
      out.feasible = false;
      return;
    }
    std::vector<LinearConstraint> constraints = base;
    constraints.insert(constraints.end(), extras.begin(), extras.end());
    for (const std::vector<double>& payoff : payoff_values) {
      const auto start = std::chrono::steady_clock::now();
      out.per_payoff.push_back(solve_bounds(grid, payoff, constraints, config.lp_options));
      out.seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  });

  bool any_feasible = false;
  ResultTable table;
  for (const PointResult& point : results) {
    for (std::size_t p = 0; p < config.payoffs.size(); ++p) {
      const std::string& payoff_label = config.payoffs[p].label;
      if (!point.feasible) {
        if (config.sides != ScenarioConfig::Sides::upper) {
          table.rows.push_back({payoff_label, point.label, "lower", 0.0, "infeasible", 0.0});
        }
        if (config.sides != ScenarioConfig::Sides::lower) {
          table.rows.push_back({payoff_label, point.label, "upper", 0.0, "infeasible", 0.0});
        }
        continue;
      }
      any_feasible = true;
      const BoundResult& r = point.per_payoff[p];
      const double seconds = config.report_timing ? point.seconds[p] : 0.0;
      if (r.lower.status != SolveStatus::optimal || r.upper.status != SolveStatus::optimal) {
        throw RunError(RunExit::numerical_failure,
                       "sweep point '" + point.label + "', payoff '" + payoff_label + "': " +
                           to_string(r.lower.status) + "/" + to_string(r.upper.status));
      }
      if (config.sides != ScenarioConfig::Sides::upper) {
        table.rows.push_back({payoff_label, point.label, "lower", r.lower.value,
                              to_string(r.lower.status), seconds});
      }
      if (config.sides != ScenarioConfig::Sides::lower) {
        table.rows.push_back({payoff_label, point.label, "upper", r.upper.value,
                              to_string(r.upper.status), seconds});
      }
    }
  }
  if (!any_feasible) {
    throw RunError(RunExit::infeasible, "run_sweep: empty feasible region");
  }
  sort_rows(table);
  return table;
}

std::string validate_config(const ScenarioConfig& config) {
  MarginalSystem ms = build_marginal_system(config);
  JointGrid grid = with_stage("grid", RunExit::input_error,
                              [&] { return JointGrid(ms, config.grid_cap); });
  std::ostringstream os;
  os << "marginal system: " << ms.maturities() << " maturities x " << ms.assets()
     << " assets, " << grid.cells() << " grid cells\n";
  for (const LabeledPayoff& p : config.payoffs) {
    with_stage("payoff", RunExit::input_error, [&] { return evaluate_payoff(p.spec, grid); });
    os << "payoff '" << p.label << "': ok\n";
  }
  for (const ConfigScenario& sc : config.scenarios) {
    std::vector<LinearConstraint> extras = with_stage("scenario", RunExit::input_error, [&] {
      return scenario_constraints(grid, ms, materialize(config, sc));
    });
    os << "scenario '" << sc.dependence.label << "': " << extras.size() << " rows\n";
  }
  if (config.sweep) {
    if (config.sweep->k >= ms.assets() || config.sweep->l >= ms.assets() ||
        config.sweep->k == config.sweep->l) {
      input_error("sweep: invalid asset pair");
    }
    os << "sweep: " << config.sweep->maturities.size() << " axes\n";
  }
  return os.str();
}

std::string to_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "payoff,scenario,side,value,status,seconds\n";
  for (const ResultRow& row : table.rows) {
    os << csv_safe(row.payoff) << "," << csv_safe(row.scenario) << "," << row.side << ","
       << format_number(row.value) << "," << row.status << "," << format_number(row.seconds)
       << "\n";
  }
  return os.str();
}

QuasiCopula q2_from_digital_prescriptions(const BSModelSpec& model, std::size_t maturity,
                                          const std::vector<double>& strikes, double rho) {
  if (maturity >= model.maturities.size()) {
    throw std::invalid_argument("q2_from_digital_prescriptions: maturity out of range");
  }
  if (strikes.empty()) {
    throw std::invalid_argument("q2_from_digital_prescriptions: no strikes");
  }
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw std::invalid_argument("q2_from_digital_prescriptions: rho outside [-1,1]");
  }
  const std::size_t d = model.spots.size();
  if (d < 2) throw std::invalid_argument("q2_from_digital_prescriptions: need >= 2 assets");
  const double t = model.maturities[maturity];
  auto z_of = [&](std::size_t k, double strike) {
    const double sig = model.vols[k];
    return (std::log(strike / model.spots[k]) + 0.5 * sig * sig * t) / (sig * std::sqrt(t));
  };
  // Per asset pair: pairwise digital prices become prescriptions for the
  // pair's survival copula; take the improved Frechet upper bound. The
  // pointwise maximum then dominates every pair, so its reflection is a
  // valid common-component q2. rho is a pairwise digital parameter here, not
  // a joint correlation matrix, so rho = -1 with three assets is allowed.
  std::vector<QuasiCopula> uppers;
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t l = k + 1; l < d; ++l) {
      std::vector<PrescribedSet::Point> points;
      for (double strike : strikes) {
        if (!(strike > 0.0)) {
          throw std::invalid_argument("q2_from_digital_prescriptions: strike must be positive");
        }
        const double zk = z_of(k, strike), zl = z_of(l, strike);
        const double fk = norm_cdf(zk), fl = norm_cdf(zl);
        const double p = bivariate_normal_cdf(zk, zl, rho);
        const double survival = digital_to_survival_value(p, fk, fl);
        points.push_back({{1.0 - fk, 1.0 - fl}, survival});
      }
      uppers.push_back(improved_frechet_bounds(PrescribedSet(std::move(points), 2), 2).first);
    }
  }
  return QuasiCopula::reflected(QuasiCopula::pointwise_max(std::move(uppers)));
}

}  // namespace motb
