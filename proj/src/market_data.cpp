#include "motbounds/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "motbounds/normal.hpp"

namespace motb {

namespace {

constexpr double kArbitrageTol = 1e-9;

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (std::size_t sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-18) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

// 128-point Gauss-Legendre nodes/weights on (-1, 1), computed once by Newton
// iteration on the Legendre polynomial.
struct GaussLegendre {
  std::vector<double> nodes, weights;
  explicit GaussLegendre(std::size_t n) : nodes(n), weights(n) {
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(M_PI * (static_cast<double>(i) + 0.75) /
                          (static_cast<double>(n) + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
          const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
          p0 = p1;
          p1 = pk;
        }
        dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      weights[i] = w;
      weights[n - 1 - i] = w;
    }
  }
};

const GaussLegendre& gl128() {
  static const GaussLegendre g(128);
  return g;
}

void check_bs_indices(const BSModelSpec& model, std::size_t i, std::size_t k) {
  if (i >= model.maturities.size() || k >= model.spots.size()) {
    throw std::invalid_argument("model reference (maturity, asset) out of range");
  }
}

double bs_z(const BSModelSpec& model, std::size_t i, std::size_t k, double strike) {
  const double t = model.maturities[i];
  const double sig = model.vols[k];
  return (std::log(strike / model.spots[k]) + 0.5 * sig * sig * t) / (sig * std::sqrt(t));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::string normalized = line;
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::istringstream is(normalized);
  std::vector<std::string> fields;
  std::string tok;
  while (is >> tok) fields.push_back(tok);
  return fields;
}

}  // namespace

void QuoteCurve::validate() const {
  const std::size_t expected_assets = type == QuoteType::digital_max ? 2 : 1;
  if (assets.size() != expected_assets) {
    throw std::invalid_argument("quote curve: wrong number of asset references");
  }
  for (std::size_t i = 0; i < quotes.size(); ++i) {
    const Quote& q = quotes[i];
    if (!(q.bid >= 0.0) || !(q.ask >= q.bid)) {
      throw std::invalid_argument("quote curve: requires 0 <= bid <= ask");
    }
    if (!(q.strike > 0.0) || !std::isfinite(q.strike)) {
      throw std::invalid_argument("quote curve: strikes must be positive and finite");
    }
    if (i > 0 && !(q.strike > quotes[i - 1].strike)) {
      throw std::invalid_argument("quote curve: strikes must be strictly increasing");
    }
  }
}

void BSModelSpec::validate() const {
  const std::size_t d = spots.size();
  if (d == 0 || vols.size() != d || correlation.size() != d) {
    throw std::invalid_argument("model: spots/vols/correlation size mismatch");
  }
  for (double s : spots) {
    if (!(s > 0.0)) throw std::invalid_argument("model: spots must be positive");
  }
  for (double v : vols) {
    if (!(v > 0.0)) throw std::invalid_argument("model: volatilities must be positive");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (correlation[i].size() != d) {
      throw std::invalid_argument("model: correlation matrix must be square");
    }
    if (std::fabs(correlation[i][i] - 1.0) > 1e-12) {
      throw std::invalid_argument("model: correlation diagonal must be 1");
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (std::fabs(correlation[i][j] - correlation[j][i]) > 1e-12) {
        throw std::invalid_argument("model: correlation matrix must be symmetric");
      }
      if (std::fabs(correlation[i][j]) > 1.0 + 1e-12) {
        throw std::invalid_argument("model: correlation entries must lie in [-1, 1]");
      }
    }
  }
  const std::vector<double> eig = symmetric_eigenvalues(correlation);
  for (double e : eig) {
    if (e < -1e-10) {
      throw std::invalid_argument("model: correlation matrix is not positive semidefinite");
    }
  }
  if (maturities.empty()) throw std::invalid_argument("model: no maturities");
  for (std::size_t i = 0; i < maturities.size(); ++i) {
    if (!(maturities[i] > 0.0) || (i > 0 && !(maturities[i] > maturities[i - 1]))) {
      throw std::invalid_argument("model: maturities must be positive and increasing");
    }
  }
}

QuoteCurve clean_quotes(const QuoteCurve& curve) {
  if (curve.type == QuoteType::digital_max) {
    throw std::invalid_argument("clean_quotes: defined for call and put curves");
  }
  curve.validate();
  if (curve.quotes.size() < 3) {
    throw std::invalid_argument("clean_quotes: at least 3 quotes required");
  }
  const bool call = curve.type == QuoteType::call;
  std::vector<Quote> q = curve.quotes;

  while (true) {
    const std::size_t n = q.size();
    std::vector<double> score(n, 0.0);
    bool violated = false;
    // Monotonicity: call mids non-increasing, put mids non-decreasing.
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double gap = call ? q[i + 1].mid() - q[i].mid() : q[i].mid() - q[i + 1].mid();
      if (gap > kArbitrageTol) {
        score[i] += gap;
        score[i + 1] += gap;
        violated = true;
      }
    }
    // Convexity (butterfly): slopes non-decreasing; blame the middle quote.
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double left = (q[i].mid() - q[i - 1].mid()) / (q[i].strike - q[i - 1].strike);
      const double right = (q[i + 1].mid() - q[i].mid()) / (q[i + 1].strike - q[i].strike);
      const double gap = left - right;
      if (gap > kArbitrageTol) {
        score[i] += gap;
        violated = true;
      }
    }
    if (!violated) break;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (score[i] > score[worst]) worst = i;  // ties keep the lowest strike
    }
    q.erase(q.begin() + static_cast<std::ptrdiff_t>(worst));
    if (q.size() < 3) {
      throw std::runtime_error("clean_quotes: fewer than 3 quotes survive cleaning");
    }
  }

  QuoteCurve out = curve;
  out.quotes = std::move(q);
  return out;
}

std::vector<double> breeden_litzenberger(const QuoteCurve& curve) {
  curve.validate();
  const std::size_t n = curve.quotes.size();
  if (n < 3) throw std::invalid_argument("density extraction: at least 3 quotes required");
  std::vector<double> density(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const double span = curve.quotes[j + 1].strike - curve.quotes[j - 1].strike;
    double p = (curve.quotes[j + 1].mid() - 2.0 * curve.quotes[j].mid() +
                curve.quotes[j - 1].mid()) /
               (span * span);
    if (p < -1e-12) {
      std::ostringstream os;
      os << "density extraction: negative density " << p << " at strike "
         << curve.quotes[j].strike << " (curve not cleaned?)";
      throw std::runtime_error(os.str());
    }
    density[j] = std::max(p, 0.0);
  }
  return density;
}

DiscreteMarginal marginal_from_density(const std::vector<double>& strikes,
                                       const std::vector<double>& densities) {
  if (strikes.size() != densities.size() || strikes.empty()) {
    throw std::invalid_argument("marginal: strikes/densities size mismatch");
  }
  double total = 0.0;
  for (double p : densities) {
    if (!(p >= 0.0)) throw std::invalid_argument("marginal: negative density");
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument("marginal: all densities are zero");
  std::vector<double> atoms, weights;
  for (std::size_t j = 0; j < strikes.size(); ++j) {
    if (densities[j] > 0.0) {
      atoms.push_back(strikes[j]);
      weights.push_back(densities[j] / total);
    }
  }
  return DiscreteMarginal(std::move(atoms), std::move(weights));
}

EqualizeResult equalize_means(const std::vector<DiscreteMarginal>& per_maturity,
                              std::optional<double> target) {
  if (per_maturity.empty()) throw std::invalid_argument("equalize_means: no marginals");
  double mean_of_means = 0.0;
  for (const DiscreteMarginal& m : per_maturity) {
    if (!(m.mean() > 0.0)) throw std::domain_error("equalize_means: non-positive mean");
    mean_of_means += m.mean();
  }
  mean_of_means /= static_cast<double>(per_maturity.size());

  EqualizeResult out;
  out.target_mean = target.value_or(mean_of_means);
  if (!(out.target_mean > 0.0)) throw std::invalid_argument("equalize_means: target must be > 0");
  for (const DiscreteMarginal& m : per_maturity) {
    const double scale = out.target_mean / m.mean();
    std::vector<double> atoms = m.atoms();
    for (double& a : atoms) a *= scale;
    out.marginals.emplace_back(std::move(atoms), m.weights());
  }
  for (std::size_t i = 0; i + 1 < out.marginals.size(); ++i) {
    out.convex_order.push_back(check_convex_order(out.marginals[i], out.marginals[i + 1]));
    out.convex_order_ok = out.convex_order_ok && out.convex_order.back().pass;
  }
  return out;
}

DiscreteMarginal u_quantize(const MarginalCdf& marginal, std::size_t n_atoms) {
  if (n_atoms == 0) throw std::invalid_argument("u_quantize: need at least one atom");
  const double n = static_cast<double>(n_atoms);
  std::vector<double> atoms(n_atoms, 0.0);

  if (marginal.is_discrete()) {
    // Exact conditional means: each atom contributes the overlap of its
    // cumulative-weight interval with the equal-probability bin.
    const DiscreteMarginal& m = marginal.as_discrete();
    std::vector<double> cum(m.size() + 1, 0.0);
    for (std::size_t a = 0; a < m.size(); ++a) cum[a + 1] = cum[a] + m.weights()[a];
    cum.back() = 1.0;
    for (std::size_t j = 0; j < n_atoms; ++j) {
      const double lo = static_cast<double>(j) / n;
      const double hi = (static_cast<double>(j) + 1.0) / n;
      double acc = 0.0;
      for (std::size_t a = 0; a < m.size(); ++a) {
        const double overlap = std::min(cum[a + 1], hi) - std::max(cum[a], lo);
        if (overlap > 0.0) acc += overlap * m.atoms()[a];
      }
      atoms[j] = n * acc;
    }
  } else {
    const GaussLegendre& gl = gl128();
    auto panel = [&](double a, double b) {
      const double half = 0.5 * (b - a), mid = 0.5 * (b + a);
      double acc = 0.0;
      for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double q = marginal.quantile(mid + half * gl.nodes[i]);
        if (!std::isfinite(q)) {
          throw std::domain_error("u_quantize: quantile integral diverges");
        }
        acc += gl.weights[i] * q;
      }
      return half * acc;
    };
    // Composite Gauss-Legendre with dyadic grading toward both bin endpoints:
    // the quantile derivative blows up near u = 0 and u = 1, and grading
    // everywhere is cheap and also absorbs interior kinks.
    constexpr int kLevels = 45;
    for (std::size_t j = 0; j < n_atoms; ++j) {
      const double lo = std::max(static_cast<double>(j) / n, 1e-14);
      const double hi = std::min((static_cast<double>(j) + 1.0) / n, 1.0 - 1e-14);
      const double mid = 0.5 * (lo + hi);
      double acc = 0.0;
      double edge = mid;
      for (int k = 1; k <= kLevels; ++k) {
        const double next = lo + (mid - lo) * std::ldexp(1.0, -k);
        acc += panel(next, edge);
        edge = next;
      }
      edge = mid;
      for (int k = 1; k <= kLevels; ++k) {
        const double next = hi - (hi - mid) * std::ldexp(1.0, -k);
        acc += panel(edge, next);
        edge = next;
      }
      atoms[j] = n * acc;
    }
  }

  // Merge duplicate atom values created by flat quantile stretches.
  std::vector<double> out_atoms, out_weights;
  for (std::size_t j = 0; j < n_atoms; ++j) {
    if (!out_atoms.empty() && atoms[j] - out_atoms.back() < 1e-12) {
      out_weights.back() += 1.0 / n;
    } else {
      out_atoms.push_back(atoms[j]);
      out_weights.push_back(1.0 / n);
    }
  }
  return DiscreteMarginal(std::move(out_atoms), std::move(out_weights));
}

double bs_digital_pair_price(const BSModelSpec& model, std::size_t i, std::size_t k,
                             std::size_t l, double strike) {
  model.validate();
  check_bs_indices(model, i, k);
  check_bs_indices(model, i, l);
  if (!(strike > 0.0)) throw std::invalid_argument("digital price: strike must be positive");
  return bivariate_normal_cdf(bs_z(model, i, k, strike), bs_z(model, i, l, strike),
                              model.correlation[k][l]);
}

double bs_marginal_cdf(const BSModelSpec& model, std::size_t i, std::size_t k, double x) {
  check_bs_indices(model, i, k);
  if (x <= 0.0) return 0.0;
  return norm_cdf(bs_z(model, i, k, x));
}

double bs_marginal_quantile(const BSModelSpec& model, std::size_t i, std::size_t k, double u) {
  check_bs_indices(model, i, k);
  const double t = model.maturities[i];
  const double sig = model.vols[k];
  return model.spots[k] * std::exp(-0.5 * sig * sig * t + sig * std::sqrt(t) * norm_quantile(u));
}

double bs_call_price(const BSModelSpec& model, std::size_t i, std::size_t k, double strike) {
  check_bs_indices(model, i, k);
  if (!(strike > 0.0)) return model.spots[k] - strike;
  const double t = model.maturities[i];
  const double sig = model.vols[k];
  const double s0 = model.spots[k];
  const double d1 = (std::log(s0 / strike) + 0.5 * sig * sig * t) / (sig * std::sqrt(t));
  const double d2 = d1 - sig * std::sqrt(t);
  return s0 * norm_cdf(d1) - strike * norm_cdf(d2);
}

std::vector<QuoteCurve> parse_quote_file(std::istream& in) {
  std::string line;
  bool header_seen = false;
  // (asset, maturity, type) -> quotes
  std::map<std::tuple<std::size_t, std::size_t, int>, std::vector<Quote>> groups;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const std::vector<std::string> fields = split_fields(body);
    if (!header_seen) {
      if (fields.size() != 6 || fields[0] != "asset") {
        throw std::invalid_argument(
            "quote file: expected header 'asset maturity_days type strike bid ask'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 6) {
      throw std::invalid_argument("quote file: row " + std::to_string(line_no) +
                                  " does not have 6 fields");
    }
    try {
      const std::size_t asset = std::stoul(fields[0]);
      const std::size_t maturity = std::stoul(fields[1]);
      int type;
      if (fields[2] == "C") {
        type = 0;
      } else if (fields[2] == "P") {
        type = 1;
      } else if (fields[2] == "DMAX") {
        type = 2;
      } else {
        throw std::invalid_argument("unknown option type " + fields[2]);
      }
      Quote q{std::stod(fields[3]), std::stod(fields[4]), std::stod(fields[5])};
      groups[{asset, maturity, type}].push_back(q);
    } catch (const std::exception& e) {
      throw std::invalid_argument("quote file: row " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  if (!header_seen) throw std::invalid_argument("quote file: empty input");

  std::vector<QuoteCurve> curves;
  for (auto& [key, quotes] : groups) {
    QuoteCurve c;
    c.assets = {std::get<0>(key)};
    c.maturity = std::get<1>(key);
    switch (std::get<2>(key)) {
      case 0: c.type = QuoteType::call; break;
      case 1: c.type = QuoteType::put; break;
      default:
        c.type = QuoteType::digital_max;
        c.assets.push_back(std::get<0>(key));  // pair encoding left to the caller
        break;
    }
    std::sort(quotes.begin(), quotes.end(),
              [](const Quote& a, const Quote& b) { return a.strike < b.strike; });
    c.quotes = std::move(quotes);
    c.validate();
    curves.push_back(std::move(c));
  }
  return curves;
}

void write_marginal_table(std::ostream& os,
                          const std::vector<std::pair<std::size_t, DiscreteMarginal>>& rows) {
  os << "maturity atom weight\n";
  os.precision(17);
  for (const auto& [maturity, m] : rows) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      os << maturity << ' ' << m.atoms()[j] << ' ' << m.weights()[j] << '\n';
    }
  }
}

std::vector<std::pair<std::size_t, DiscreteMarginal>> read_marginal_table(std::istream& in) {
  std::string line;
  bool header_seen = false;
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const std::vector<std::string> fields = split_fields(body);
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "maturity") {
        throw std::invalid_argument("marginal table: expected header 'maturity atom weight'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw std::invalid_argument("marginal table: row " + std::to_string(line_no) +
                                  " does not have 3 fields");
    }
    try {
      auto& [atoms, weights] = groups[std::stoul(fields[0])];
      atoms.push_back(std::stod(fields[1]));
      weights.push_back(std::stod(fields[2]));
    } catch (const std::exception& e) {
      throw std::invalid_argument("marginal table: row " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  if (!header_seen) throw std::invalid_argument("marginal table: empty input");
  std::vector<std::pair<std::size_t, DiscreteMarginal>> out;
  for (auto& [maturity, data] : groups) {
    out.emplace_back(maturity, DiscreteMarginal(std::move(data.first), std::move(data.second)));
  }
  return out;
}

}  // namespace motb
