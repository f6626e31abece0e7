#include "motbounds/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace motb {

namespace {

ExprPtr make_node(Expr node) { return std::make_shared<const Expr>(std::move(node)); }

ExprPtr make_binary(Expr::Op op, ExprPtr a, ExprPtr b) {
  if (!a || !b) throw std::invalid_argument("expression node: null child");
  Expr e;
  e.op = op;
  e.a = std::move(a);
  e.b = std::move(b);
  return make_node(std::move(e));
}

void check_ref(const CoordinateRef& r, const JointGrid& grid) {
  if (r.maturity >= grid.maturities() || r.asset >= grid.assets()) {
    std::ostringstream os;
    os << "coordinate reference (" << r.maturity << ", " << r.asset
       << ") outside system with " << grid.maturities() << " maturities and " << grid.assets()
       << " assets";
    throw std::invalid_argument(os.str());
  }
}

void check_refs(const PayoffSpec& spec, const JointGrid& grid, std::size_t expected) {
  if (expected != 0 && spec.coords.size() != expected) {
    throw std::invalid_argument("payoff: wrong number of coordinate references");
  }
  if (spec.coords.empty() && spec.kind != PayoffSpec::Kind::custom) {
    throw std::invalid_argument("payoff: no coordinate references");
  }
  for (const auto& r : spec.coords) check_ref(r, grid);
}

double pos(double x) { return x > 0.0 ? x : 0.0; }

/// Dense normalized-product coefficient field between S_{t_i}^k and S_{t_j}^l:
/// (x_i^k x_j^l - S0^k S0^l) / (sigma_i^k sigma_j^l) per cell.
std::vector<double> normalized_product_field(const JointGrid& grid, const MarginalSystem& ms,
                                             std::size_t i, std::size_t j, std::size_t k,
                                             std::size_t l) {
  if (i >= ms.maturities() || j >= ms.maturities() || k >= ms.assets() || l >= ms.assets()) {
    throw std::invalid_argument("correlation constraint: index outside marginal system");
  }
  const double var1 = ms.marginal(i, k).variance();
  const double var2 = ms.marginal(j, l).variance();
  if (var1 <= 1e-14 || var2 <= 1e-14) {
    throw std::domain_error("correlation constraint: zero-variance marginal");
  }
  const double scale = std::sqrt(var1) * std::sqrt(var2);
  const double product0 = ms.spot(k) * ms.spot(l);
  std::vector<double> field(grid.cells());
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    field[c] = (grid.coordinate(c, i, k) * grid.coordinate(c, j, l) - product0) / scale;
  }
  return field;
}

std::vector<std::pair<std::size_t, double>> sparsify(const std::vector<double>& field) {
  std::vector<std::pair<std::size_t, double>> coeffs;
  for (std::size_t c = 0; c < field.size(); ++c) {
    if (field[c] != 0.0) coeffs.emplace_back(c, field[c]);
  }
  return coeffs;
}

}  // namespace

ExprPtr Expr::constant(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("expression constant must be finite");
  Expr e;
  e.op = Op::constant;
  e.value = v;
  return make_node(std::move(e));
}

ExprPtr Expr::coordinate(std::size_t maturity, std::size_t asset) {
  Expr e;
  e.op = Op::coordinate;
  e.ref = CoordinateRef{maturity, asset};
  return make_node(std::move(e));
}

ExprPtr Expr::add(ExprPtr a, ExprPtr b) { return make_binary(Op::add, std::move(a), std::move(b)); }
ExprPtr Expr::sub(ExprPtr a, ExprPtr b) { return make_binary(Op::sub, std::move(a), std::move(b)); }
ExprPtr Expr::mul(ExprPtr a, ExprPtr b) { return make_binary(Op::mul, std::move(a), std::move(b)); }
ExprPtr Expr::div(ExprPtr a, ExprPtr b) { return make_binary(Op::div, std::move(a), std::move(b)); }
ExprPtr Expr::max(ExprPtr a, ExprPtr b) { return make_binary(Op::max, std::move(a), std::move(b)); }
ExprPtr Expr::min(ExprPtr a, ExprPtr b) { return make_binary(Op::min, std::move(a), std::move(b)); }

ExprPtr Expr::positive_part(ExprPtr a) {
  if (!a) throw std::invalid_argument("expression node: null child");
  Expr e;
  e.op = Op::positive_part;
  e.a = std::move(a);
  return make_node(std::move(e));
}

double Expr::eval(const JointGrid& grid, std::size_t cell) const {
  switch (op) {
    case Op::constant:
      return value;
    case Op::coordinate:
      check_ref(ref, grid);
      return grid.coordinate(cell, ref.maturity, ref.asset);
    case Op::add:
      return a->eval(grid, cell) + b->eval(grid, cell);
    case Op::sub:
      return a->eval(grid, cell) - b->eval(grid, cell);
    case Op::mul:
      return a->eval(grid, cell) * b->eval(grid, cell);
    case Op::div: {
      const double den = b->eval(grid, cell);
      if (den == 0.0) throw std::domain_error("payoff expression: division by zero on the grid");
      return a->eval(grid, cell) / den;
    }
    case Op::max:
      return std::max(a->eval(grid, cell), b->eval(grid, cell));
    case Op::min:
      return std::min(a->eval(grid, cell), b->eval(grid, cell));
    case Op::positive_part:
      return pos(a->eval(grid, cell));
  }
  throw std::logic_error("unknown expression node");
}

PayoffSpec PayoffSpec::basket_call(std::vector<CoordinateRef> coords, std::vector<double> weights,
                                   double strike) {
  if (coords.size() != weights.size() || coords.empty()) {
    throw std::invalid_argument("basket payoff: coords/weights size mismatch");
  }
  PayoffSpec s;
  s.kind = Kind::basket_call;
  s.coords = std::move(coords);
  s.weights = std::move(weights);
  s.strike = strike;
  return s;
}

PayoffSpec PayoffSpec::basket_put(std::vector<CoordinateRef> coords, std::vector<double> weights,
                                  double strike) {
  PayoffSpec s = basket_call(std::move(coords), std::move(weights), strike);
  s.kind = Kind::basket_put;
  return s;
}

PayoffSpec PayoffSpec::min_call(std::vector<CoordinateRef> coords, double strike) {
  if (coords.empty()) throw std::invalid_argument("min payoff: no coordinates");
  PayoffSpec s;
  s.kind = Kind::min_call;
  s.coords = std::move(coords);
  s.strike = strike;
  return s;
}

PayoffSpec PayoffSpec::min_put(std::vector<CoordinateRef> coords, double strike) {
  PayoffSpec s = min_call(std::move(coords), strike);
  s.kind = Kind::min_put;
  return s;
}

PayoffSpec PayoffSpec::avg_basket(std::vector<CoordinateRef> coords, double strike) {
  if (coords.empty()) throw std::invalid_argument("average basket: no coordinates");
  std::vector<double> w(coords.size(), 1.0 / static_cast<double>(coords.size()));
  PayoffSpec s = basket_call(std::move(coords), std::move(w), strike);
  s.kind = Kind::avg_basket;
  return s;
}

PayoffSpec PayoffSpec::spread_product(CoordinateRef c0, CoordinateRef c1, CoordinateRef c2,
                                      CoordinateRef c3, double factor) {
  PayoffSpec s;
  s.kind = Kind::spread_product;
  s.coords = {c0, c1, c2, c3};
  s.factor = factor;
  return s;
}

PayoffSpec PayoffSpec::squared_returns_product(CoordinateRef c0, CoordinateRef c1,
                                               CoordinateRef c2, CoordinateRef c3) {
  PayoffSpec s;
  s.kind = Kind::squared_returns_product;
  s.coords = {c0, c1, c2, c3};
  return s;
}

PayoffSpec PayoffSpec::digital_max_below(CoordinateRef c0, CoordinateRef c1, double strike) {
  PayoffSpec s;
  s.kind = Kind::digital_max_below;
  s.coords = {c0, c1};
  s.strike = strike;
  return s;
}

PayoffSpec PayoffSpec::custom(ExprPtr expression) {
  if (!expression) throw std::invalid_argument("custom payoff: null expression");
  PayoffSpec s;
  s.kind = Kind::custom;
  s.expression = std::move(expression);
  return s;
}

std::vector<double> evaluate_payoff(const PayoffSpec& spec, const JointGrid& grid) {
  std::vector<double> values(grid.cells());
  auto coord = [&grid, &spec](std::size_t cell, std::size_t idx) {
    const CoordinateRef& r = spec.coords[idx];
    return grid.coordinate(cell, r.maturity, r.asset);
  };
  switch (spec.kind) {
    case PayoffSpec::Kind::basket_call:
    case PayoffSpec::Kind::basket_put:
    case PayoffSpec::Kind::avg_basket: {
      check_refs(spec, grid, 0);
      if (spec.coords.size() != spec.weights.size()) {
        throw std::invalid_argument("basket payoff: coords/weights size mismatch");
      }
      const bool put = spec.kind == PayoffSpec::Kind::basket_put;
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        double sum = 0.0;
        for (std::size_t idx = 0; idx < spec.coords.size(); ++idx) {
          sum += spec.weights[idx] * coord(c, idx);
        }
        values[c] = put ? pos(spec.strike - sum) : pos(sum - spec.strike);
      }
      break;
    }
    case PayoffSpec::Kind::min_call:
    case PayoffSpec::Kind::min_put: {
      check_refs(spec, grid, 0);
      const bool put = spec.kind == PayoffSpec::Kind::min_put;
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t idx = 0; idx < spec.coords.size(); ++idx) {
          m = std::min(m, coord(c, idx));
        }
        values[c] = put ? pos(spec.strike - m) : pos(m - spec.strike);
      }
      break;
    }
    case PayoffSpec::Kind::spread_product: {
      check_refs(spec, grid, 4);
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        values[c] = spec.factor * pos(coord(c, 0) - coord(c, 1)) * pos(coord(c, 2) - coord(c, 3));
      }
      break;
    }
    case PayoffSpec::Kind::squared_returns_product: {
      check_refs(spec, grid, 4);
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        const double b0 = coord(c, 0);
        const double b1 = coord(c, 2);
        if (b0 == 0.0 || b1 == 0.0) {
          throw std::domain_error("squared-returns payoff: zero divisor atom on the grid");
        }
        const double r0 = (coord(c, 1) - b0) / b0;
        const double r1 = (coord(c, 3) - b1) / b1;
        values[c] = r0 * r0 * r1 * r1;
      }
      break;
    }
    case PayoffSpec::Kind::digital_max_below: {
      check_refs(spec, grid, 2);
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        values[c] = std::max(coord(c, 0), coord(c, 1)) <= spec.strike ? 1.0 : 0.0;
      }
      break;
    }
    case PayoffSpec::Kind::custom: {
      if (!spec.expression) throw std::invalid_argument("custom payoff: null expression");
      for (std::size_t c = 0; c < grid.cells(); ++c) {
        values[c] = spec.expression->eval(grid, c);
        if (!std::isfinite(values[c])) {
          throw std::domain_error("custom payoff: non-finite value on the grid");
        }
      }
      break;
    }
  }
  return values;
}

LinearConstraint correlation_eq_constraint(const JointGrid& grid, const MarginalSystem& ms,
                                           std::size_t i, std::size_t j, std::size_t k,
                                           std::size_t l, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw std::invalid_argument("correlation pin outside [-1, 1]");
  }
  LinearConstraint row;
  row.sense = LinearConstraint::Sense::eq;
  row.kind = LinearConstraint::Kind::extra;
  row.coefficients = sparsify(normalized_product_field(grid, ms, i, j, k, l));
  row.rhs = rho;
  std::ostringstream os;
  os << "corr_eq[t" << i + 1 << "^a" << k + 1 << ", t" << j + 1 << "^a" << l + 1 << "] = " << rho;
  row.label = os.str();
  return row;
}

std::vector<LinearConstraint> constant_correlation_constraints(const JointGrid& grid,
                                                               const MarginalSystem& ms) {
  if (ms.assets() != 2) {
    throw std::invalid_argument(
        "constant-correlation constraints are formulated for two-asset systems only");
  }
  std::vector<LinearConstraint> rows;
  for (std::size_t i = 0; i < ms.maturities(); ++i) {
    for (std::size_t j = i + 1; j < ms.maturities(); ++j) {
      std::vector<double> field_i = normalized_product_field(grid, ms, i, i, 0, 1);
      const std::vector<double> field_j = normalized_product_field(grid, ms, j, j, 0, 1);
      for (std::size_t c = 0; c < field_i.size(); ++c) field_i[c] -= field_j[c];
      LinearConstraint row;
      row.sense = LinearConstraint::Sense::eq;
      row.kind = LinearConstraint::Kind::extra;
      row.coefficients = sparsify(field_i);
      row.rhs = 0.0;
      std::ostringstream os;
      os << "const_corr[t" << i + 1 << " = t" << j + 1 << "]";
      row.label = os.str();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<LinearConstraint> correlation_lb_constraints(const JointGrid& grid,
                                                         const MarginalSystem& ms,
                                                         const std::vector<double>& rho_lb) {
  if (ms.assets() != 2) {
    throw std::invalid_argument(
        "correlation lower-bound constraints are formulated for two-asset systems only");
  }
  if (rho_lb.size() != ms.maturities()) {
    throw std::invalid_argument("correlation lower bounds: one value per maturity required");
  }
  std::vector<LinearConstraint> rows;
  for (std::size_t i = 0; i < ms.maturities(); ++i) {
    if (!(rho_lb[i] >= -1.0 && rho_lb[i] <= 1.0)) {
      throw std::invalid_argument("correlation lower bound outside [-1, 1]");
    }
    std::vector<double> field = normalized_product_field(grid, ms, i, i, 0, 1);
    for (double& v : field) v = -v;
    LinearConstraint row;
    row.sense = LinearConstraint::Sense::le;
    row.kind = LinearConstraint::Kind::extra;
    row.coefficients = sparsify(field);
    row.rhs = -rho_lb[i];
    std::ostringstream os;
    os << "corr_lb[t" << i + 1 << "] >= " << rho_lb[i];
    row.label = os.str();
    rows.push_back(std::move(row));
  }
  return rows;
}

LinearConstraint basket_price_constraint(const JointGrid& grid, std::size_t i, std::size_t j,
                                         std::size_t k, std::size_t l, double a1, double a2,
                                         double strike, double price) {
  if (a1 * a2 == 0.0) throw std::invalid_argument("basket price constraint: zero basket weight");
  if (!(price >= 0.0)) throw std::invalid_argument("basket price constraint: negative price");
  if (i >= grid.maturities() || j >= grid.maturities() || k >= grid.assets() ||
      l >= grid.assets()) {
    throw std::invalid_argument("basket price constraint: index outside system");
  }
  LinearConstraint row;
  row.sense = LinearConstraint::Sense::eq;
  row.kind = LinearConstraint::Kind::extra;
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    const double v = pos(a1 * grid.coordinate(c, i, k) + a2 * grid.coordinate(c, j, l) - strike);
    if (v != 0.0) row.coefficients.emplace_back(c, v);
  }
  row.rhs = price;
  std::ostringstream os;
  os << "basket_price[" << a1 << "*S_t" << i + 1 << "^a" << k + 1 << " + " << a2 << "*S_t" << j + 1
     << "^a" << l + 1 << ", K=" << strike << "] = " << price;
  row.label = os.str();
  return row;
}

double implied_correlation_from_basket_curve(
    const MarginalSystem& ms, std::size_t i, std::size_t j, std::size_t k, std::size_t l,
    double a1, double a2, const std::vector<std::pair<double, double>>& curve) {
  if (a1 * a2 == 0.0) throw std::invalid_argument("implied correlation: zero basket weight");
  if (i >= ms.maturities() || j >= ms.maturities() || k >= ms.assets() || l >= ms.assets()) {
    throw std::invalid_argument("implied correlation: index outside marginal system");
  }
  if (curve.size() < 2) {
    throw std::invalid_argument("implied correlation: insufficient strike coverage");
  }
  std::vector<std::pair<double, double>> pts = curve;
  std::sort(pts.begin(), pts.end());
  for (std::size_t m = 0; m + 1 < pts.size(); ++m) {
    if (!(pts[m + 1].first > pts[m].first)) {
      throw std::invalid_argument("implied correlation: duplicate strikes");
    }
  }
  // Right slopes of the call curve; each equals F_Z(K_m) - 1 for Z the basket.
  const double slope_tol = 1e-9;
  std::vector<double> cdf(pts.size());
  double prev_slope = -1.0;
  for (std::size_t m = 0; m + 1 < pts.size(); ++m) {
    const double slope =
        (pts[m + 1].second - pts[m].second) / (pts[m + 1].first - pts[m].first);
    if (slope < prev_slope - slope_tol) {
      throw std::invalid_argument("implied correlation: price curve is not convex");
    }
    if (slope < -1.0 - slope_tol || slope > slope_tol) {
      throw std::invalid_argument("implied correlation: slope outside [-1, 0]");
    }
    prev_slope = slope;
    cdf[m] = std::clamp(1.0 + slope, 0.0, 1.0);
  }
  cdf.back() = 1.0;
  // Atom weights of the basket law from CDF jumps; the mean must reproduce
  // the forward a1*S0 + a2*S0, otherwise the curve misses part of the support.
  double mean = 0.0, second = 0.0, prev_cdf = 0.0;
  for (std::size_t m = 0; m < pts.size(); ++m) {
    const double w = cdf[m] - prev_cdf;
    prev_cdf = cdf[m];
    if (w < -1e-9) throw std::invalid_argument("implied correlation: decreasing recovered CDF");
    mean += w * pts[m].first;
    second += w * pts[m].first * pts[m].first;
  }
  const double forward = a1 * ms.spot(k) + a2 * ms.spot(l);
  const double scale = std::max({1.0, std::abs(forward), std::abs(pts.back().first)});
  if (std::abs(mean - forward) > 1e-7 * scale) {
    throw std::invalid_argument("implied correlation: insufficient strike coverage");
  }
  const DiscreteMarginal& mk = ms.marginal(i, k);
  const DiscreteMarginal& ml = ms.marginal(j, l);
  const double var1 = mk.variance();
  const double var2 = ml.variance();
  if (var1 <= 1e-14 || var2 <= 1e-14) {
    throw std::domain_error("implied correlation: zero-variance marginal");
  }
  const double cross =
      (second - a1 * a1 * mk.second_moment() - a2 * a2 * ml.second_moment()) / (2.0 * a1 * a2);
  return (cross - ms.spot(k) * ms.spot(l)) / (std::sqrt(var1) * std::sqrt(var2));
}

double digital_to_survival_value(double p, double fk_at_strike, double fl_at_strike) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("digital price outside [0, 1]");
  }
  if (!(fk_at_strike >= 0.0 && fk_at_strike <= 1.0) ||
      !(fl_at_strike >= 0.0 && fl_at_strike <= 1.0)) {
    throw std::invalid_argument("CDF value outside [0, 1]");
  }
  const double v = p + 1.0 - fk_at_strike - fl_at_strike;
  const double lo = std::max(0.0, 1.0 - fk_at_strike - fl_at_strike);
  const double hi = std::min(1.0 - fk_at_strike, 1.0 - fl_at_strike);
  const double tol = 1e-9;
  if (v < lo - tol || v > hi + tol) {
    std::ostringstream os;
    os << "digital quote inconsistent with marginals: survival value " << v
       << " outside the admissible band [" << lo << ", " << hi << "]";
    // domain_error: the quote is well-formed but inconsistent with the
    // marginals, i.e. an infeasibility rather than a malformed input.
    throw std::domain_error(os.str());
  }
  return v;
}

std::vector<LinearConstraint> copula_box_constraints(
    const JointGrid& grid, const MarginalSystem& ms, const QuasiCopula& lower,
    const QuasiCopula& upper, OrthantOrder order,
    const std::vector<std::vector<double>>& evaluation_points) {
  const std::size_t m = grid.axis_count();
  if (lower.dimension() != m || upper.dimension() != m) {
    throw std::invalid_argument("copula box: quasi-copula dimension must equal #maturities * #assets");
  }
  // Default evaluation points: the full product of atom supports, i.e. the
  // grid cells themselves. Discrete CDFs only move at these points.
  std::vector<std::vector<double>> points;
  const std::vector<std::vector<double>>* pts = &evaluation_points;
  if (evaluation_points.empty()) {
    points.reserve(grid.cells());
    for (std::size_t c = 0; c < grid.cells(); ++c) {
      std::vector<double> x(m);
      for (std::size_t i = 0; i < grid.maturities(); ++i) {
        for (std::size_t k = 0; k < grid.assets(); ++k) {
          x[grid.axis(i, k)] = grid.coordinate(c, i, k);
        }
      }
      points.push_back(std::move(x));
    }
    pts = &points;
  }
  const bool lower_order = order == OrthantOrder::lower;
  std::vector<LinearConstraint> rows;
  std::vector<double> u(m);
  for (const auto& x : *pts) {
    if (x.size() != m) {
      throw std::invalid_argument("copula box: evaluation point has wrong dimension");
    }
    for (std::size_t i = 0; i < grid.maturities(); ++i) {
      for (std::size_t k = 0; k < grid.assets(); ++k) {
        const std::size_t a = grid.axis(i, k);
        u[a] = ms.marginal(i, k).cdf(x[a]);
      }
    }
    // Lower order probes P(S <= x), upper order P(S > x); both pair exactly
    // with the (survival) copula at F(x).
    std::vector<std::pair<std::size_t, double>> inside;
    for (std::size_t c = 0; c < grid.cells(); ++c) {
      bool in = true;
      for (std::size_t a = 0; a < m && in; ++a) {
        const double s = grid.atoms(a)[grid.atom_index(c, a)];
        in = lower_order ? (s <= x[a]) : (s > x[a]);
      }
      if (in) inside.emplace_back(c, 1.0);
    }
    const double ub = lower_order ? upper(u) : upper.survival(u);
    const double lb = lower_order ? lower(u) : lower.survival(u);

    std::ostringstream tag;
    tag << (lower_order ? "lo" : "uo") << "_box(";
    for (std::size_t a = 0; a < m; ++a) tag << (a ? "," : "") << x[a];
    tag << ")";

    // P <= ub; rows that no mass vector can violate are dropped.
    if (ub < 1.0 && !inside.empty()) {
      LinearConstraint row;
      row.sense = LinearConstraint::Sense::le;
      row.kind = LinearConstraint::Kind::extra;
      row.coefficients = inside;
      row.rhs = ub;
      row.label = "upper_" + tag.str();
      rows.push_back(std::move(row));
    }
    // P >= lb, written as -P <= -lb. Kept even when the orthant is empty so
    // that an inconsistent box surfaces as infeasibility.
    if (lb > 0.0) {
      LinearConstraint row;
      row.sense = LinearConstraint::Sense::le;
      row.kind = LinearConstraint::Kind::extra;
      for (auto& [c, v] : inside) row.coefficients.emplace_back(c, -v);
      row.rhs = -lb;
      row.label = "lower_" + tag.str();
      rows.push_back(std::move(row));
    }
  }
  dedupe_constraints(rows);
  return rows;
}

std::vector<LinearConstraint> ccd_constraints(const JointGrid& grid, const MarginalSystem& ms,
                                              std::size_t maturity, const QuasiCopula& q2) {
  if (ms.assets() < 2) {
    throw std::invalid_argument("common-component constraints require at least two assets");
  }
  if (maturity >= ms.maturities()) {
    throw std::invalid_argument("common-component constraints: maturity outside system");
  }
  if (q2.dimension() != 2) {
    throw std::invalid_argument("common-component constraints: q2 must be bivariate");
  }
  std::vector<LinearConstraint> rows;
  const DiscreteMarginal& ref = ms.marginal(maturity, 0);
  for (std::size_t k = 1; k < ms.assets(); ++k) {
    const DiscreteMarginal& other = ms.marginal(maturity, k);
    for (double x : ref.atoms()) {
      for (double y : other.atoms()) {
        std::vector<std::pair<std::size_t, double>> coeffs;
        for (std::size_t c = 0; c < grid.cells(); ++c) {
          if (grid.coordinate(c, maturity, 0) <= x && grid.coordinate(c, maturity, k) <= y) {
            coeffs.emplace_back(c, 1.0);
          }
        }
        const double rhs = q2({ref.cdf(x), other.cdf(y)});
        if (rhs >= 1.0) continue;
        LinearConstraint row;
        row.sense = LinearConstraint::Sense::le;
        row.kind = LinearConstraint::Kind::extra;
        row.coefficients = std::move(coeffs);
        row.rhs = rhs;
        std::ostringstream os;
        os << "ccd[t" << maturity + 1 << ", a" << k + 1 << "](" << x << "," << y << ")";
        row.label = os.str();
        rows.push_back(std::move(row));
      }
    }
  }
  dedupe_constraints(rows);
  return rows;
}

std::vector<LinearConstraint> scenario_constraints(const JointGrid& grid,
                                                   const MarginalSystem& ms,
                                                   const DependenceScenario& scenario) {
  std::vector<LinearConstraint> rows;
  auto append = [&](std::vector<LinearConstraint> more) {
    for (LinearConstraint& r : more) rows.push_back(std::move(r));
  };

  for (const DependenceScenario::CorrelationPin& pin : scenario.correlation_pins) {
    rows.push_back(correlation_eq_constraint(grid, ms, pin.i, pin.j, pin.k, pin.l, pin.rho));
  }
  if (scenario.constant_correlation) append(constant_correlation_constraints(grid, ms));
  if (!scenario.correlation_lb.empty()) {
    append(correlation_lb_constraints(grid, ms, scenario.correlation_lb));
  }
  for (const DependenceScenario::BasketQuote& q : scenario.basket_quotes) {
    rows.push_back(
        basket_price_constraint(grid, q.i, q.j, q.k, q.l, q.a1, q.a2, q.strike, q.price));
  }
  for (const DependenceScenario::DigitalQuote& q : scenario.digital_quotes) {
    // Validates the quote against the survival band before pinning it.
    digital_to_survival_value(q.price, ms.marginal(q.i, q.k).cdf(q.strike),
                              ms.marginal(q.i, q.l).cdf(q.strike));
    PayoffSpec digital = PayoffSpec::digital_max_below({q.i, q.k}, {q.i, q.l}, q.strike);
    LinearConstraint row;
    row.sense = LinearConstraint::Sense::eq;
    row.kind = LinearConstraint::Kind::extra;
    std::vector<double> values = evaluate_payoff(digital, grid);
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (values[c] != 0.0) row.coefficients.emplace_back(c, values[c]);
    }
    row.rhs = q.price;
    std::ostringstream os;
    os << "digital[t" << q.i + 1 << ", a" << q.k + 1 << ", a" << q.l + 1 << "](" << q.strike
       << ") = " << q.price;
    row.label = os.str();
    rows.push_back(std::move(row));
  }
  if (scenario.copula_box) {
    const DependenceScenario::CopulaBox& box = *scenario.copula_box;
    const std::size_t m = grid.axis_count();
    const QuasiCopula lower = box.lower ? *box.lower : QuasiCopula::frechet_lower(m);
    const QuasiCopula upper = box.upper ? *box.upper : QuasiCopula::frechet_upper(m);
    append(copula_box_constraints(grid, ms, lower, upper, box.order, box.evaluation_points));
  }
  if (scenario.ccd) {
    append(ccd_constraints(grid, ms, scenario.ccd->maturity, scenario.ccd->q2));
  }
  dedupe_constraints(rows);
  return rows;
}

}  // namespace motb
