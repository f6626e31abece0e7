#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/copula.hpp"
#include "motbounds/marginal.hpp"
#include "motbounds/mot_lp.hpp"

namespace motb {

/// Zero-based reference to an observation S_{t_i}^k on the joint grid.
struct CoordinateRef {
  std::size_t maturity = 0;
  std::size_t asset = 0;
};

/// Expression tree for custom payoffs over grid coordinates.
class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
 public:
  enum class Op { constant, coordinate, add, sub, mul, div, max, min, positive_part };

  static ExprPtr constant(double v);
  static ExprPtr coordinate(std::size_t maturity, std::size_t asset);
  static ExprPtr add(ExprPtr a, ExprPtr b);
  static ExprPtr sub(ExprPtr a, ExprPtr b);
  static ExprPtr mul(ExprPtr a, ExprPtr b);
  static ExprPtr div(ExprPtr a, ExprPtr b);
  static ExprPtr max(ExprPtr a, ExprPtr b);
  static ExprPtr min(ExprPtr a, ExprPtr b);
  static ExprPtr positive_part(ExprPtr a);

  double eval(const JointGrid& grid, std::size_t cell) const;

  Op op = Op::constant;
  double value = 0.0;
  CoordinateRef ref;
  ExprPtr a, b;
};

/// Declarative payoff description, evaluated exactly on every grid cell.
struct PayoffSpec {
  enum class Kind {
    basket_call,             // (sum_i w_i x_i - K)_+
    basket_put,              // (K - sum_i w_i x_i)_+
    min_call,                // (min_i x_i - K)_+
    min_put,                 // (K - min_i x_i)_+
    avg_basket,              // basket call with equal weights
    spread_product,          // f * (x0 - x1)_+ * (x2 - x3)_+
    squared_returns_product,  // ((x1-x0)/x0)^2 * ((x3-x2)/x2)^2
    digital_max_below,       // 1{max(x0, x1) <= K}
    custom
  };

  Kind kind = Kind::custom;
  std::vector<CoordinateRef> coords;
  std::vector<double> weights;
  double strike = 0.0;
  double factor = 1.0;
  ExprPtr expression;

  static PayoffSpec basket_call(std::vector<CoordinateRef> coords, std::vector<double> weights,
                                double strike);
  static PayoffSpec basket_put(std::vector<CoordinateRef> coords, std::vector<double> weights,
                               double strike);
  static PayoffSpec min_call(std::vector<CoordinateRef> coords, double strike);
  static PayoffSpec min_put(std::vector<CoordinateRef> coords, double strike);
  static PayoffSpec avg_basket(std::vector<CoordinateRef> coords, double strike);
  /// f * (x(c0) - x(c1))_+ * (x(c2) - x(c3))_+.
  static PayoffSpec spread_product(CoordinateRef c0, CoordinateRef c1, CoordinateRef c2,
                                   CoordinateRef c3, double factor);
  /// ((x(c1)-x(c0))/x(c0))^2 * ((x(c3)-x(c2))/x(c2))^2.
  static PayoffSpec squared_returns_product(CoordinateRef c0, CoordinateRef c1, CoordinateRef c2,
                                            CoordinateRef c3);
  static PayoffSpec digital_max_below(CoordinateRef c0, CoordinateRef c1, double strike);
  static PayoffSpec custom(ExprPtr expression);
};

/// Evaluates the payoff at every grid cell. Throws on unresolved coordinate
/// references or a zero divisor on the grid.
std::vector<double> evaluate_payoff(const PayoffSpec& spec, const JointGrid& grid);

/// Equality row pinning the risk-neutral correlation between S_{t_i}^k and
/// S_{t_j}^l: coefficients (x_i^k x_j^l - S0^k S0^l) / (sigma_i^k sigma_j^l),
/// right-hand side rho.
LinearConstraint correlation_eq_constraint(const JointGrid& grid, const MarginalSystem& ms,
                                           std::size_t i, std::size_t j, std::size_t k,
                                           std::size_t l, double rho);

/// Constant-correlation rows for a two-asset system: for every maturity pair
/// i < j, the normalized product fields at i and j must have equal
/// expectation (difference row, rhs 0).
std::vector<LinearConstraint> constant_correlation_constraints(const JointGrid& grid,
                                                               const MarginalSystem& ms);

/// Lower bounds on the per-maturity correlation of a two-asset system:
/// negated normalized-product rows with rhs -rho_lb[i].
std::vector<LinearConstraint> correlation_lb_constraints(const JointGrid& grid,
                                                         const MarginalSystem& ms,
                                                         const std::vector<double>& rho_lb);

/// Equality row matching a quoted basket option price:
/// coefficients (a1 x_i^k + a2 x_j^l - strike)_+, rhs = price.
LinearConstraint basket_price_constraint(const JointGrid& grid, std::size_t i, std::size_t j,
                                         std::size_t k, std::size_t l, double a1, double a2,
                                         double strike, double price);

/// Recovers the implied correlation between S_{t_i}^k and S_{t_j}^l from a
/// basket call price curve: differentiates the curve into the basket CDF,
/// reads off the second moment, and converts the cross moment into a
/// correlation. The curve must contain a strike at every achievable basket
/// value and one beyond.
double implied_correlation_from_basket_curve(const MarginalSystem& ms, std::size_t i,
                                             std::size_t j, std::size_t k, std::size_t l,
                                             double a1, double a2,
                                             const std::vector<std::pair<double, double>>& curve);

/// Price of a two-asset digital 1{max <= K'} plus the marginal terms:
/// returns p + 1 - Fk - Fl, the implied survival-function value. Throws when
/// the result leaves the bivariate survival band (inconsistent quote).
double digital_to_survival_value(double p, double fk_at_strike, double fl_at_strike);

enum class OrthantOrder { lower, upper };

/// Box constraints from quasi-copula bounds in lower- or upper-orthant
/// order, one pair of inequality rows per evaluation point:
///   lower order:  lower(F(x)) <= P(S <= x) <= upper(F(x))
///   upper order:  lower-survival(F(x)) <= P(S > x) <= upper-survival(F(x))
/// with F the right-continuous marginal CDFs. These indicator pairings are
/// exact for the coupling's (survival) copula at the image points
/// (P(S <= x) = C(F(x)), P(S > x) = C-survival(F(x))), so the countable
/// rational family of constraints collapses to them without slack.
/// Evaluation points default to the full product of atom supports (discrete
/// CDFs move nowhere else); a subset may be supplied to keep row counts
/// manageable on large grids.
std::vector<LinearConstraint> copula_box_constraints(
    const JointGrid& grid, const MarginalSystem& ms, const QuasiCopula& lower,
    const QuasiCopula& upper, OrthantOrder order,
    const std::vector<std::vector<double>>& evaluation_points = {});

/// Common-component rows at one maturity: for each non-reference asset k and
/// each atom pair (x, y) of (asset 1, asset k),
///   P(S_{t_i}^1 <= x, S_{t_i}^k <= y) <= q2(F_i^1(x), F_i^k(y)).
std::vector<LinearConstraint> ccd_constraints(const JointGrid& grid, const MarginalSystem& ms,
                                              std::size_t maturity, const QuasiCopula& q2);

/// One block of market-implied dependence information, turned into LP rows by
/// scenario_constraints. Every field is optional; an empty scenario yields no
/// rows (the unconstrained problem).
struct DependenceScenario {
  std::string label = "none";

  struct CorrelationPin {
    std::size_t i = 0, j = 0, k = 0, l = 0;
    double rho = 0.0;
  };
  std::vector<CorrelationPin> correlation_pins;

  bool constant_correlation = false;
  std::vector<double> correlation_lb;  // per maturity; empty = no bound

  struct BasketQuote {
    std::size_t i = 0, j = 0, k = 0, l = 0;
    double a1 = 0.0, a2 = 0.0, strike = 0.0, price = 0.0;
  };
  std::vector<BasketQuote> basket_quotes;

  /// Quoted two-asset digital 1{max(S_{t_i}^k, S_{t_i}^l) <= strike}; the
  /// price is validated against the survival band and pinned as an eq row.
  struct DigitalQuote {
    std::size_t i = 0, k = 0, l = 0;
    double strike = 0.0, price = 0.0;
  };
  std::vector<DigitalQuote> digital_quotes;

  struct CopulaBox {
    std::optional<QuasiCopula> lower;
    std::optional<QuasiCopula> upper;
    OrthantOrder order = OrthantOrder::lower;
    std::vector<std::vector<double>> evaluation_points;  // empty = full grid
  };
  std::optional<CopulaBox> copula_box;

  struct CcdSpec {
    std::size_t maturity = 0;
    QuasiCopula q2 = QuasiCopula::frechet_upper(2);
  };
  std::optional<CcdSpec> ccd;
};

/// Builds all LP rows declared by the scenario, in the field order above.
std::vector<LinearConstraint> scenario_constraints(const JointGrid& grid,
                                                   const MarginalSystem& ms,
                                                   const DependenceScenario& scenario);

}  // namespace motb
