#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "motbounds/copula.hpp"
#include "motbounds/dependence.hpp"
#include "motbounds/marginal.hpp"
#include "motbounds/mot_lp.hpp"
#include "motbounds/normal.hpp"
#include "motbounds/quasi_expectation.hpp"

using namespace motb;

namespace {

// Two assets, two maturities; spots 10.
MarginalSystem reference_system() {
  return MarginalSystem(2, 2,
                        {uniform_atoms({8.0, 10.0, 12.0}), uniform_atoms({8.0, 10.0, 12.0}),
                         uniform_atoms({7.0, 9.0, 11.0, 13.0}),
                         uniform_atoms({4.0, 7.0, 10.0, 13.0, 16.0})},
                        {10.0, 10.0});
}

std::vector<LinearConstraint> reference_constraints(const JointGrid& grid,
                                                    const MarginalSystem& ms) {
  auto rows = marginal_constraints(grid, ms);
  auto mart = martingale_constraints(grid, ms);
  rows.insert(rows.end(), mart.begin(), mart.end());
  return rows;
}

// One-maturity, two-asset system on 3x3 equal-weight atoms {1,2,3}.
MarginalSystem square_system() {
  return MarginalSystem(1, 2, {uniform_atoms({1.0, 2.0, 3.0}), uniform_atoms({1.0, 2.0, 3.0})},
                        {2.0, 2.0});
}

std::size_t find_cell(const JointGrid& grid, const std::vector<std::vector<double>>& coords) {
  // coords[i][k] = required value of S_{t_i}^k.
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    bool match = true;
    for (std::size_t i = 0; i < grid.maturities() && match; ++i) {
      for (std::size_t k = 0; k < grid.assets() && match; ++k) {
        match = grid.coordinate(c, i, k) == coords[i][k];
      }
    }
    if (match) return c;
  }
  REQUIRE(false);
  return 0;
}

double coefficient_at(const LinearConstraint& row, std::size_t cell) {
  for (const auto& [c, v] : row.coefficients) {
    if (c == cell) return v;
  }
  return 0.0;
}

std::vector<double> dense_row(const LinearConstraint& row, std::size_t n) {
  std::vector<double> f(n, 0.0);
  for (const auto& [c, v] : row.coefficients) f[c] = v;
  return f;
}

// The four reference payoffs over (S_t1^1, S_t2^1, S_t1^2, S_t2^2).
PayoffSpec payoff_c3() {
  return PayoffSpec::avg_basket({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, 10.0);
}
PayoffSpec payoff_c4() {
  return PayoffSpec::min_put({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, 10.0);
}
PayoffSpec payoff_c5() {
  return PayoffSpec::spread_product({1, 1}, {1, 0}, {0, 1}, {0, 0}, 0.25);
}
PayoffSpec payoff_c6() {
  return PayoffSpec::squared_returns_product({0, 0}, {1, 0}, {0, 1}, {1, 1});
}

}  // namespace

TEST_CASE("payoff evaluation: reference cells and every kind") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);

  const std::size_t low_cell = find_cell(grid, {{8.0, 8.0}, {7.0, 4.0}});
  CHECK(evaluate_payoff(payoff_c3(), grid)[low_cell] == doctest::Approx(0.0));
  CHECK(evaluate_payoff(payoff_c4(), grid)[low_cell] == doctest::Approx(6.0));

  const std::size_t c6_cell = find_cell(grid, {{10.0, 10.0}, {11.0, 13.0}});
  CHECK(evaluate_payoff(payoff_c6(), grid)[c6_cell] == doctest::Approx(0.0009));

  // Spread product at a cell with both spreads positive:
  // 0.25 * (16 - 13)_+ * (12 - 8)_+ = 3.
  const std::size_t c5_cell = find_cell(grid, {{8.0, 12.0}, {13.0, 16.0}});
  CHECK(evaluate_payoff(payoff_c5(), grid)[c5_cell] == doctest::Approx(3.0));

  auto basket = evaluate_payoff(
      PayoffSpec::basket_call({{0, 0}, {0, 1}}, {0.5, 0.5}, 9.0), grid);
  auto bput = evaluate_payoff(PayoffSpec::basket_put({{0, 0}, {0, 1}}, {0.5, 0.5}, 11.0), grid);
  auto mcall = evaluate_payoff(PayoffSpec::min_call({{1, 0}, {1, 1}}, 9.0), grid);
  auto digital = evaluate_payoff(PayoffSpec::digital_max_below({1, 0}, {1, 1}, 10.0), grid);
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    const double x1 = grid.coordinate(c, 0, 0), x2 = grid.coordinate(c, 0, 1);
    const double y1 = grid.coordinate(c, 1, 0), y2 = grid.coordinate(c, 1, 1);
    CHECK(basket[c] == doctest::Approx(std::max(0.5 * (x1 + x2) - 9.0, 0.0)));
    CHECK(bput[c] == doctest::Approx(std::max(11.0 - 0.5 * (x1 + x2), 0.0)));
    CHECK(mcall[c] == doctest::Approx(std::max(std::min(y1, y2) - 9.0, 0.0)));
    CHECK(digital[c] == (std::max(y1, y2) <= 10.0 ? 1.0 : 0.0));
  }

  // Custom expression replicating the average basket payoff.
  ExprPtr sum = Expr::add(Expr::add(Expr::coordinate(0, 0), Expr::coordinate(1, 0)),
                          Expr::add(Expr::coordinate(0, 1), Expr::coordinate(1, 1)));
  ExprPtr avg = Expr::mul(Expr::constant(0.25), sum);
  ExprPtr expr = Expr::positive_part(Expr::sub(avg, Expr::constant(10.0)));
  auto custom = evaluate_payoff(PayoffSpec::custom(expr), grid);
  auto direct = evaluate_payoff(payoff_c3(), grid);
  for (std::size_t c = 0; c < grid.cells(); ++c) CHECK(custom[c] == doctest::Approx(direct[c]));

  // min/max expression nodes.
  ExprPtr clipped = Expr::min(Expr::max(Expr::coordinate(0, 0), Expr::constant(9.0)),
                              Expr::constant(11.0));
  auto clip = evaluate_payoff(PayoffSpec::custom(clipped), grid);
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    CHECK(clip[c] == doctest::Approx(std::clamp(grid.coordinate(c, 0, 0), 9.0, 11.0)));
  }

  SUBCASE("errors") {
    // Reference outside the system.
    CHECK_THROWS_AS(evaluate_payoff(PayoffSpec::min_call({{2, 0}}, 1.0), grid),
                    std::invalid_argument);
    // Division by a coordinate that hits zero on its own grid.
    MarginalSystem with_zero(1, 2,
                             {uniform_atoms({0.0, 2.0, 4.0}), uniform_atoms({1.0, 2.0, 3.0})},
                             {2.0, 2.0});
    JointGrid zgrid(with_zero);
    ExprPtr ratio = Expr::div(Expr::coordinate(0, 1), Expr::coordinate(0, 0));
    CHECK_THROWS_AS(evaluate_payoff(PayoffSpec::custom(ratio), zgrid), std::domain_error);
    CHECK_THROWS_AS(
        evaluate_payoff(PayoffSpec::squared_returns_product({0, 0}, {0, 1}, {0, 1}, {0, 0}),
                        zgrid),
        std::domain_error);
    CHECK_THROWS_AS(PayoffSpec::basket_call({{0, 0}}, {1.0, 1.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(PayoffSpec::custom(nullptr), std::invalid_argument);
  }
}

TEST_CASE("correlation pin row: frozen coefficient, endpoint feasibility, validation") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);

  // Pin between S_t1^1 and S_t2^1: sigma_1^1 = sqrt(8/3), sigma_2^1 = sqrt(5).
  LinearConstraint row = correlation_eq_constraint(grid, ms, 0, 1, 0, 0, 0.0);
  CHECK(row.sense == LinearConstraint::Sense::eq);
  CHECK(row.rhs == 0.0);
  const std::size_t cell = find_cell(grid, {{12.0, 8.0}, {13.0, 4.0}});
  CHECK(coefficient_at(row, cell) == doctest::Approx(15.3362).epsilon(1e-5));
  // Same coefficient appears wherever (x_1^1, x_2^1) = (12, 13).
  const std::size_t cell2 = find_cell(grid, {{12.0, 10.0}, {13.0, 16.0}});
  CHECK(coefficient_at(row, cell2) == doctest::Approx(coefficient_at(row, cell)));

  auto base = reference_constraints(grid, ms);

  // Same-asset correlation across maturities is fixed by the martingale
  // property: E[S_t1 S_t2] = E[S_t1^2], so rho = sigma_1 / sigma_2.
  auto [time_lo, time_hi] = functional_range(grid, base, dense_row(row, grid.cells()));
  const double pinned = std::sqrt(8.0 / 3.0) / std::sqrt(5.0);
  CHECK(time_lo == doctest::Approx(pinned).epsilon(1e-9));
  CHECK(time_hi == doctest::Approx(pinned).epsilon(1e-9));

  // Cross-asset correlation at one maturity has a genuine range; pinning at
  // the attainable upper endpoint stays consistent.
  LinearConstraint cross = correlation_eq_constraint(grid, ms, 0, 0, 0, 1, 0.0);
  auto [rho_lo, rho_hi] = functional_range(grid, base, dense_row(cross, grid.cells()));
  CHECK(rho_lo < rho_hi - 0.1);
  const double rho_max = std::min(1.0, rho_hi);
  auto pin = correlation_eq_constraint(grid, ms, 0, 0, 0, 1, rho_max);
  FeasibilityReport report = feasibility_check(grid, base, {pin});
  CHECK(report.consistent);
  CHECK(report.steps.size() == 1);
  CHECK(report.steps[0].admissible_hi == doctest::Approx(rho_hi).epsilon(1e-9));

  SUBCASE("validation") {
    CHECK_THROWS_AS(correlation_eq_constraint(grid, ms, 0, 1, 0, 0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(correlation_eq_constraint(grid, ms, 0, 2, 0, 0, 0.0), std::invalid_argument);
    // Zero-variance marginal is rejected.
    MarginalSystem degenerate(1, 2,
                              {DiscreteMarginal({10.0}, {1.0}), uniform_atoms({9.0, 11.0})},
                              {10.0, 10.0});
    JointGrid dgrid(degenerate);
    CHECK_THROWS_AS(correlation_eq_constraint(dgrid, degenerate, 0, 0, 0, 1, 0.0),
                    std::domain_error);
  }
}

TEST_CASE("constant-correlation rows: pair counts and structure") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);
  auto rows = constant_correlation_constraints(grid, ms);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].sense == LinearConstraint::Sense::eq);
  CHECK(rows[0].rhs == 0.0);
  // The row is the difference of the two per-maturity normalized-product
  // fields: reproduce one coefficient by hand.
  auto field1 = correlation_eq_constraint(grid, ms, 0, 0, 0, 1, 0.0);
  auto field2 = correlation_eq_constraint(grid, ms, 1, 1, 0, 1, 0.0);
  const std::size_t cell = find_cell(grid, {{12.0, 12.0}, {13.0, 16.0}});
  CHECK(coefficient_at(rows[0], cell) ==
        doctest::Approx(coefficient_at(field1, cell) - coefficient_at(field2, cell)));

  // Three maturities give the three pairs.
  MarginalSystem chain(3, 2,
                       {uniform_atoms({9.0, 11.0}), uniform_atoms({9.0, 11.0}),
                        uniform_atoms({8.0, 12.0}), uniform_atoms({8.0, 12.0}),
                        uniform_atoms({7.0, 13.0}), uniform_atoms({7.0, 13.0})},
                       {10.0, 10.0});
  JointGrid cgrid(chain);
  CHECK(constant_correlation_constraints(cgrid, chain).size() == 3);

  // Only the two-asset formulation is supported.
  MarginalSystem three(1, 3,
                       {uniform_atoms({9.0, 11.0}), uniform_atoms({9.0, 11.0}),
                        uniform_atoms({9.0, 11.0})},
                       {10.0, 10.0, 10.0});
  JointGrid tgrid(three);
  CHECK_THROWS_AS(constant_correlation_constraints(tgrid, three), std::invalid_argument);
  CHECK_THROWS_AS(correlation_lb_constraints(tgrid, three, {0.0}), std::invalid_argument);
}

TEST_CASE("reference bounds across the six dependence scenarios") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);

  // The published scenario bounds the correlation at the first maturity; a
  // bound of -1 is vacuous and leaves the second maturity unconstrained.
  // Combined with the constant-correlation row the bound propagates to every
  // maturity.
  auto cc = constant_correlation_constraints(grid, ms);
  auto lb_neg = correlation_lb_constraints(grid, ms, {-0.5, -1.0});
  auto lb_pos = correlation_lb_constraints(grid, ms, {0.5, -1.0});

  auto with = [&base](std::initializer_list<const std::vector<LinearConstraint>*> extras) {
    auto rows = base;
    for (const auto* e : extras) rows.insert(rows.end(), e->begin(), e->end());
    return rows;
  };
  const std::vector<std::vector<LinearConstraint>> scenarios = {
      with({}),          with({&cc}),          with({&lb_neg}),
      with({&lb_pos}),   with({&cc, &lb_neg}), with({&cc, &lb_pos})};

  struct Golden {
    PayoffSpec payoff;
    std::vector<double> inf, sup;
  };
  // Values reproduce the published four-decimal table; 5e-4 covers rounding.
  const std::vector<Golden> golden = {
      {payoff_c3(),
       {0.25, 0.2781, 0.3179, 0.5375, 0.329, 0.639},
       {1.0111, 0.9781, 1.0111, 1.0111, 0.9781, 0.9781}},
      {payoff_c4(),
       {1.9611, 1.9611, 1.9611, 1.9611, 1.9611, 1.9611},
       {3.2167, 3.198, 3.1615, 2.9714, 3.1615, 2.893}},
      {payoff_c5(),
       {0.0, 0.0795, 0.0, 0.0, 0.0795, 0.0795},
       {1.9778, 1.9778, 1.9778, 0.8083, 1.9778, 0.6784}},
      {payoff_c6(),
       {0.0012, 0.0012, 0.0012, 0.0012, 0.0012, 0.0014},
       {0.0207, 0.0207, 0.0207, 0.0207, 0.0207, 0.0207}},
  };

  for (const Golden& g : golden) {
    auto payoff = evaluate_payoff(g.payoff, grid);
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      CAPTURE(s);
      BoundResult r = solve_bounds(grid, payoff, scenarios[s]);
      REQUIRE(r.lower.status == SolveStatus::optimal);
      REQUIRE(r.upper.status == SolveStatus::optimal);
      CHECK(std::fabs(r.lower.value - g.inf[s]) <= 5e-4);
      CHECK(std::fabs(r.upper.value - g.sup[s]) <= 5e-4);
    }
  }
}

TEST_CASE("correlation lower bounds: vacuous at -1 and validated input") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);
  auto payoff = evaluate_payoff(payoff_c3(), grid);

  BoundResult plain = solve_bounds(grid, payoff, base);
  auto rows = base;
  auto vacuous = correlation_lb_constraints(grid, ms, {-1.0, -1.0});
  rows.insert(rows.end(), vacuous.begin(), vacuous.end());
  BoundResult bounded = solve_bounds(grid, payoff, rows);
  CHECK(bounded.lower.value == doctest::Approx(plain.lower.value).epsilon(1e-9));
  CHECK(bounded.upper.value == doctest::Approx(plain.upper.value).epsilon(1e-9));

  CHECK_THROWS_AS(correlation_lb_constraints(grid, ms, {0.0, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(correlation_lb_constraints(grid, ms, {0.0}), std::invalid_argument);
}

TEST_CASE("basket price rows: linear regime, feasible interval, rejection") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);

  // Strike below the smallest achievable basket value: the row is linear in
  // the coordinates and every martingale measure prices it at the forward.
  {
    LinearConstraint row = basket_price_constraint(grid, 0, 0, 0, 1, 1.0, 1.0, 10.0, 10.0);
    for (const auto& [c, v] : row.coefficients) {
      CHECK(v == doctest::Approx(grid.coordinate(c, 0, 0) + grid.coordinate(c, 0, 1) - 10.0));
    }
    CHECK(feasibility_check(grid, base, {row}).consistent);
    LinearConstraint off = basket_price_constraint(grid, 0, 0, 0, 1, 1.0, 1.0, 10.0, 10.5);
    CHECK_FALSE(feasibility_check(grid, base, {off}).consistent);
  }

  // A strike with optionality: prices inside the model-free interval are
  // consistent, prices just outside are rejected.
  {
    LinearConstraint probe = basket_price_constraint(grid, 0, 1, 0, 1, 1.0, 1.0, 22.0, 0.0);
    auto [lo, hi] = functional_range(grid, base, dense_row(probe, grid.cells()));
    CHECK(lo < hi);
    auto mid = basket_price_constraint(grid, 0, 1, 0, 1, 1.0, 1.0, 22.0, 0.5 * (lo + hi));
    CHECK(feasibility_check(grid, base, {mid}).consistent);
    auto above = basket_price_constraint(grid, 0, 1, 0, 1, 1.0, 1.0, 22.0, hi + 1e-5);
    CHECK_FALSE(feasibility_check(grid, base, {above}).consistent);
  }

  CHECK_THROWS_AS(basket_price_constraint(grid, 0, 0, 0, 1, 0.0, 1.0, 10.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(basket_price_constraint(grid, 0, 0, 0, 1, 1.0, 1.0, 10.0, -1.0),
                  std::invalid_argument);
}

TEST_CASE("implied correlation from a basket price curve") {
  MarginalSystem ms = square_system();

  auto curve_from_coupling =
      [](const std::vector<std::pair<std::vector<double>, double>>& coupling,
         const std::vector<double>& strikes) {
        std::vector<std::pair<double, double>> curve;
        for (double k : strikes) {
          double price = 0.0;
          for (const auto& [xy, w] : coupling) {
            price += w * std::max(xy[0] + xy[1] - k, 0.0);
          }
          curve.emplace_back(k, price);
        }
        return curve;
      };

  SUBCASE("independent coupling recovers zero") {
    std::vector<std::pair<std::vector<double>, double>> indep;
    for (double x : {1.0, 2.0, 3.0}) {
      for (double y : {1.0, 2.0, 3.0}) indep.push_back({{x, y}, 1.0 / 9.0});
    }
    auto curve = curve_from_coupling(indep, {2.0, 3.0, 4.0, 5.0, 6.0, 7.0});
    CHECK(std::fabs(implied_correlation_from_basket_curve(ms, 0, 0, 0, 1, 1.0, 1.0, curve)) <=
          1e-6);
  }

  SUBCASE("comonotone coupling of identical marginals recovers one") {
    std::vector<std::pair<std::vector<double>, double>> como = {
        {{1.0, 1.0}, 1.0 / 3.0}, {{2.0, 2.0}, 1.0 / 3.0}, {{3.0, 3.0}, 1.0 / 3.0}};
    auto curve = curve_from_coupling(como, {2.0, 4.0, 6.0, 7.0});
    CHECK(implied_correlation_from_basket_curve(ms, 0, 0, 0, 1, 1.0, 1.0, curve) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("countermonotone coupling of a symmetric marginal recovers minus one") {
    std::vector<std::pair<std::vector<double>, double>> counter = {
        {{1.0, 3.0}, 1.0 / 3.0}, {{2.0, 2.0}, 1.0 / 3.0}, {{3.0, 1.0}, 1.0 / 3.0}};
    auto curve = curve_from_coupling(counter, {4.0, 5.0});
    CHECK(implied_correlation_from_basket_curve(ms, 0, 0, 0, 1, 1.0, 1.0, curve) ==
          doctest::Approx(-1.0).epsilon(1e-6));
  }

  SUBCASE("rejects non-convex curves and poor strike coverage") {
    std::vector<std::pair<std::vector<double>, double>> como = {
        {{1.0, 1.0}, 1.0 / 3.0}, {{2.0, 2.0}, 1.0 / 3.0}, {{3.0, 3.0}, 1.0 / 3.0}};
    auto bad = curve_from_coupling(como, {2.0, 4.0, 6.0, 7.0});
    bad[1].second += 0.5;  // bump one price above the convex hull
    CHECK_THROWS_AS(implied_correlation_from_basket_curve(ms, 0, 0, 0, 1, 1.0, 1.0, bad),
                    std::invalid_argument);

    std::vector<std::pair<std::vector<double>, double>> indep;
    for (double x : {1.0, 2.0, 3.0}) {
      for (double y : {1.0, 2.0, 3.0}) indep.push_back({{x, y}, 1.0 / 9.0});
    }
    auto truncated = curve_from_coupling(indep, {4.0, 5.0, 6.0, 7.0});
    CHECK_THROWS_AS(implied_correlation_from_basket_curve(ms, 0, 0, 0, 1, 1.0, 1.0, truncated),
                    std::invalid_argument);
  }
}

TEST_CASE("digital quote to survival value") {
  CHECK(digital_to_survival_value(0.4, 0.6, 0.7) == doctest::Approx(0.1));
  // Independence: p = Fk * Fl maps to (1 - Fk)(1 - Fl).
  CHECK(digital_to_survival_value(0.6 * 0.7, 0.6, 0.7) == doctest::Approx(0.4 * 0.3));

  // Lognormal pair: the digital price plus marginal terms reproduces the
  // joint survival probability exactly.
  const double sigma = 0.5, t = 2.0, rho = 0.8, strike = 10.0;
  const double s0k = 9.0, s0l = 11.0;
  auto z = [&](double s0) {
    return (std::log(strike / s0) + 0.5 * sigma * sigma * t) / (sigma * std::sqrt(t));
  };
  const double zk = z(s0k), zl = z(s0l);
  const double p = bivariate_normal_cdf(zk, zl, rho);
  const double expected = bivariate_normal_cdf(-zk, -zl, rho);
  CHECK(digital_to_survival_value(p, norm_cdf(zk), norm_cdf(zl)) ==
        doctest::Approx(expected).epsilon(1e-8));

  CHECK_THROWS_AS(digital_to_survival_value(1.2, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(digital_to_survival_value(0.5, -0.1, 0.5), std::invalid_argument);
  // p = 0.9 with F = 0.6, 0.7 would imply a survival value of 0.6 above the
  // admissible 0.3: inconsistent quote (domain_error, not malformed input).
  CHECK_THROWS_AS(digital_to_survival_value(0.9, 0.6, 0.7), std::domain_error);
}

TEST_CASE("copula box: unconstrained band is vacuous") {
  MarginalSystem ms = reference_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);
  auto payoff = evaluate_payoff(payoff_c4(), grid);
  BoundResult plain = solve_bounds(grid, payoff, base);

  auto rows = copula_box_constraints(grid, ms, QuasiCopula::frechet_lower(4),
                                     QuasiCopula::frechet_upper(4), OrthantOrder::lower);
  auto all = base;
  all.insert(all.end(), rows.begin(), rows.end());
  BoundResult boxed = solve_bounds(grid, payoff, all);
  CHECK(boxed.lower.value == doctest::Approx(plain.lower.value).epsilon(1e-9));
  CHECK(boxed.upper.value == doctest::Approx(plain.upper.value).epsilon(1e-9));

  CHECK_THROWS_AS(copula_box_constraints(grid, ms, QuasiCopula::frechet_lower(3),
                                         QuasiCopula::frechet_upper(4), OrthantOrder::lower),
                  std::invalid_argument);
}

TEST_CASE("copula box: degenerate band collapses the bounds to one coupling") {
  MarginalSystem ms = square_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);
  // Product payoff S^1 * S^2; independence price is E[X]E[Y] = 4.
  auto payoff = evaluate_payoff(
      PayoffSpec::custom(Expr::mul(Expr::coordinate(0, 0), Expr::coordinate(0, 1))), grid);

  BoundResult plain = solve_bounds(grid, payoff, base);
  CHECK(plain.upper.value - plain.lower.value > 0.5);  // genuinely open interval

  for (OrthantOrder order : {OrthantOrder::lower, OrthantOrder::upper}) {
    const bool lower_order = order == OrthantOrder::lower;
    CAPTURE(lower_order);
    auto rows = copula_box_constraints(grid, ms, QuasiCopula::independence(2),
                                       QuasiCopula::independence(2), order);
    auto all = base;
    all.insert(all.end(), rows.begin(), rows.end());
    BoundResult pinned = solve_bounds(grid, payoff, all);
    REQUIRE(pinned.lower.status == SolveStatus::optimal);
    CHECK(pinned.lower.value == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(pinned.upper.value == doctest::Approx(4.0).epsilon(1e-6));
  }
}

TEST_CASE("copula box: survival prescriptions only tighten, lattice density is immaterial") {
  MarginalSystem ms = square_system();
  JointGrid grid(ms);
  auto base = reference_constraints(grid, ms);
  auto payoff = evaluate_payoff(PayoffSpec::min_call({{0, 0}, {0, 1}}, 1.0), grid);
  BoundResult plain = solve_bounds(grid, payoff, base);

  // Digital-style survival prescription consistent with the comonotone
  // coupling: P(S^1 > 2, S^2 > 2) = 1/3 at F = (2/3, 2/3). The prescription
  // lives in reflected coordinates; its improved bounds are reflected back
  // into survival-side quasi-copulas.
  const double f = 2.0 / 3.0;
  PrescribedSet prescription({{{1.0 - f, 1.0 - f}, 1.0 / 3.0}}, 2);
  auto [upper_b, lower_b] = improved_frechet_bounds(prescription, 2);
  auto rows = copula_box_constraints(grid, ms, QuasiCopula::reflected(lower_b),
                                     QuasiCopula::reflected(upper_b), OrthantOrder::upper);
  CHECK(!rows.empty());
  auto all = base;
  all.insert(all.end(), rows.begin(), rows.end());
  BoundResult tightened = solve_bounds(grid, payoff, all);
  REQUIRE(tightened.lower.status == SolveStatus::optimal);
  CHECK(tightened.lower.value >= plain.lower.value - 1e-9);
  CHECK(tightened.upper.value <= plain.upper.value + 1e-9);
  // The comonotone-consistent survival floor forces mass into the upper
  // corner, so the lower bound genuinely improves.
  CHECK(tightened.lower.value > plain.lower.value + 1e-6);

  // Lemma-style density check: adding off-atom rational points produces only
  // duplicate or dominated rows, so the bounds agree to solver precision.
  std::vector<double> axis = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
  std::vector<std::vector<double>> dense_points;
  for (double x : axis) {
    for (double y : axis) dense_points.push_back({x, y});
  }
  auto lo_atoms = copula_box_constraints(grid, ms, QuasiCopula::frechet_lower(2),
                                         QuasiCopula::gaussian(0.5), OrthantOrder::lower);
  auto lo_dense = copula_box_constraints(grid, ms, QuasiCopula::frechet_lower(2),
                                         QuasiCopula::gaussian(0.5), OrthantOrder::lower,
                                         dense_points);
  auto bounds_with = [&](const std::vector<LinearConstraint>& extra) {
    auto rows2 = base;
    rows2.insert(rows2.end(), extra.begin(), extra.end());
    return solve_bounds(grid, payoff, rows2);
  };
  BoundResult ba = bounds_with(lo_atoms);
  BoundResult bd = bounds_with(lo_dense);
  CHECK(ba.lower.value == doctest::Approx(bd.lower.value).epsilon(1e-9));
  CHECK(ba.upper.value == doctest::Approx(bd.upper.value).epsilon(1e-9));
}

TEST_CASE("common-component rows") {
  SUBCASE("upper Frechet reference leaves the bounds unchanged") {
    MarginalSystem ms = reference_system();
    JointGrid grid(ms);
    auto base = reference_constraints(grid, ms);
    auto payoff = evaluate_payoff(payoff_c3(), grid);
    BoundResult plain = solve_bounds(grid, payoff, base);
    auto rows = ccd_constraints(grid, ms, 0, QuasiCopula::frechet_upper(2));
    auto all = base;
    all.insert(all.end(), rows.begin(), rows.end());
    BoundResult r = solve_bounds(grid, payoff, all);
    CHECK(r.lower.value == doctest::Approx(plain.lower.value).epsilon(1e-9));
    CHECK(r.upper.value == doctest::Approx(plain.upper.value).epsilon(1e-9));
  }

  SUBCASE("LP upper bound respects the analytic supermodular bound") {
    MarginalSystem ms(1, 2,
                      {uniform_atoms({8.0, 10.0, 12.0}), uniform_atoms({4.0, 7.0, 10.0, 13.0, 16.0})},
                      {10.0, 10.0});
    JointGrid grid(ms);
    auto base = reference_constraints(grid, ms);
    const double strike = 10.0;
    auto payoff = evaluate_payoff(
        PayoffSpec::basket_call({{0, 0}, {0, 1}}, {0.5, 0.5}, strike), grid);
    for (const QuasiCopula& q2 :
         {QuasiCopula::independence(2), QuasiCopula::gaussian(0.5)}) {
      auto rows = ccd_constraints(grid, ms, 0, q2);
      auto all = base;
      all.insert(all.end(), rows.begin(), rows.end());
      BoundResult r = solve_bounds(grid, payoff, all);
      REQUIRE(r.upper.status == SolveStatus::optimal);
      SupermodularPayoff sp;
      sp.c = [strike](const std::vector<double>& x) {
        return std::max(0.5 * x[0] + 0.5 * x[1] - strike, 0.0);
      };
      sp.componentwise_monotone = true;
      const double analytic = ccd_supermodular_bound(
          sp,
          {MarginalCdf::discrete(ms.marginal(0, 0)), MarginalCdf::discrete(ms.marginal(0, 1))},
          q2);
      CHECK(r.upper.value <= analytic + 1e-6);
    }
  }

  SUBCASE("improved upper bounds from a prescription tighten the LP") {
    MarginalSystem ms = square_system();
    JointGrid grid(ms);
    auto base = reference_constraints(grid, ms);
    auto payoff = evaluate_payoff(
        PayoffSpec::custom(Expr::mul(Expr::coordinate(0, 0), Expr::coordinate(0, 1))), grid);
    BoundResult plain = solve_bounds(grid, payoff, base);

    // Prescribe the independence value at the middle lattice point and take
    // the improved upper bound as the common-component reference.
    PrescribedSet prescription({{{2.0 / 3.0, 2.0 / 3.0}, 4.0 / 9.0}}, 2);
    auto [upper_b, lower_b] = improved_frechet_bounds(prescription, 2);
    (void)lower_b;
    auto rows = ccd_constraints(grid, ms, 0, upper_b);
    auto all = base;
    all.insert(all.end(), rows.begin(), rows.end());
    BoundResult r = solve_bounds(grid, payoff, all);
    REQUIRE(r.upper.status == SolveStatus::optimal);
    CHECK(r.upper.value <= plain.upper.value + 1e-9);
    CHECK(r.upper.value < plain.upper.value - 1e-6);
  }

  SUBCASE("validation") {
    MarginalSystem ms = square_system();
    JointGrid grid(ms);
    CHECK_THROWS_AS(ccd_constraints(grid, ms, 1, QuasiCopula::frechet_upper(2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ccd_constraints(grid, ms, 0, QuasiCopula::frechet_upper(3)),
                    std::invalid_argument);
  }
}
