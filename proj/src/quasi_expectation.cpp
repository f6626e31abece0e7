#include "motbounds/quasi_expectation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace motb {

namespace {

constexpr double kTailTruncation = 1e-8;  // quantiles evaluated up to 1 - this

double clamp_u(double u) { return std::min(u, 1.0 - kTailTruncation); }

// Uniform n-lattice of [0,1] merged with a tail-graded family (u = 1 -
// exp(-s), s uniform) that keeps heavy-tailed quantile transforms accurate
// near u = 1, and with mandatory interior points.
std::vector<double> build_lattice(std::size_t n, const std::vector<double>& breaks) {
  std::vector<double> pts;
  pts.reserve(2 * n + 2 + breaks.size());
  const double smax = -std::log(kTailTruncation);
  for (std::size_t k = 0; k <= n; ++k) {
    pts.push_back(static_cast<double>(k) / n);
    double graded = 1.0 - std::exp(-smax * static_cast<double>(k) / n);
    if (graded > 0.0 && graded < 1.0) pts.push_back(graded);
  }
  for (double b : breaks) {
    if (b > 0.0 && b < 1.0) pts.push_back(b);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](double a, double b) { return std::fabs(a - b) < 1e-13; }),
            pts.end());
  return pts;
}

double check_finite(double v, const char* where) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << where << ": payoff evaluation is not finite";
    throw std::runtime_error(os.str());
  }
  return v;
}

// One-resolution evaluation of the quasi-expectation.
double pi_once(const BivariatePayoff& payoff, const QuasiCopula& q, std::size_t n) {
  const auto X = build_lattice(n, payoff.breaks1);
  const auto Y = build_lattice(n, payoff.breaks2);
  const std::size_t nx = X.size(), ny = Y.size();
  const auto& g = payoff.g;

  double total = check_finite(g(0.0, 0.0), "pi_bivariate");

  // Axis terms: the mass of an increment over [x_k, x_{k+1}) sits at x_k for
  // a left-continuous payoff whose jumps are lattice points.
  {
    double prev = g(0.0, 0.0);
    for (std::size_t k = 0; k + 1 < nx; ++k) {
      double next = check_finite(g(X[k + 1], 0.0), "pi_bivariate");
      total += (1.0 - X[k]) * (next - prev);
      prev = next;
    }
    prev = g(0.0, 0.0);
    for (std::size_t l = 0; l + 1 < ny; ++l) {
      double next = check_finite(g(0.0, Y[l + 1]), "pi_bivariate");
      total += (1.0 - Y[l]) * (next - prev);
      prev = next;
    }
  }

  if (payoff.separable_kink) {
    // Cross differences vanish on cells where the kink argument keeps its
    // sign, so only cells straddling the kink contribute.
    std::vector<double> S1(nx), S2(ny);
    for (std::size_t k = 0; k < nx; ++k) S1[k] = payoff.s1(X[k]);
    for (std::size_t l = 0; l < ny; ++l) S2[l] = payoff.s2(Y[l]);
    for (std::size_t k = 0; k + 1 < nx; ++k) {
      // l-range with S1[k] + S2[l] <= level and S1[k+1] + S2[l+1] >= level.
      std::size_t lo = 0;
      {
        auto it = std::lower_bound(S2.begin() + 1, S2.end(), payoff.level - S1[k + 1]);
        lo = static_cast<std::size_t>(it - S2.begin()) - 1;
      }
      std::size_t hi = ny - 1;
      {
        auto it = std::upper_bound(S2.begin(), S2.end() - 1, payoff.level - S1[k]);
        hi = static_cast<std::size_t>(it - S2.begin());
      }
      for (std::size_t l = lo; l < hi && l + 1 < ny; ++l) {
        double dd = g(X[k + 1], Y[l + 1]) - g(X[k + 1], Y[l]) - g(X[k], Y[l + 1]) + g(X[k], Y[l]);
        if (dd != 0.0) {
          total += q.survival(std::vector<double>{X[k], Y[l]}) * dd;
        }
      }
    }
    return total;
  }

  // Generic dense pass, one row of payoff values cached at a time.
  std::vector<double> row_prev(ny), row_cur(ny);
  for (std::size_t l = 0; l < ny; ++l) {
    row_prev[l] = check_finite(g(X[0], Y[l]), "pi_bivariate");
  }
  std::vector<double> uv(2);
  for (std::size_t k = 0; k + 1 < nx; ++k) {
    for (std::size_t l = 0; l < ny; ++l) {
      row_cur[l] = check_finite(g(X[k + 1], Y[l]), "pi_bivariate");
    }
    for (std::size_t l = 0; l + 1 < ny; ++l) {
      double dd = row_cur[l + 1] - row_cur[l] - row_prev[l + 1] + row_prev[l];
      if (dd != 0.0) {
        uv[0] = X[k];
        uv[1] = Y[l];
        total += q.survival(uv) * dd;
      }
    }
    row_prev.swap(row_cur);
  }
  return total;
}

std::vector<double> discrete_quantile_knots(const std::vector<MarginalCdf>& marginals) {
  std::vector<double> knots = {0.0, 1.0};
  for (const MarginalCdf& m : marginals) {
    auto b = quantile_breakpoints(m.as_discrete());
    knots.insert(knots.end(), b.begin(), b.end());
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end(),
                          [](double a, double b) { return std::fabs(a - b) < 1e-14; }),
              knots.end());
  return knots;
}

bool all_discrete(const std::vector<MarginalCdf>& marginals) {
  return std::all_of(marginals.begin(), marginals.end(),
                     [](const MarginalCdf& m) { return m.is_discrete(); });
}

}  // namespace

std::vector<double> quantile_breakpoints(const DiscreteMarginal& m) {
  std::vector<double> b;
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < m.size(); ++j) {
    acc += m.weights()[j];
    b.push_back(acc);
  }
  return b;
}

double InducedMeasureGrid::total_interaction() const {
  return std::accumulate(cell.begin(), cell.end(), 0.0);
}
double InducedMeasureGrid::total_axis1() const {
  return std::accumulate(axis1.begin(), axis1.end(), 0.0);
}
double InducedMeasureGrid::total_axis2() const {
  return std::accumulate(axis2.begin(), axis2.end(), 0.0);
}

InducedMeasureGrid build_induced_measure_grid(const BivariatePayoff& payoff, std::size_t n) {
  InducedMeasureGrid grid;
  grid.x = build_lattice(n, payoff.breaks1);
  grid.y = build_lattice(n, payoff.breaks2);
  const std::size_t nx = grid.x.size(), ny = grid.y.size();
  grid.at_origin = payoff.g(0.0, 0.0);
  grid.axis1.resize(nx - 1);
  grid.axis2.resize(ny - 1);
  for (std::size_t k = 0; k + 1 < nx; ++k) {
    grid.axis1[k] = payoff.g(grid.x[k + 1], 0.0) - payoff.g(grid.x[k], 0.0);
  }
  for (std::size_t l = 0; l + 1 < ny; ++l) {
    grid.axis2[l] = payoff.g(0.0, grid.y[l + 1]) - payoff.g(0.0, grid.y[l]);
  }
  grid.cell.resize((nx - 1) * (ny - 1));
  for (std::size_t k = 0; k + 1 < nx; ++k) {
    for (std::size_t l = 0; l + 1 < ny; ++l) {
      grid.cell[k * (ny - 1) + l] = payoff.g(grid.x[k + 1], grid.y[l + 1]) -
                                    payoff.g(grid.x[k + 1], grid.y[l]) -
                                    payoff.g(grid.x[k], grid.y[l + 1]) +
                                    payoff.g(grid.x[k], grid.y[l]);
    }
  }
  return grid;
}

double pi_bivariate(const BivariatePayoff& payoff, const QuasiCopula& q, PiOptions opts) {
  if (!payoff.g) throw std::invalid_argument("pi_bivariate: payoff has no evaluator");
  if (q.dimension() != 2) throw std::invalid_argument("pi_bivariate: survival must be bivariate");
  if (payoff.separable_kink && (!payoff.s1 || !payoff.s2)) {
    throw std::invalid_argument("pi_bivariate: separable-kink payoff lacks s1/s2");
  }
  // The corner rule converges at O(1/n) on continuous marginals (and is
  // exact for purely atomic ones, where successive estimates coincide), so
  // each doubling step is Richardson-extrapolated before the convergence
  // check: ext = 2*cur - prev cancels the leading error term.
  std::size_t n = std::max<std::size_t>(opts.initial, 2);
  double prev = pi_once(payoff, q, n);
  double prev_ext = prev;
  bool have_ext = false;
  while (n < opts.cap) {
    n *= 2;
    double cur = pi_once(payoff, q, n);
    double ext = 2.0 * cur - prev;
    double scale = std::max({std::fabs(ext), std::fabs(prev_ext), 1e-12});
    if (have_ext && std::fabs(ext - prev_ext) <= opts.rel_tol * scale) return ext;
    prev = cur;
    prev_ext = ext;
    have_ext = true;
  }
  std::ostringstream os;
  os << "pi_bivariate: no convergence at resolution cap " << opts.cap
     << "; last two extrapolated estimates " << prev_ext << " and "
     << 2.0 * pi_once(payoff, q, 2 * opts.cap) - prev;
  throw std::runtime_error(os.str());
}

double min_option_bound(const QuasiCopula& survival_bound,
                        const std::vector<MarginalCdf>& marginals, double strike,
                        OptionSide side) {
  const std::size_t m = marginals.size();
  if (m != survival_bound.dimension()) {
    throw std::invalid_argument("min_option_bound: marginal count != survival dimension");
  }
  if (m == 0) throw std::invalid_argument("min_option_bound: no marginals");

  double T = -std::numeric_limits<double>::infinity();
  for (const MarginalCdf& mc : marginals) {
    double top = mc.is_discrete() ? mc.as_discrete().atoms().back()
                                  : mc.quantile(1.0 - kTailTruncation);
    T = std::max(T, top);
  }

  auto survival_at = [&](double t) {
    std::vector<double> u(m);
    for (std::size_t i = 0; i < m; ++i) u[i] = std::min(marginals[i].cdf(t), 1.0);
    return survival_bound.survival(u);
  };

  auto integrate = [&](double a, double b) {
    if (b <= a) return 0.0;
    if (all_discrete(marginals)) {
      // The integrand is constant between consecutive atoms; sum exactly.
      std::vector<double> knots = {a, b};
      for (const MarginalCdf& mc : marginals) {
        for (double atom : mc.as_discrete().atoms()) {
          if (atom > a && atom < b) knots.push_back(atom);
        }
      }
      std::sort(knots.begin(), knots.end());
      knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
      double s = 0.0;
      for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        s += (knots[j + 1] - knots[j]) * survival_at(knots[j]);
      }
      return s;
    }
    // Midpoint quadrature with doubling for (partly) continuous marginals.
    auto once = [&](std::size_t n) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        double t = a + (b - a) * (static_cast<double>(k) + 0.5) / n;
        s += survival_at(t);
      }
      return s * (b - a) / n;
    };
    std::size_t n = 512;
    double prev = once(n);
    while (n < 65536) {
      n *= 2;
      double cur = once(n);
      if (std::fabs(cur - prev) <= 1e-7 * std::max({std::fabs(cur), std::fabs(prev), 1e-12})) {
        return cur;
      }
      prev = cur;
    }
    return prev;
  };

  if (side == OptionSide::call) {
    if (strike > T) {
      throw std::invalid_argument("min_option_bound: strike above support truncation");
    }
    return integrate(strike, T);
  }
  if (strike <= 0.0) return 0.0;
  // (K - min)_+ = K - min(min, K) and min >= 0, so the put value is
  // K - int_0^K P(min > t) dt under the same survival bound.
  return strike - integrate(0.0, std::min(strike, T));
}

BasketBound basket_ccd_bound(const std::vector<double>& alpha, double strike,
                             const std::vector<MarginalCdf>& marginals, const QuasiCopula& q2,
                             OptionSide side, PiOptions opts) {
  const std::size_t d = alpha.size();
  if (d < 2) throw std::invalid_argument("basket_ccd_bound: need at least two assets");
  if (marginals.size() != d) {
    throw std::invalid_argument("basket_ccd_bound: weight/marginal count mismatch");
  }
  if (q2.dimension() != 2) throw std::invalid_argument("basket_ccd_bound: q2 must be bivariate");
  for (double a : alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("basket_ccd_bound: weights must be positive");
  }

  BasketBound out;
  out.continuous_marginals = !std::any_of(marginals.begin(), marginals.end(),
                                          [](const MarginalCdf& m) { return m.is_discrete(); });

  double tail_weight = 0.0;
  for (std::size_t i = 1; i < d; ++i) tail_weight += alpha[i];

  BivariatePayoff payoff;
  payoff.separable_kink = true;
  payoff.put_form = (side == OptionSide::put);
  payoff.level = strike;
  // s1: alpha-weighted quantile mix of the tail assets (times its weight);
  // s2: the head asset.
  payoff.s1 = [&marginals, alpha, d](double x) {
    double s = 0.0;
    for (std::size_t i = 1; i < d; ++i) s += alpha[i] * marginals[i].quantile(clamp_u(x));
    return s;
  };
  payoff.s2 = [&marginals, a0 = alpha[0]](double x) {
    return a0 * marginals[0].quantile(clamp_u(x));
  };
  (void)tail_weight;  // G^{-1} carries 1/tail_weight; s1 multiplies it back.
  const bool put = payoff.put_form;
  payoff.g = [s1 = payoff.s1, s2 = payoff.s2, strike, put](double x1, double x2) {
    double v = s1(x1) + s2(x2) - strike;
    return put ? std::max(-v, 0.0) : std::max(v, 0.0);
  };
  for (std::size_t i = 1; i < d; ++i) {
    if (marginals[i].is_discrete()) {
      auto b = quantile_breakpoints(marginals[i].as_discrete());
      payoff.breaks1.insert(payoff.breaks1.end(), b.begin(), b.end());
    }
  }
  if (marginals[0].is_discrete()) {
    payoff.breaks2 = quantile_breakpoints(marginals[0].as_discrete());
  }

  out.value = pi_bivariate(payoff, q2, opts);
  return out;
}

double ccd_supermodular_bound(const SupermodularPayoff& payoff,
                              const std::vector<MarginalCdf>& marginals, const QuasiCopula& q2,
                              PiOptions opts) {
  if (!payoff.c) throw std::invalid_argument("ccd_supermodular_bound: payoff has no evaluator");
  if (!payoff.componentwise_monotone) {
    throw std::invalid_argument(
        "ccd_supermodular_bound: payoff must be flagged componentwise monotone");
  }
  const std::size_t d = marginals.size();
  if (d < 2) throw std::invalid_argument("ccd_supermodular_bound: need at least two assets");
  if (q2.dimension() != 2) {
    throw std::invalid_argument("ccd_supermodular_bound: q2 must be bivariate");
  }

  BivariatePayoff phi;
  phi.g = [&payoff, &marginals, d](double x1, double x2) {
    std::vector<double> s(d);
    s[0] = marginals[0].quantile(clamp_u(x2));
    for (std::size_t i = 1; i < d; ++i) s[i] = marginals[i].quantile(clamp_u(x1));
    return payoff.c(s);
  };
  for (std::size_t i = 1; i < d; ++i) {
    if (marginals[i].is_discrete()) {
      auto b = quantile_breakpoints(marginals[i].as_discrete());
      phi.breaks1.insert(phi.breaks1.end(), b.begin(), b.end());
    }
  }
  if (marginals[0].is_discrete()) {
    phi.breaks2 = quantile_breakpoints(marginals[0].as_discrete());
  }
  return pi_bivariate(phi, q2, opts);
}

double comonotone_expectation(const std::function<double(const std::vector<double>&)>& c,
                              const std::vector<MarginalCdf>& marginals) {
  if (!c) throw std::invalid_argument("comonotone_expectation: no payoff");
  const std::size_t m = marginals.size();
  if (m == 0) throw std::invalid_argument("comonotone_expectation: no marginals");
  std::vector<double> s(m);
  auto diagonal = [&](double u) {
    for (std::size_t i = 0; i < m; ++i) s[i] = marginals[i].quantile(clamp_u(u));
    return c(s);
  };
  if (all_discrete(marginals)) {
    // The diagonal is constant between cumulative-weight knots.
    auto knots = discrete_quantile_knots(marginals);
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
      total += (knots[j + 1] - knots[j]) * diagonal(0.5 * (knots[j] + knots[j + 1]));
    }
    return total;
  }
  // Substitute u = 1 - exp(-s): grades the midpoint mesh toward u = 1 so
  // that heavy-tailed quantiles (lognormal and the like) integrate cleanly.
  const double smax = -std::log(kTailTruncation);
  auto once = [&](std::size_t n) {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double s = smax * (static_cast<double>(k) + 0.5) / n;
      double w = std::exp(-s);
      total += w * diagonal(1.0 - w);
    }
    return total * smax / n;
  };
  std::size_t n = 512;
  double prev = once(n);
  while (n < 131072) {
    n *= 2;
    double cur = once(n);
    if (std::fabs(cur - prev) <= 1e-7 * std::max({std::fabs(cur), std::fabs(prev), 1e-12})) {
      return cur;
    }
    prev = cur;
  }
  throw std::runtime_error(
      "comonotone_expectation: diagonal integral did not converge at the truncation cap");
}

}  // namespace motb
