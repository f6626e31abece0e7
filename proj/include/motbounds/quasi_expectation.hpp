#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "motbounds/copula.hpp"
#include "motbounds/marginal.hpp"

namespace motb {

/// Left-continuous payoff on [0,1)^2, typically g(x1, x2) = payoff applied to
/// quantile transforms. `breaks1`/`breaks2` list interior lattice points the
/// integration lattice must contain (quantile jump locations); with them the
/// evaluation is exact for purely discrete marginals.
///
/// When the payoff has the separable-kink form
///   call: g = (s1(x1) + s2(x2) - level)_+
///   put:  g = (level - s1(x1) - s2(x2))_+
/// with s1, s2 non-decreasing, setting `separable_kink` lets the integrator
/// walk only the cells straddling the kink (the cross-difference of g
/// vanishes everywhere else).
struct BivariatePayoff {
  std::function<double(double, double)> g;
  std::vector<double> breaks1;
  std::vector<double> breaks2;

  bool separable_kink = false;
  bool put_form = false;
  std::function<double(double)> s1;
  std::function<double(double)> s2;
  double level = 0.0;
};

/// Resolution-doubling policy for the quasi-expectation integrator.
struct PiOptions {
  std::size_t initial = 256;
  std::size_t cap = 16384;
  double rel_tol = 1e-5;
};

/// Cell masses of the measure induced by a bivariate payoff on an n-lattice
/// (double differences), together with the one-dimensional masses of the
/// axis marginals g(., 0) and g(0, .). Dense; intended for diagnostics and
/// tests at moderate n.
struct InducedMeasureGrid {
  std::vector<double> x;         // lattice including 0 and 1
  std::vector<double> y;
  std::vector<double> cell;      // (x.size()-1) x (y.size()-1), row-major
  std::vector<double> axis1;     // increments of g(., 0)
  std::vector<double> axis2;     // increments of g(0, .)
  double at_origin = 0.0;        // g(0, 0)

  double total_interaction() const;
  double total_axis1() const;
  double total_axis2() const;
};

InducedMeasureGrid build_induced_measure_grid(const BivariatePayoff& g, std::size_t n);

/// Quasi-expectation of a bivariate payoff against the survival view of a
/// bivariate quasi-copula:
///   g(0,0) + int (1-u) d eta_{g(.,0)} + int (1-v) d eta_{g(0,.)}
///          + int survival(u, v) d eta_g,
/// with all integrals approximated on a lattice refined until the relative
/// change of a doubling step drops below rel_tol. Point masses of
/// left-continuous step payoffs sit at lattice points when the quantile jump
/// locations are listed in `breaks`, which makes discrete-marginal payoffs
/// exact. Throws std::runtime_error when the cap is hit without convergence.
double pi_bivariate(const BivariatePayoff& g, const QuasiCopula& q, PiOptions opts = {});

enum class OptionSide { call, put };

/// Price bound for an option on the minimum of m assets against a survival
/// bound: call = int_K^T survival(F_1(t), ..., F_m(t)) dt; put via
/// (K - min)_+ = K - int_0^K survival dt. Exact piecewise-constant sum for
/// all-discrete marginals; quadrature with doubling otherwise. Throws when K
/// exceeds the support truncation for a call.
double min_option_bound(const QuasiCopula& survival_bound,
                        const std::vector<MarginalCdf>& marginals, double strike,
                        OptionSide side);

struct BasketBound {
  double value = 0.0;
  // True when every marginal had a continuous distribution function, the
  // regime in which the reduction to a bivariate quasi-expectation is exact;
  // discrete marginals are handled through their generalized inverses.
  bool continuous_marginals = true;
};

/// Upper bound for a basket option sum_i alpha_i S^i with strike K from a
/// bivariate dependence bound q2: the tail assets are merged through the
/// alpha-weighted quantile mix G^{-1}(u) = sum_{i>=2} alpha_i F_i^{-1}(u) /
/// sum_{i>=2} alpha_i, and the resulting two-asset payoff is integrated
/// against the survival of q2.
BasketBound basket_ccd_bound(const std::vector<double>& alpha, double strike,
                             const std::vector<MarginalCdf>& marginals, const QuasiCopula& q2,
                             OptionSide side, PiOptions opts = {});

/// Supermodular componentwise-monotone payoff on d assets at one maturity.
struct SupermodularPayoff {
  std::function<double(const std::vector<double>&)> c;
  bool componentwise_monotone = false;
};

/// Upper bound for a supermodular payoff from a bivariate dependence bound:
/// all tail assets share the first argument of the two-variable reduction,
///   phi(x1, x2) = c(F_1^{-1}(x2), F_2^{-1}(x1), ..., F_d^{-1}(x1)),
/// which is then integrated against the survival of q2.
double ccd_supermodular_bound(const SupermodularPayoff& payoff,
                              const std::vector<MarginalCdf>& marginals, const QuasiCopula& q2,
                              PiOptions opts = {});

/// Comonotone standard bound: int_0^1 c(F_1^{-1}(u), ..., F_m^{-1}(u)) du.
/// Exact for all-discrete marginals; midpoint quadrature with doubling
/// otherwise.
double comonotone_expectation(const std::function<double(const std::vector<double>&)>& c,
                              const std::vector<MarginalCdf>& marginals);

/// Quantile jump locations of a discrete law in (0,1): the cumulative
/// weights short of 1.
std::vector<double> quantile_breakpoints(const DiscreteMarginal& m);

}  // namespace motb
