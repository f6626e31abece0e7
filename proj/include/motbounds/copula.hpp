#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace motb {

/// Finite set of prescribed copula values: each entry asserts C(u) = q for
/// the (unknown) copula C. Consistency (Frechet band, pairwise Lipschitz
/// compatibility) is checked on construction.
class PrescribedSet {
 public:
  struct Point {
    std::vector<double> u;
    double value;
  };

  PrescribedSet() = default;
  PrescribedSet(std::vector<Point> points, std::size_t dim, double tol = 1e-12);

  const std::vector<Point>& points() const { return points_; }
  std::size_t dimension() const { return dim_; }
  bool empty() const { return points_.empty(); }

 private:
  std::vector<Point> points_;
  std::size_t dim_ = 0;
};

/// Evaluable quasi-copula: grounded, uniform marginals, componentwise
/// non-decreasing, 1-Lipschitz in the l1 norm, and squeezed between the
/// Frechet bounds. Value type; cheap to copy.
class QuasiCopula {
 public:
  std::size_t dimension() const;
  const std::string& name() const;

  /// Quasi-copula value at u in [0,1]^m.
  double operator()(const std::vector<double>& u) const;
  double eval(const std::vector<double>& u) const { return (*this)(u); }

  /// Survival value at u: inclusion-exclusion over 2^m corners, with closed
  /// forms substituted where the family provides one.
  double survival(const std::vector<double>& u) const;

  /// Partial derivative with respect to the second argument (bivariate
  /// families only; throws when unavailable).
  double partial2(double u, double t) const;
  bool has_partial2() const;

  // --- factories ---
  static QuasiCopula frechet_lower(std::size_t m);
  static QuasiCopula frechet_upper(std::size_t m);
  static QuasiCopula independence(std::size_t m);
  static QuasiCopula gaussian(double rho);  // bivariate
  /// Swap the two arguments of a bivariate quasi-copula.
  static QuasiCopula transpose(const QuasiCopula& base);
  /// Pointwise maximum of quasi-copulas of equal dimension.
  static QuasiCopula pointwise_max(std::vector<QuasiCopula> members);
  /// Q*(u) = q2(min_{2<=i<=m} u_i, u_1); survival has the closed form
  /// q2_survival(max_{2<=i<=m} u_i, u_1).
  static QuasiCopula qstar(const QuasiCopula& q2, std::size_t m);
  /// Multilinear interpolation of values on the uniform (n+1)^m lattice of
  /// [0,1]^m, row-major with the last coordinate fastest. No axiom check.
  static QuasiCopula grid_interpolated(std::size_t m, std::size_t n, std::vector<double> values);
  /// Quasi-copula with survival(u) = base(1 - u); eval available for m = 2
  /// only (via the bivariate survival transform).
  static QuasiCopula reflected(const QuasiCopula& base);

  struct Impl;
  explicit QuasiCopula(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

/// Improved Frechet bounds under finitely many prescribed copula values:
///   upper(u) = min(M(u), min_p (q_p + sum_i (u_i - x_{p,i})_+))
///   lower(u) = max(W(u), max_p (q_p - sum_i (x_{p,i} - u_i)_+)).
/// Both are quasi-copulas and interpolate the prescriptions.
std::pair<QuasiCopula, QuasiCopula> improved_frechet_bounds(const PrescribedSet& prescribed,
                                                            std::size_t m);

/// Upper product D^1 v ... v D^m evaluated by composite-midpoint quadrature
/// of integral_0^1 min_i d2 D^i(u_i, t) dt. Node count doubles until the
/// relative change drops below rel_tol (starting from nodes/4).
double upper_product(const std::vector<QuasiCopula>& copulas, const std::vector<double>& u,
                     std::size_t nodes = 4096, double rel_tol = 1e-7);

/// Upper product evaluated on a product lattice of per-axis arguments,
/// sharing the quadrature tables across points. Returns values in row-major
/// order (last axis fastest) at a fixed node count.
std::vector<double> upper_product_on_lattice(const std::vector<QuasiCopula>& copulas,
                                             const std::vector<std::vector<double>>& axes,
                                             std::size_t nodes = 4096);

/// Value table of a bivariate n-grid copula: values at (i/n, j/n),
/// i,j = 0..n, row-major (n+1)x(n+1).
struct GridCopula {
  std::size_t n = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * (n + 1) + j]; }
  static GridCopula discretize(const QuasiCopula& c, std::size_t n);
};

/// Discrete upper product of bivariate n-grid copulas:
///   sum_k min_i (D^i(u_i, k/n) - D^i(u_i, (k-1)/n))
/// returned as an m-variate n-grid value table (row-major over lattice
/// multi-indices 0..n per axis, last axis fastest).
std::vector<double> upper_product_grid(const std::vector<GridCopula>& grids);

/// Result of sampling-based verification of the quasi-copula axioms.
struct AxiomReport {
  bool pass = true;
  double worst_grounded = 0.0;
  double worst_marginal = 0.0;
  double worst_monotone = 0.0;   // positive = violation magnitude
  double worst_lipschitz = 0.0;  // positive = violation magnitude
  double worst_frechet = 0.0;
  std::vector<double> violation_point;
  std::string detail;
};

/// Checks groundedness, uniform marginals, monotonicity, l1-Lipschitz
/// continuity and the Frechet band on deterministic pseudo-random points.
AxiomReport verify_axioms(const QuasiCopula& q, std::size_t samples, std::uint64_t seed,
                          double exact_tol = 0.0, double lipschitz_tol = 1e-12);

}  // namespace motb
