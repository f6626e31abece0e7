#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace motb {

/// One-dimensional risk-neutral law of a single asset at a single maturity,
/// given as atoms with weights. Atoms are strictly increasing and
/// non-negative; weights are positive and sum to one.
class DiscreteMarginal {
 public:
  DiscreteMarginal(std::vector<double> atoms, std::vector<double> weights);

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return atoms_.size(); }

  double mean() const { return mean_; }
  double second_moment() const { return second_moment_; }
  double variance() const { return second_moment_ - mean_ * mean_; }

  /// Right-continuous CDF: P(X <= x).
  double cdf(double x) const;
  /// Generalized inverse F^{-1}(u) = inf{x : F(x) >= u}; quantile(0) is the
  /// smallest atom.
  double quantile(double u) const;
  /// Call transform E(X - K)_+.
  double call_price(double strike) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> cum_;  // cumulative weights
  double mean_ = 0.0;
  double second_moment_ = 0.0;
};

/// Equal-weight uniform law on the given atoms.
DiscreteMarginal uniform_atoms(std::vector<double> atoms);

/// A one-dimensional distribution usable by the analytic bound evaluators:
/// either discrete or given by cdf/quantile closed forms.
class MarginalCdf {
 public:
  static MarginalCdf discrete(DiscreteMarginal m);
  static MarginalCdf continuous(std::function<double(double)> cdf,
                                std::function<double(double)> quantile);

  double cdf(double x) const { return cdf_(x); }
  double quantile(double u) const { return quantile_(u); }
  bool is_discrete() const { return discrete_ != nullptr; }
  const DiscreteMarginal& as_discrete() const;

 private:
  MarginalCdf() = default;
  std::function<double(double)> cdf_;
  std::function<double(double)> quantile_;
  std::shared_ptr<const DiscreteMarginal> discrete_;
};

/// Report of a convex-order comparison between two discrete marginals with
/// equal means: passes when the call transform of m1 never exceeds the one
/// of m2 at any atom of either law.
struct ConvexOrderReport {
  bool pass = false;
  double worst_margin = 0.0;  // max over K of call1(K) - call2(K)
  double worst_strike = 0.0;
  double mean_gap = 0.0;
  std::string message;
};

ConvexOrderReport check_convex_order(const DiscreteMarginal& m1, const DiscreteMarginal& m2,
                                     double mean_tol = 1e-9, double tol = 1e-12);

/// The full matrix of marginals mu_i^k, i = 1..n maturities, k = 1..d assets,
/// in row-major (maturity-major) order, with the spot vector. Construction
/// validates the martingale mean condition and per-asset convex order.
class MarginalSystem {
 public:
  MarginalSystem(std::size_t maturities, std::size_t assets,
                 std::vector<DiscreteMarginal> marginals, std::vector<double> spots,
                 double mean_tol = 1e-9);

  std::size_t maturities() const { return n_; }
  std::size_t assets() const { return d_; }
  /// i, k are zero-based.
  const DiscreteMarginal& marginal(std::size_t i, std::size_t k) const {
    return marginals_[i * d_ + k];
  }
  double spot(std::size_t k) const { return spots_[k]; }
  const std::vector<double>& spots() const { return spots_; }

 private:
  std::size_t n_, d_;
  std::vector<DiscreteMarginal> marginals_;
  std::vector<double> spots_;
};

}  // namespace motb
