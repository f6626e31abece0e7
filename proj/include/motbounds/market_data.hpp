#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/marginal.hpp"

namespace motb {

enum class QuoteType { call, put, digital_max };

struct Quote {
  double strike = 0.0;
  double bid = 0.0;
  double ask = 0.0;
  double mid() const { return 0.5 * (bid + ask); }
};

/// One option quote curve: a single (asset, maturity, type) slice with
/// strictly increasing strikes, bid <= ask and non-negative prices.
struct QuoteCurve {
  QuoteType type = QuoteType::call;
  std::size_t maturity = 0;           // maturity identifier (e.g. days)
  std::vector<std::size_t> assets;    // one asset for C/P, the pair for DMAX
  std::vector<Quote> quotes;

  void validate() const;  // throws std::invalid_argument on violations
};

/// Multivariate lognormal (zero-rate, zero-dividend) model used to generate
/// the synthetic examples: S_t^k = S_0^k exp(-(sigma^k)^2 t / 2 + sigma^k W_t^k)
/// with corr(W^k, W^l) = correlation[k][l].
struct BSModelSpec {
  std::vector<double> spots;
  std::vector<double> vols;
  std::vector<std::vector<double>> correlation;  // symmetric, unit diagonal, PSD
  std::vector<double> maturities;                // strictly increasing, > 0

  void validate() const;  // throws std::invalid_argument on violations
};

/// Removes butterfly/monotonicity arbitrage from a call or put mid curve by
/// repeatedly deleting the quote carrying the largest violation (ties: lowest
/// strike) until the curve is monotone and convex. Surviving quotes keep
/// their market mids bit-exact. Throws when fewer than 3 quotes remain.
QuoteCurve clean_quotes(const QuoteCurve& curve);

/// Finite-difference risk-neutral density read off a cleaned curve:
///   p(K_j) = (P(K_{j+1}) - 2 P(K_j) + P(K_{j-1})) / (K_{j+1} - K_{j-1})^2
/// with p(K_1) = p(K_N) = 0. Values in [-1e-12, 0) clip to zero; anything
/// more negative signals a cleaning failure and throws.
std::vector<double> breeden_litzenberger(const QuoteCurve& curve);

/// Normalized atomic marginal at the strikes, dropping zero-weight atoms.
DiscreteMarginal marginal_from_density(const std::vector<double>& strikes,
                                       const std::vector<double>& densities);

struct EqualizeResult {
  std::vector<DiscreteMarginal> marginals;
  double target_mean = 0.0;
  /// Convex-order reports between consecutive maturities after rescaling.
  std::vector<ConvexOrderReport> convex_order;
  bool convex_order_ok = true;
};

/// Rescales the per-maturity marginals of one asset multiplicatively,
/// x -> x * (m* / m_i), so all means equal m* (default: the arithmetic mean
/// of the input means). Convex order is re-checked and reported, not
/// repaired.
EqualizeResult equalize_means(const std::vector<DiscreteMarginal>& per_maturity,
                              std::optional<double> target = std::nullopt);

/// U-quantization: N equal-weight atoms at the conditional quantile-bin
/// means, atom_j = N * integral of F^{-1} over ((j-1)/N, j/N). Exact bin
/// averages for discrete inputs; composite Gauss-Legendre graded toward the
/// quantile-derivative singularities at u = 0 and u = 1 (tails truncated at
/// the 1e-14 quantiles) otherwise. Preserves the mean and is dominated by
/// the input in convex order.
DiscreteMarginal u_quantize(const MarginalCdf& marginal, std::size_t n_atoms);

/// Price of the two-asset digital 1{max(S^k, S^l) <= K'} at maturity index i:
/// bivariate_normal_cdf(z_k, z_l, rho_kl) with
/// z = (ln(K'/S0) + sigma^2 t / 2) / (sigma sqrt(t)).
double bs_digital_pair_price(const BSModelSpec& model, std::size_t i, std::size_t k,
                             std::size_t l, double strike);

/// Lognormal marginal CDF P(S_{t_i}^k <= x); zero for x <= 0.
double bs_marginal_cdf(const BSModelSpec& model, std::size_t i, std::size_t k, double x);

/// Quantile of the lognormal marginal: S0 exp(-sigma^2 t / 2 + sigma sqrt(t)
/// z_u).
double bs_marginal_quantile(const BSModelSpec& model, std::size_t i, std::size_t k, double u);

/// Zero-rate Black call price E(S_{t_i}^k - K)_+.
double bs_call_price(const BSModelSpec& model, std::size_t i, std::size_t k, double strike);

/// Parses delimiter-separated quotes with header columns
/// (asset, maturity_days, type{C|P|DMAX}, strike, bid, ask); commas or
/// whitespace delimit. Rows are grouped into per-(asset, maturity, type)
/// curves with strikes sorted increasingly; each curve is validated.
std::vector<QuoteCurve> parse_quote_file(std::istream& in);

/// Text table (maturity, atom, weight) holding the marginals of one asset.
void write_marginal_table(std::ostream& os,
                          const std::vector<std::pair<std::size_t, DiscreteMarginal>>& rows);
std::vector<std::pair<std::size_t, DiscreteMarginal>> read_marginal_table(std::istream& in);

}  // namespace motb
