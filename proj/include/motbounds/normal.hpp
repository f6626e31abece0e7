#pragma once

namespace motb {

/// Standard normal CDF.
double norm_cdf(double x);

/// Standard normal quantile. Throws std::domain_error for p outside (0,1).
double norm_quantile(double p);

/// Standard normal density.
double norm_pdf(double x);

/// Bivariate standard normal CDF P(X <= x, Y <= y) with correlation rho.
///
/// Uses the Drezner-Wesolowsky/Genz Gauss-Legendre scheme, absolute error
/// well below 1e-10. |rho| == 1 is handled by the degenerate closed forms;
/// rho outside [-1, 1] is rejected. x and y may be +-infinity.
double bivariate_normal_cdf(double x, double y, double rho);

}  // namespace motb
