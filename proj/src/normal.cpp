#include "motbounds/normal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace motb {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kTwoPi = 6.283185307179586;
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi); }

double norm_cdf(double x) {
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  return 0.5 * std::erfc(-x / kSqrt2);
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("norm_quantile: p outside [0,1]");
  }
  // Acklam's rational approximation, refined below.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step pushes the error to full double precision.
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

namespace {

// P(X > dh, Y > dk) for standard bivariate normal with correlation r.
// Translation of Genz's BVND (tvpack).
double bvnu(double dh, double dk, double r) {
  static const double w6[] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x6[] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static const double w12[] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                               0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static const double x12[] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                               0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static const double w20[] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                               0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                               0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                               0.1527533871307259};
  static const double x20[] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                               0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                               0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                               0.07652652113349733};

  const double* w;
  const double* x;
  int ng;
  if (std::fabs(r) < 0.3) {
    w = w6, x = x6, ng = 3;
  } else if (std::fabs(r) < 0.75) {
    w = w12, x = x12, ng = 6;
  } else {
    w = w20, x = x20, ng = 10;
  }

  double h = dh, k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    if (std::fabs(r) > 0.0) {
      double hs = (h * h + k * k) / 2.0;
      double asr = std::asin(r);
      for (int i = 0; i < ng; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
          bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
      }
      bvn = bvn * asr / (2.0 * kTwoPi);
    }
    bvn += norm_cdf(-h) * norm_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::fabs(r) < 1.0) {
      double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      double bs = (h - k) * (h - k);
      double c = (4.0 - hk) / 8.0;
      double d = (12.0 - hk) / 16.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0) {
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
      }
      if (-hk < 100.0) {
        double b = std::sqrt(bs);
        bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * norm_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a = a / 2.0;
      for (int i = 0; i < ng; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          double xs = a * (is * x[i] + 1.0);
          xs = xs * xs;
          double rs = std::sqrt(1.0 - xs);
          double asr2 = -(bs / xs + hk) / 2.0;
          if (asr2 > -100.0) {
            bvn += a * w[i] * std::exp(asr2) *
                   (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
          }
        }
      }
      bvn = -bvn / kTwoPi;
    }
    if (r > 0.0) {
      bvn += norm_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      if (k > h) bvn += norm_cdf(k) - norm_cdf(h);
    }
  }
  return bvn;
}

}  // namespace

double bivariate_normal_cdf(double x, double y, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw std::domain_error("bivariate_normal_cdf: rho outside [-1,1]");
  }
  if (std::isnan(x) || std::isnan(y)) return std::numeric_limits<double>::quiet_NaN();
  if (x == -std::numeric_limits<double>::infinity() ||
      y == -std::numeric_limits<double>::infinity()) {
    return 0.0;
  }
  if (x == std::numeric_limits<double>::infinity()) return norm_cdf(y);
  if (y == std::numeric_limits<double>::infinity()) return norm_cdf(x);
  if (rho == 1.0) return norm_cdf(std::min(x, y));
  if (rho == -1.0) return std::max(norm_cdf(x) + norm_cdf(y) - 1.0, 0.0);
  return bvnu(-x, -y, rho);
}

}  // namespace motb
