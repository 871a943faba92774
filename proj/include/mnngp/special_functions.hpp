#pragma once

// Standard-normal univariate and bivariate densities and distribution
// functions. All functions are pure and thread-safe.

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mnngp {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;  // 1/sqrt(2 pi)
inline constexpr double kInvSqrt2 = 0.707106781186547524400844362105;

/// Correlations within this distance of +-1 are treated as exactly +-1.
inline constexpr double kRhoSnap = 1e-12;

inline double std_normal_pdf(double x) noexcept {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Phi(x) through the complementary error function; absolute error is a few
/// ulps of 1, and the lower tail decays to +0 without going negative.
inline double std_normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

/// Density of the standard bivariate normal with correlation rho.
/// Throws DomainError for |rho| >= 1.
double binormal_pdf(double x, double y, double rho);

/// P(X <= x, Y <= y) for the standard bivariate normal with correlation rho.
/// rho within kRhoSnap of +-1 is snapped to the exact degenerate limits;
/// anything further outside [-1, 1] throws DomainError.
double binormal_cdf(double x, double y, double rho);

/// Upper orthant P(X > h, Y > k). Drezner-Wesolowsky with Genz's Gauss-Legendre
/// refinements; |rho| < 1 is required here.
double binormal_upper(double h, double k, double rho) noexcept;

namespace detail {
inline constexpr double kCdfTableLimit = 9.0;
inline constexpr int kCdfTablePerUnit = 64;
/// Six polynomial coefficients per piece, pieces laid out contiguously.
const double* hermite_cdf_coeffs() noexcept;
}  // namespace detail

/// Phi(z) from a precomputed table of quintic Hermite pieces (spacing 1/64 on
/// [-9, 9]); absolute error below 1e-14, and exactly 0 or 1 beyond the table.
/// Several times cheaper than erfc, for quadrature inner loops.
inline double fast_normal_cdf(double z) noexcept {
  using namespace detail;
  if (z <= -kCdfTableLimit) return 0.0;
  if (z >= kCdfTableLimit) return 1.0;
  static const double* const coeffs = hermite_cdf_coeffs();
  constexpr int pieces = static_cast<int>(2 * kCdfTableLimit) * kCdfTablePerUnit;
  const double pos = (z + kCdfTableLimit) * kCdfTablePerUnit;
  const int idx = std::min(static_cast<int>(pos), pieces - 1);
  const double t = pos - idx;
  const double* c = coeffs + 6 * idx;
  return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
}

}  // namespace mnngp
