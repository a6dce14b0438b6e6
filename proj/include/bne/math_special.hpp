#pragma once

#include <Eigen/Dense>

// Scalar special functions and quadrature helpers shared across the library.
// All functions are pure and thread-safe.

namespace bne {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kSqrt2Pi = 2.5066282746310002;
inline constexpr double kLog2Pi = 1.8378770664093455;

double normal_pdf(double x);
double normal_cdf(double x);

// log Phi(x), switching to an asymptotic Mills-ratio expansion below x = -8
// where erfc loses relative accuracy in the log.
double normal_log_cdf(double x);

// d/dx log Phi(x) = phi(x)/Phi(x), stable in the deep left tail.
double normal_log_cdf_grad(double x);

// Inverse standard normal CDF (Acklam's rational approximation plus one
// Halley refinement); |error| < 1e-12 for p in (0, 1).
double normal_quantile(double p);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// CDF of the inverse gamma distribution with shape a, scale b.
double inv_gamma_cdf(double x, double a, double b);

// Shape/scale Weibull: cdf and mean scale*Gamma(1 + 1/shape).
double weibull_cdf(double x, double shape, double scale = 1.0);
double weibull_mean(double shape, double scale = 1.0);

// Trapezoidal quadrature of f sampled on an increasing grid.
double trapezoid(const Eigen::VectorXd& f, const Eigen::VectorXd& grid);

// Linear interpolation of (grid, values) at x, clamped to the grid ends.
double interp_linear(const Eigen::VectorXd& grid, const Eigen::VectorXd& values, double x);

}  // namespace bne
