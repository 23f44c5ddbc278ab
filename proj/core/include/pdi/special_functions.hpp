#pragma once

namespace pdi::math {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse of the standard normal CDF for p in (0, 1).
double normal_quantile(double p);

/// Regularized lower and upper incomplete gamma functions P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Upper tail of the chi-squared distribution with `df` degrees of freedom.
double chi_squared_sf(double statistic, double df);

}  // namespace pdi::math
