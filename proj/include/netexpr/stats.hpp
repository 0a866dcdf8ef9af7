#pragma once

#include <span>

namespace netexpr {

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares y ~ slope * x + intercept. R^2 is 1 - SS_res/SS_tot,
// reported as 1 when y is constant and fitted exactly.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace netexpr
