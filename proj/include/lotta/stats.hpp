#pragma once

#include <span>
#include <vector>

namespace lotta::stats {

double mean(std::span<const double> xs);
/// Sample variance with n - 1 denominator; 0 for fewer than two values.
double variance(std::span<const double> xs);
double sd(std::span<const double> xs);

/// Linear-interpolation quantile of already sorted values (type 7).
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> xs, double p);
double median(std::vector<double> xs);

double inv_logit(double x);
double logit(double p);

}  // namespace lotta::stats
