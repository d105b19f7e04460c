#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cidml {

// Pairwise (tree-order) summation. Deterministic regardless of how the
// work would be split across threads, and more accurate than a running sum.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

// Sample variance (denominator n - 1).
double sample_variance(std::span<const double> values);

// Empirical quantile with linear interpolation between order statistics
// (the common "type 7" rule). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double q);

// Inverse standard normal CDF (Wichura's AS 241, double precision).
double normal_quantile(double p);

// Standard normal CDF.
double normal_cdf(double x);

// Two-sided critical value for a central confidence interval at `level`.
double normal_critical_value(double level);

// P(X <= k) for X ~ Binomial(n, 1/2), computed exactly in log space.
double binomial_half_cdf(int k, int n);

}  // namespace cidml
