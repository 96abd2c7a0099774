#pragma once

#include <span>
#include <vector>

namespace surrogate::stats {

/// q-th percentile (q in [0, 100]) with linear interpolation between closest
/// ranks: position q/100 * (n - 1) in the sorted sample.
double percentile(std::span<const double> values, double q);

double mean(std::span<const double> values);

/// Sample variance with (n - 1) denominator; 0 for fewer than two values.
double sample_variance(std::span<const double> values);

/// Population variance with n denominator.
double population_variance(std::span<const double> values);

double normal_cdf(double z);
double normal_quantile(double p);

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1): sum_i w_i f(x_i).
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
/// Rules are cached per size; the returned reference is stable.
const QuadratureRule& gauss_hermite(int n);

}  // namespace surrogate::stats
