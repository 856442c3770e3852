#pragma once

#include <cstddef>

namespace naflab {

// Standard normal CDF. Built so that normal_cdf(-z) + normal_cdf(z) == 1
// holds exactly in floating point; absolute error is a few ulp.
double normal_cdf(double z);

// Half-width of a 95% Wald interval for a binomial proportion.
double wald_halfwidth(double p_hat, std::size_t n);

struct MeanVar {
    double mean = 0.0;
    double var = 0.0;  // N-1 denominator
};

MeanVar mean_var(const double* data, std::size_t n);

}  // namespace naflab
