#include "naflab/stats.hpp"

#include <cmath>

namespace naflab {

double normal_cdf(double z) {
    // Evaluate through erfc on the side that keeps the argument positive;
    // the two branches then sum to 1 exactly by construction.
    const double t = z * M_SQRT1_2;
    if (z >= 0.0) return 1.0 - 0.5 * std::erfc(t);
    return 0.5 * std::erfc(-t);
}

double wald_halfwidth(double p_hat, std::size_t n) {
    if (n == 0) return 1.0;
    return 1.959963984540054 * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n));
}

MeanVar mean_var(const double* data, std::size_t n) {
    MeanVar out;
    if (n == 0) return out;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += data[i];
    out.mean = sum / static_cast<double>(n);
    if (n < 2) return out;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = data[i] - out.mean;
        ss += d * d;
    }
    out.var = ss / static_cast<double>(n - 1);
    return out;
}

}  // namespace naflab
