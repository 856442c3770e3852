#pragma once

#include <cstddef>
#include <vector>

#include "naflab/suite.hpp"

namespace naflab {

// Per-prompt acceptance threshold in bits. +inf is the accept-everything
// sentinel produced by calibrating at full acceptance rate.
struct ProtectionPolicy {
    double k_x = 0.0;
    double target_ar = 1.0;
    std::size_t calibration_samples = 0;  // 0 when calibrated exactly
};

struct ProtectedSampleOutcome {
    bool accepted = false;
    SamplePoint y;  // meaningful only when accepted
    std::size_t attempts = 0;
};

struct RateEstimate {
    double value = 0.0;
    double ci_halfwidth = 0.0;
};

struct NafBound {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// Worst-case log-likelihood ratio in bits: max over the cover of
// log2 p(y|x) - log2 q(y|x). +inf when some cover member assigns zero
// probability to a point the mixture can produce.
double rho(const ModelSuite& suite, const Prompt& x, const SamplePoint& y);

// Exact outcome-by-outcome law of a tabular suite at one prompt.
struct TabularLaw {
    std::vector<double> p;        // mixture probability per outcome
    std::vector<double> rho;      // likelihood-ratio statistic per outcome
    std::vector<double> safe_q;   // safe-member probability per outcome
};
TabularLaw enumerate_outcomes(const ModelSuite& suite, const Prompt& x);

// Smallest threshold whose acceptance rate weakly exceeds target_ar.
// Tabular suites are calibrated exactly by enumeration; continuous suites
// use the nearest-rank-from-above quantile of n_samples draws.
ProtectionPolicy calibrate_k(const ModelSuite& suite, const Prompt& x, double target_ar,
                             std::size_t n_samples, RandomStream& rng);

// Rejection sampler: draws from the mixture until the ratio statistic
// passes the threshold. Conditional on acceptance the law is exactly the
// truncated renormalized mixture.
ProtectedSampleOutcome protected_sample(const ModelSuite& suite, const Prompt& x,
                                        const ProtectionPolicy& policy, std::size_t max_attempts,
                                        RandomStream& rng);

// Probability that a raw draw passes the filter. Exact on tabular suites
// (zero half-width), Monte Carlo with a 95% Wald interval otherwise.
RateEstimate acceptance_rate(const ModelSuite& suite, const Prompt& x,
                             const ProtectionPolicy& policy, std::size_t n_samples,
                             RandomStream& rng);

// Exact check that the filtered infringement mass is controlled by
// 2^k / nu times the safe member's mass on the infringing set. Tabular only.
NafBound naf_bound_check(const ModelSuite& suite, const Prompt& x,
                         const ProtectionPolicy& policy);

}  // namespace naflab
