#include "naflab/protection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "naflab/errors.hpp"
#include "naflab/stats.hpp"

namespace naflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ratio_term(double log2_p, double log2_q) {
    if (log2_p == -kInf) return -kInf;
    if (log2_q == -kInf) return kInf;
    return log2_p - log2_q;
}

const TabularModel& tabular_member(const ModelSuite& suite, std::size_t member) {
    const auto* m = std::get_if<TabularModel>(&suite.cover[member]);
    if (m == nullptr)
        throw UnsupportedFamily("operation is exact only for tabular suites");
    return *m;
}

}  // namespace

double rho(const ModelSuite& suite, const Prompt& x, const SamplePoint& y) {
    double log2_p = suite.log2_p(x, y);
    double worst = -kInf;
    for (std::size_t i = 0; i < suite.cover_size(); ++i)
        worst = std::max(worst, ratio_term(log2_p, suite.log2_q(i, x, y)));
    return worst;
}

TabularLaw enumerate_outcomes(const ModelSuite& suite, const Prompt& x) {
    const TabularModel& safe = tabular_member(suite, suite.safe_index);
    std::size_t outcomes = safe.outcome_count();
    TabularLaw law;
    law.p.resize(outcomes);
    law.rho.resize(outcomes);
    law.safe_q.resize(outcomes);
    for (std::size_t o = 0; o < outcomes; ++o) {
        // Plain averaging keeps the mixture probabilities exact; the
        // log-domain path would round-trip through exp2(log2(.)).
        double mass = 0.0;
        for (std::size_t i = 0; i < suite.cover_size(); ++i) {
            const TabularModel& q = tabular_member(suite, i);
            mass += q.prob(q.row_for(x), o);
        }
        law.p[o] = mass / static_cast<double>(suite.cover_size());
        law.rho[o] = rho(suite, x, SamplePoint::categorical(o));
        law.safe_q[o] = safe.prob(safe.row_for(x), o);
    }
    return law;
}

ProtectionPolicy calibrate_k(const ModelSuite& suite, const Prompt& x, double target_ar,
                             std::size_t n_samples, RandomStream& rng) {
    if (!(target_ar > 0.0) || target_ar > 1.0)
        throw InvalidAR("target acceptance rate must lie in (0, 1]");
    ProtectionPolicy policy;
    policy.target_ar = target_ar;

    if (suite.family == Family::Tabular) {
        TabularLaw law = enumerate_outcomes(suite, x);
        std::vector<std::pair<double, double>> support;  // (rho, mass)
        for (std::size_t o = 0; o < law.p.size(); ++o)
            if (law.p[o] > 0.0) support.emplace_back(law.rho[o], law.p[o]);
        std::sort(support.begin(), support.end());
        if (target_ar == 1.0) {
            policy.k_x = support.back().first;
            return policy;
        }
        double cum = 0.0;
        for (const auto& [r, mass] : support) {
            cum += mass;
            if (cum >= target_ar - 1e-15) {
                policy.k_x = r;
                return policy;
            }
        }
        policy.k_x = support.back().first;
        return policy;
    }

    if (target_ar == 1.0) {
        policy.k_x = kInf;
        policy.calibration_samples = n_samples;
        return policy;
    }
    if (n_samples == 0)
        throw InvalidSampleCount("continuous calibration needs at least one sample");
    std::vector<double> stats(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        stats[i] = rho(suite, x, suite.sample_p(x, rng));
    std::sort(stats.begin(), stats.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(target_ar * static_cast<double>(n_samples)));
    rank = std::clamp<std::size_t>(rank, 1, n_samples);
    policy.k_x = stats[rank - 1];
    policy.calibration_samples = n_samples;
    return policy;
}

ProtectedSampleOutcome protected_sample(const ModelSuite& suite, const Prompt& x,
                                        const ProtectionPolicy& policy, std::size_t max_attempts,
                                        RandomStream& rng) {
    if (max_attempts < 1)
        throw InvalidSpec("need at least one attempt");
    ProtectedSampleOutcome out;
    for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
        SamplePoint y = suite.sample_p(x, rng);
        if (rho(suite, x, y) <= policy.k_x) {
            out.accepted = true;
            out.y = std::move(y);
            out.attempts = attempt;
            return out;
        }
    }
    out.accepted = false;
    out.attempts = max_attempts;
    return out;
}

RateEstimate acceptance_rate(const ModelSuite& suite, const Prompt& x,
                             const ProtectionPolicy& policy, std::size_t n_samples,
                             RandomStream& rng) {
    RateEstimate est;
    if (policy.k_x == kInf) {
        est.value = 1.0;
        return est;
    }
    if (suite.family == Family::Tabular) {
        TabularLaw law = enumerate_outcomes(suite, x);
        for (std::size_t o = 0; o < law.p.size(); ++o)
            if (law.rho[o] <= policy.k_x) est.value += law.p[o];
        return est;
    }
    if (n_samples == 0)
        throw InvalidSampleCount("continuous estimate needs at least one sample");
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < n_samples; ++i)
        if (rho(suite, x, suite.sample_p(x, rng)) <= policy.k_x) ++accepted;
    est.value = static_cast<double>(accepted) / static_cast<double>(n_samples);
    est.ci_halfwidth = wald_halfwidth(est.value, n_samples);
    return est;
}

NafBound naf_bound_check(const ModelSuite& suite, const Prompt& x,
                         const ProtectionPolicy& policy) {
    if (suite.family != Family::Tabular)
        throw UnsupportedFamily("exact bound check needs a tabular suite");
    TabularLaw law = enumerate_outcomes(suite, x);
    double nu = 0.0;
    double accepted_infringing = 0.0;
    double safe_mass = 0.0;
    for (std::size_t o = 0; o < law.p.size(); ++o) {
        bool infringes = suite.infringing.contains(SamplePoint::categorical(o));
        if (law.rho[o] <= policy.k_x) {
            nu += law.p[o];
            if (infringes) accepted_infringing += law.p[o];
        }
        if (infringes) safe_mass += law.safe_q[o];
    }
    if (nu == 0.0)
        throw EmptyAcceptanceRegion("no outcome passes the threshold");
    NafBound bound;
    bound.lhs = accepted_infringing / nu;
    if (std::isinf(policy.k_x))
        bound.rhs = kInf;
    else if (safe_mass == 0.0)
        bound.rhs = 0.0;
    else
        bound.rhs = std::exp2(policy.k_x) / nu * safe_mass;
    bound.holds = bound.lhs <= bound.rhs + 1e-12;
    return bound;
}

}  // namespace naflab
