#include "naflab/attack.hpp"

#include <cmath>
#include <ostream>

#include "naflab/errors.hpp"
#include "naflab/io.hpp"
#include "naflab/stats.hpp"

namespace naflab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

ScoreFunction ScoreFunction::indicator() {
    ScoreFunction s;
    s.kind = Kind::Indicator;
    s.s_tar = 1.0;
    return s;
}

ScoreFunction ScoreFunction::negative_distance(double radius) {
    ScoreFunction s;
    s.kind = Kind::NegativeDistance;
    s.s_tar = -radius;
    return s;
}

double score_sample(const ScoreFunction& score, const ModelSuite& suite, const SamplePoint& y) {
    if (score.kind == ScoreFunction::Kind::Indicator)
        return suite.infringing.contains(y) ? 1.0 : 0.0;
    if (suite.target.kind != SamplePoint::Kind::Continuous)
        throw UnsupportedFamily("distance scoring needs a continuous family");
    if (y.kind != SamplePoint::Kind::Continuous || y.value.size() != suite.target.value.size())
        throw ShapeMismatch("sample does not match the target shape");
    return -(y.value - suite.target.value).norm();
}

PromptSource PromptSource::fixed(Prompt prompt) {
    PromptSource s;
    s.kind = Kind::Fixed;
    s.prompt = std::move(prompt);
    return s;
}

PromptSource PromptSource::bandit(PolicyConfig config, std::vector<Prompt> candidates) {
    PromptSource s;
    s.kind = Kind::Bandit;
    s.config = std::move(config);
    s.candidates = std::move(candidates);
    return s;
}

AttackTrace run_amplification_trial(const ModelSuite& suite,
                                    const std::vector<ProtectionPolicy>& policies,
                                    const PromptSource& source, std::size_t T,
                                    const ScoreFunction& score, std::size_t max_attempts,
                                    RandomStream& rng) {
    if (T < 1)
        throw InvalidSpec("need at least one interaction");
    const bool bandit = source.kind == PromptSource::Kind::Bandit;
    if (bandit) {
        if (source.candidates.empty())
            throw EmptyArms("bandit source needs candidate prompts");
        if (source.config.arms != source.candidates.size())
            throw ShapeMismatch("arm count must match the candidate count");
        if (policies.size() != source.candidates.size())
            throw ShapeMismatch("one policy per candidate prompt");
        if (source.config.warmup * source.config.arms > T)
            throw ConfigError("bandit.warmup", "warm-up rounds exceed the step budget");
    } else if (policies.size() != 1) {
        throw ShapeMismatch("a fixed source takes exactly one policy");
    }

    std::vector<ArmState> state(bandit ? source.candidates.size() : 0);
    AttackTrace trace;
    trace.records.reserve(T);
    bool any_accepted = false;
    for (std::size_t t = 1; t <= T; ++t) {
        std::size_t arm = bandit ? select_arm(source.config, state, t, rng) : 0;
        const Prompt& x = bandit ? source.candidates[arm] : source.prompt;
        ProtectedSampleOutcome outcome =
            protected_sample(suite, x, policies[arm], max_attempts, rng);
        double r = kNegInf;
        if (outcome.accepted) {
            r = score_sample(score, suite, outcome.y);
            any_accepted = true;
            if (r > trace.best_score) {
                trace.best_score = r;
                trace.best = outcome.y;
            }
        }
        if (bandit) update_arm(state, arm, r);
        trace.records.push_back({t, arm, outcome.accepted, outcome.attempts, r});
    }
    trace.success = any_accepted && trace.best_score >= score.s_tar;
    return trace;
}

std::size_t required_steps(double sigma, double eps_fail) {
    if (!(sigma > 0.0) || !(sigma < 1.0))
        throw DomainError("sigma must lie in (0, 1)");
    if (!(eps_fail > 0.0) || !(eps_fail < 1.0))
        throw DomainError("eps_fail must lie in (0, 1)");
    const double log_keep = std::log1p(-sigma);
    const double log_eps = std::log(eps_fail);
    auto below = [&](std::size_t t) { return static_cast<double>(t) * log_keep < log_eps; };
    double ratio = log_eps / log_keep;
    auto t = static_cast<std::size_t>(ratio) + 1;
    while (t > 1 && below(t - 1)) --t;
    while (!below(t)) ++t;
    return t;
}

double amplified_success_prob(double sigma, std::size_t T) {
    if (!(sigma >= 0.0) || !(sigma <= 1.0))
        throw DomainError("sigma must lie in [0, 1]");
    if (T == 0) return 0.0;
    return -std::expm1(static_cast<double>(T) * std::log1p(-sigma));
}

RateEstimate estimate_single_shot_sigma(const ModelSuite& suite, const Prompt& x,
                                        const ProtectionPolicy& policy, std::size_t n_samples,
                                        RandomStream& rng) {
    RateEstimate est;
    if (suite.family == Family::Tabular) {
        TabularLaw law = enumerate_outcomes(suite, x);
        double nu = 0.0;
        double infringing = 0.0;
        for (std::size_t o = 0; o < law.p.size(); ++o) {
            if (law.rho[o] > policy.k_x) continue;
            nu += law.p[o];
            if (suite.infringing.contains(SamplePoint::categorical(o)))
                infringing += law.p[o];
        }
        if (nu == 0.0)
            throw EmptyAcceptanceRegion("no outcome passes the threshold");
        est.value = infringing / nu;
        return est;
    }
    if (n_samples == 0)
        throw InvalidSampleCount("estimate needs at least one sample");
    std::size_t accepted = 0;
    std::size_t infringing = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        SamplePoint y = suite.sample_p(x, rng);
        if (rho(suite, x, y) > policy.k_x) continue;
        ++accepted;
        if (suite.infringing.contains(y)) ++infringing;
    }
    if (accepted == 0)
        throw EmptyAcceptanceRegion("no draw passed the threshold");
    est.value = static_cast<double>(infringing) / static_cast<double>(accepted);
    est.ci_halfwidth = wald_halfwidth(est.value, accepted);
    return est;
}

double simulate_theorem1(double sigma, double eps_fail, std::size_t trials, RandomStream& rng) {
    if (!(sigma > 0.0) || sigma > 1.0)
        throw DomainError("sigma must lie in (0, 1]");
    if (!(eps_fail > 0.0) || !(eps_fail < 1.0))
        throw DomainError("eps_fail must lie in (0, 1)");
    if (trials == 0)
        throw DomainError("need at least one trial");
    std::size_t steps = sigma == 1.0 ? 1 : required_steps(sigma, eps_fail);
    std::size_t successes = 0;
    for (std::size_t i = 0; i < trials; ++i) {
        RandomStream trial_rng = rng.child("trial", i);
        for (std::size_t t = 0; t < steps; ++t) {
            if (trial_rng.bernoulli(sigma)) {
                ++successes;
                break;
            }
        }
    }
    return static_cast<double>(successes) / static_cast<double>(trials);
}

void write_trace_header(std::ostream& out) {
    out << "trial,step,arm,accepted,attempts,score,best_so_far\n";
}

void append_trace_rows(std::ostream& out, std::size_t trial, const AttackTrace& trace) {
    double best = kNegInf;
    for (const AttackRecord& rec : trace.records) {
        if (rec.score > best) best = rec.score;
        out << trial << ',' << rec.step << ',' << rec.arm << ',' << (rec.accepted ? 1 : 0) << ','
            << rec.attempts << ',' << format_double(rec.score) << ',' << format_double(best)
            << '\n';
    }
}

}  // namespace naflab
