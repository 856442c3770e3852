#include "naflab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <utility>

#include "naflab/errors.hpp"
#include "naflab/io.hpp"
#include "naflab/stats.hpp"

namespace naflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double nearest_rank(const std::vector<double>& sorted, double p) {
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

double gmm2_threshold(const std::vector<double>& scores) {
    const std::size_t n = scores.size();
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (hi <= lo) throw Degenerate("all scores are identical");

    double mu[2] = {nearest_rank(sorted, 0.25), nearest_rank(sorted, 0.75)};
    if (mu[0] == mu[1]) {
        mu[0] = lo;
        mu[1] = hi;
    }
    double w[2] = {0.5, 0.5};
    const MeanVar mv = mean_var(sorted.data(), n);
    // Relative variance floor keeps the fit affine-equivariant while ruling
    // out zero-variance collapse on clustered data.
    const double var_floor = std::max((hi - lo) * (hi - lo) * 1e-12, 1e-300);
    double var[2] = {std::max(mv.var, var_floor), std::max(mv.var, var_floor)};

    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    double prev_ll = -kInf;
    for (std::size_t iter = 0; iter < 200; ++iter) {
        double ll = 0.0;
        double r_sum[2] = {0.0, 0.0};
        double rs_sum[2] = {0.0, 0.0};
        double rs2_sum[2] = {0.0, 0.0};
        for (const double s : sorted) {
            double lp[2];
            for (int j = 0; j < 2; ++j) {
                const double d = s - mu[j];
                lp[j] = std::log(w[j]) - 0.5 * (log_two_pi + std::log(var[j]) + d * d / var[j]);
            }
            const double m = std::max(lp[0], lp[1]);
            const double lse = m + std::log(std::exp(lp[0] - m) + std::exp(lp[1] - m));
            ll += lse;
            const double r0 = std::exp(lp[0] - lse);
            const double r[2] = {r0, 1.0 - r0};
            for (int j = 0; j < 2; ++j) {
                r_sum[j] += r[j];
                rs_sum[j] += r[j] * s;
                rs2_sum[j] += r[j] * s * s;
            }
        }
        for (int j = 0; j < 2; ++j) {
            if (r_sum[j] < 1e-12) continue;  // dead component keeps its parameters
            w[j] = r_sum[j] / static_cast<double>(n);
            mu[j] = rs_sum[j] / r_sum[j];
            var[j] = std::max(rs2_sum[j] / r_sum[j] - mu[j] * mu[j], var_floor);
        }
        const double w_total = w[0] + w[1];
        w[0] /= w_total;
        w[1] /= w_total;
        if (std::abs(ll - prev_ll) < 1e-8) break;
        prev_ll = ll;
    }
    return 0.5 * (mu[0] + mu[1]);
}

void check_rule_family(const ModelSuite& suite, const InfringementRule& rule) {
    const bool tabular = suite.family == Family::Tabular;
    if (tabular && rule.kind != InfringementRule::Kind::ExplicitSet)
        throw ShapeMismatch("tabular suites need an explicit-set rule");
    if (!tabular && rule.kind != InfringementRule::Kind::DistanceBall)
        throw ShapeMismatch("continuous suites need a distance-ball rule");
}

ProtectionPolicy calibrated_policy(const ModelSuite& suite, const Prompt& x, double ar,
                                   std::size_t calib_samples, RandomStream& rng) {
    RandomStream calib = rng.child("calibrate");
    return calibrate_k(suite, x, ar, calib_samples, calib);
}

}  // namespace

InfringementRule InfringementRule::explicit_set(std::vector<std::size_t> ids) {
    InfringementRule r;
    r.kind = Kind::ExplicitSet;
    r.outcomes = std::move(ids);
    return r;
}

InfringementRule InfringementRule::distance_ball(double radius) {
    if (!(radius >= 0.0)) throw DomainError("ball radius must be non-negative");
    InfringementRule r;
    r.kind = Kind::DistanceBall;
    r.radius = radius;
    return r;
}

InfringementRule InfringementRule::from_suite(const ModelSuite& suite) {
    if (suite.infringing.kind == InfringingSet::Kind::Outcomes)
        return explicit_set(suite.infringing.outcomes);
    return distance_ball(suite.infringing.radius);
}

InfringingSet InfringementRule::materialize(const ModelSuite& suite) const {
    if (kind == Kind::ExplicitSet) return InfringingSet::from_outcomes(outcomes);
    if (suite.target.kind != SamplePoint::Kind::Continuous)
        throw ShapeMismatch("distance-ball rule needs a continuous target");
    return InfringingSet::ball(suite.target.value, radius);
}

ScoreFunction InfringementRule::induced_score() const {
    if (kind == Kind::ExplicitSet) return ScoreFunction::indicator();
    return ScoreFunction::negative_distance(radius);
}

ThresholdMethod ThresholdMethod::percentile(double p) {
    ThresholdMethod m;
    m.kind = Kind::Percentile;
    m.p = p;
    return m;
}

ThresholdMethod ThresholdMethod::gmm2() {
    ThresholdMethod m;
    m.kind = Kind::Gmm2;
    return m;
}

double infringement_threshold(const std::vector<double>& scores, const ThresholdMethod& method) {
    if (scores.empty()) throw Empty("no calibration scores");
    if (method.kind == ThresholdMethod::Kind::Percentile) {
        if (!(method.p > 0.0) || !(method.p <= 1.0))
            throw DomainError("percentile level must lie in (0, 1]");
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        return nearest_rank(sorted, method.p);
    }
    return gmm2_threshold(scores);
}

double cir(const ModelSuite& suite, const Prompt& x, const InfringementRule& rule,
           std::size_t n_samples, RandomStream& rng) {
    check_rule_family(suite, rule);
    const InfringingSet set = rule.materialize(suite);
    if (suite.family == Family::Tabular) {
        const TabularLaw law = enumerate_outcomes(suite, x);
        double mass = 0.0;
        for (std::size_t o = 0; o < law.p.size(); ++o)
            if (set.contains(SamplePoint::categorical(o))) mass += law.p[o];
        return mass;
    }
    if (n_samples == 0) throw InvalidSampleCount("need at least one sample");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_samples; ++i)
        if (set.contains(suite.sample_p(x, rng))) ++hits;
    return static_cast<double>(hits) / static_cast<double>(n_samples);
}

AttackMode AttackMode::single() {
    AttackMode m;
    m.kind = Kind::Single;
    return m;
}

AttackMode AttackMode::amplified(std::size_t steps) {
    AttackMode m;
    m.kind = Kind::Amplified;
    m.steps = steps;
    return m;
}

AttackMode AttackMode::bandit_amplified(PolicyConfig config, std::size_t steps) {
    AttackMode m;
    m.kind = Kind::BanditAmplified;
    m.bandit = config;
    m.steps = steps;
    return m;
}

std::string AttackMode::tag() const {
    switch (kind) {
        case Kind::Single: return "single";
        case Kind::Amplified: return "amplified";
        case Kind::BanditAmplified: return "bandit";
    }
    return "single";
}

RateEstimate far_at_ar(const ModelSuite& suite, const PromptSource& source,
                       const InfringementRule& rule, double ar, const AttackMode& mode,
                       std::size_t trials, RandomStream& rng, std::size_t calib_samples,
                       std::size_t max_attempts) {
    check_rule_family(suite, rule);
    if (trials == 0) throw InvalidSampleCount("need at least one trial");

    ModelSuite judged = suite;
    judged.infringing = rule.materialize(suite);
    const ScoreFunction score = rule.induced_score();

    if (mode.kind == AttackMode::Kind::Single) {
        if (source.kind != PromptSource::Kind::Fixed)
            throw InvalidSpec("single-draw mode needs a fixed prompt");
        const ProtectionPolicy policy =
            calibrated_policy(judged, source.prompt, ar, calib_samples, rng);
        RandomStream draw = rng.child("single");
        return estimate_single_shot_sigma(judged, source.prompt, policy, trials, draw);
    }

    std::vector<ProtectionPolicy> policies;
    PromptSource src = source;
    if (mode.kind == AttackMode::Kind::Amplified) {
        if (source.kind != PromptSource::Kind::Fixed)
            throw InvalidSpec("amplified mode needs a fixed prompt");
        policies.push_back(calibrated_policy(judged, source.prompt, ar, calib_samples, rng));
    } else {
        if (source.kind != PromptSource::Kind::Bandit)
            throw InvalidSpec("bandit mode needs candidate prompts");
        PolicyConfig cfg = mode.bandit;
        cfg.arms = source.candidates.size();
        cfg.s_tar = score.s_tar;
        for (std::size_t i = 0; i < source.candidates.size(); ++i) {
            RandomStream calib = rng.child("calibrate", i);
            policies.push_back(calibrate_k(judged, source.candidates[i], ar, calib_samples, calib));
        }
        src = PromptSource::bandit(cfg, source.candidates);
    }

    std::size_t successes = 0;
    for (std::size_t i = 0; i < trials; ++i) {
        RandomStream trial = rng.child("trial", i);
        const AttackTrace trace =
            run_amplification_trial(judged, policies, src, mode.steps, score, max_attempts, trial);
        if (trace.success) ++successes;
    }
    const double far = static_cast<double>(successes) / static_cast<double>(trials);
    return RateEstimate{far, wald_halfwidth(far, trials)};
}

FarArCurve far_ar_curve(const ModelSuite& suite, const PromptSource& source,
                        const InfringementRule& rule, const std::vector<double>& ar_grid,
                        const AttackMode& mode, std::size_t trials, RandomStream& rng,
                        const std::string& prompt_tag, std::size_t calib_samples,
                        std::size_t max_attempts) {
    if (ar_grid.empty()) throw InvalidGrid("acceptance-rate grid is empty");
    for (std::size_t i = 0; i < ar_grid.size(); ++i) {
        if (!(ar_grid[i] > 0.0) || !(ar_grid[i] <= 1.0))
            throw InvalidGrid("acceptance rates must lie in (0, 1]");
        if (i > 0 && !(ar_grid[i] > ar_grid[i - 1]))
            throw InvalidGrid("acceptance-rate grid must be strictly increasing");
    }
    FarArCurve curve;
    curve.points.reserve(ar_grid.size());
    for (std::size_t i = 0; i < ar_grid.size(); ++i) {
        RandomStream point = rng.child("point", i);
        const RateEstimate est =
            far_at_ar(suite, source, rule, ar_grid[i], mode, trials, point, calib_samples,
                      max_attempts);
        FarArPoint row;
        row.ar = ar_grid[i];
        row.far = est.value;
        row.ci_halfwidth = est.ci_halfwidth;
        row.trials = trials;
        row.mode = mode.tag();
        row.prompt = prompt_tag;
        curve.points.push_back(std::move(row));
    }
    return curve;
}

AuditResult eq4_audit(std::size_t cases, RandomStream& rng, std::size_t max_outcomes,
                      std::size_t max_cover) {
    if (cases == 0) throw InvalidSampleCount("need at least one audit case");
    if (max_outcomes < 2 || max_cover < 1) throw InvalidSpec("audit space is too small");

    AuditResult result;
    result.cases = cases;
    for (std::size_t i = 0; i < cases; ++i) {
        RandomStream r = rng.child("case", i);
        const std::size_t n_out = 2 + r.uniform_index(max_outcomes - 1);
        const std::size_t m = 1 + r.uniform_index(max_cover);
        const std::size_t n_prompt = 1 + r.uniform_index(3);

        ModelSuite suite;
        suite.id = "audit";
        suite.family = Family::Tabular;
        RandomStream vr = r.child("vocab");
        suite.vocab = Vocabulary::random(n_prompt, 4, vr);
        for (std::size_t j = 0; j < m; ++j) {
            Eigen::MatrixXd table(static_cast<Eigen::Index>(n_prompt),
                                  static_cast<Eigen::Index>(n_out));
            for (Eigen::Index row = 0; row < table.rows(); ++row) {
                double total = 0.0;
                for (Eigen::Index col = 0; col < table.cols(); ++col) {
                    table(row, col) = -std::log(r.uniform_pos());
                    total += table(row, col);
                }
                table.row(row) /= total;
            }
            suite.cover.emplace_back(TabularModel(std::move(table)));
        }
        suite.safe_index = r.uniform_index(m);

        std::vector<std::size_t> infringing;
        for (std::size_t o = 0; o < n_out; ++o)
            if (r.bernoulli(0.5)) infringing.push_back(o);
        suite.target = SamplePoint::categorical(infringing.empty() ? 0 : infringing.front());
        suite.infringing = InfringingSet::from_outcomes(infringing);
        suite.caption = Prompt::from_tokens(
            suite.vocab, {static_cast<TokenId>(r.uniform_index(n_prompt))});
        suite.validate();

        const Prompt x = Prompt::from_tokens(
            suite.vocab, {static_cast<TokenId>(r.uniform_index(n_prompt))});
        const double ar = 1.0 - r.uniform();  // in (0, 1]
        ProtectionPolicy policy = calibrate_k(suite, x, ar, 0, r);
        // Sometimes probe a threshold strictly between support values.
        if (r.bernoulli(0.5) && std::isfinite(policy.k_x)) policy.k_x += 0.5 * r.uniform();

        const NafBound bound = naf_bound_check(suite, x, policy);
        if (!bound.holds) ++result.violations;
    }
    return result;
}

void write_curve_header(std::ostream& out) {
    out << "suite_id,prompt_id,mode,ar,far,ci_halfwidth,trials,seed\n";
}

void append_curve_rows(std::ostream& out, const std::string& suite_id, const FarArCurve& curve,
                       std::uint64_t seed) {
    for (const FarArPoint& p : curve.points) {
        out << suite_id << ',' << p.prompt << ',' << p.mode << ',' << format_double(p.ar) << ','
            << format_double(p.far) << ',' << format_double(p.ci_halfwidth) << ',' << p.trials
            << ',' << seed << '\n';
    }
}

}  // namespace naflab
