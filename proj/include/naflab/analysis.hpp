#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "naflab/attack.hpp"
#include "naflab/protection.hpp"
#include "naflab/suite.hpp"

namespace naflab {

// How a sample is judged infringing when computing metrics: an explicit
// outcome set, or a distance ball whose radius was fixed up front or fitted
// from calibration scores.
struct InfringementRule {
    enum class Kind { ExplicitSet, DistanceBall };
    Kind kind = Kind::ExplicitSet;
    std::vector<std::size_t> outcomes;
    double radius = 0.0;

    static InfringementRule explicit_set(std::vector<std::size_t> ids);
    static InfringementRule distance_ball(double radius);
    // Mirrors the suite's own infringing set.
    static InfringementRule from_suite(const ModelSuite& suite);

    InfringingSet materialize(const ModelSuite& suite) const;
    ScoreFunction induced_score() const;
};

struct ThresholdMethod {
    enum class Kind { Percentile, Gmm2 };
    Kind kind = Kind::Percentile;
    double p = 0.5;

    static ThresholdMethod percentile(double p);
    static ThresholdMethod gmm2();
};

// Percentile: nearest-rank score (smallest score whose empirical CDF weakly
// exceeds p). Gmm2: two-component 1-D Gaussian EM, returns the midpoint of
// the fitted means.
double infringement_threshold(const std::vector<double>& scores, const ThresholdMethod& method);

// Infringement rate of the unfiltered mixture. Exact on tabular suites.
double cir(const ModelSuite& suite, const Prompt& x, const InfringementRule& rule,
           std::size_t n_samples, RandomStream& rng);

struct AttackMode {
    enum class Kind { Single, Amplified, BanditAmplified };
    Kind kind = Kind::Single;
    std::size_t steps = 1;  // interaction budget for the amplified modes
    PolicyConfig bandit;

    static AttackMode single();
    static AttackMode amplified(std::size_t steps);
    static AttackMode bandit_amplified(PolicyConfig config, std::size_t steps);
    std::string tag() const;
};

// FAR at a calibrated acceptance rate. Single mode is the infringing
// fraction among accepted draws (exact on tabular suites); the amplified
// modes run full attack trials and report the trial success fraction. The
// bandit target score is taken from the rule-induced score function.
RateEstimate far_at_ar(const ModelSuite& suite, const PromptSource& source,
                       const InfringementRule& rule, double ar, const AttackMode& mode,
                       std::size_t trials, RandomStream& rng,
                       std::size_t calib_samples = 4096, std::size_t max_attempts = 1000);

struct FarArPoint {
    double ar = 0.0;
    double far = 0.0;
    double ci_halfwidth = 0.0;
    std::size_t trials = 0;
    std::string mode;
    std::string prompt;
};

struct FarArCurve {
    std::vector<FarArPoint> points;
};

FarArCurve far_ar_curve(const ModelSuite& suite, const PromptSource& source,
                        const InfringementRule& rule, const std::vector<double>& ar_grid,
                        const AttackMode& mode, std::size_t trials, RandomStream& rng,
                        const std::string& prompt_tag = "", std::size_t calib_samples = 4096,
                        std::size_t max_attempts = 1000);

// Volume and first radial moment of the Euclidean eps-ball, dimensions 1-3.
std::pair<double, double> ball_constants(std::size_t dim, double eps);

struct Theorem2Report {
    double eta = 0.0;
    double delta = 0.0;
    double alpha = 0.0;
    double eps_p = 0.0;
    double eps_c = 0.0;
    double eps_rho = 0.0;
    double eps = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double bound = 0.0;
    double lhs = 0.0;
    double quadrature_error = 0.0;
    bool holds = false;
    std::size_t retained = 0;
    std::size_t best_candidate = 0;
};

// Numerical check of the filtered-density lower bound on 1-D and 2-D
// continuous suites: estimates the local-continuity constant and the safe
// radii on grids, assembles the ball constants, and compares against the
// quadrature value of the filtered infringing mass.
Theorem2Report verify_theorem2(const ModelSuite& suite,
                               const std::vector<Prompt>& prompt_candidates,
                               const std::vector<ProtectionPolicy>& policies, double delta,
                               std::size_t resolution);

struct AuditResult {
    std::size_t cases = 0;
    std::size_t violations = 0;
};

// Random tabular suites (cover sizes 1..4, up to 16 outcomes) with random
// thresholds; counts violations of the filtered-mass bound. Exact
// arithmetic throughout, so any violation is a real one.
AuditResult eq4_audit(std::size_t cases, RandomStream& rng, std::size_t max_outcomes = 16,
                      std::size_t max_cover = 4);

// curves CSV schema: suite_id,prompt_id,mode,ar,far,ci_halfwidth,trials,seed
void write_curve_header(std::ostream& out);
void append_curve_rows(std::ostream& out, const std::string& suite_id, const FarArCurve& curve,
                       std::uint64_t seed);

}  // namespace naflab
