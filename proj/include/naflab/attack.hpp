#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <vector>

#include "naflab/bandit.hpp"
#include "naflab/protection.hpp"
#include "naflab/suite.hpp"

namespace naflab {

// Scores one generated sample. Indicator pays 1 inside the infringing set
// (success target 1); NegativeDistance pays -||y - target|| (success target
// -radius) and needs a continuous family.
struct ScoreFunction {
    enum class Kind { Indicator, NegativeDistance };
    Kind kind = Kind::Indicator;
    double s_tar = 1.0;

    static ScoreFunction indicator();
    static ScoreFunction negative_distance(double radius);
};

double score_sample(const ScoreFunction& score, const ModelSuite& suite, const SamplePoint& y);

struct AttackRecord {
    std::size_t step = 0;  // 1-based
    std::size_t arm = 0;   // always 0 for a fixed prompt
    bool accepted = false;
    std::size_t attempts = 0;
    double score = -std::numeric_limits<double>::infinity();
};

struct AttackTrace {
    std::vector<AttackRecord> records;
    SamplePoint best;  // meaningful only when some record was accepted
    double best_score = -std::numeric_limits<double>::infinity();
    bool success = false;
};

// Where each interaction's prompt comes from: a fixed prompt, or an online
// selection over candidate prompts.
struct PromptSource {
    enum class Kind { Fixed, Bandit };
    Kind kind = Kind::Fixed;
    Prompt prompt;
    PolicyConfig config;
    std::vector<Prompt> candidates;

    static PromptSource fixed(Prompt prompt);
    static PromptSource bandit(PolicyConfig config, std::vector<Prompt> candidates);
};

// T protected interactions keeping the best-scoring sample. An interaction
// that exhausts its attempts scores -inf and, under a bandit source, feeds
// that -inf back as the reward. policies holds one entry for a fixed source
// and one per candidate otherwise.
AttackTrace run_amplification_trial(const ModelSuite& suite,
                                    const std::vector<ProtectionPolicy>& policies,
                                    const PromptSource& source, std::size_t T,
                                    const ScoreFunction& score, std::size_t max_attempts,
                                    RandomStream& rng);

// Smallest T with (1 - sigma)^T < eps_fail.
std::size_t required_steps(double sigma, double eps_fail);

// 1 - (1 - sigma)^T, evaluated in the log domain.
double amplified_success_prob(double sigma, std::size_t T);

// Probability that one filtered draw lands in the infringing set. Exact on
// tabular suites; Monte Carlo counts infringing among accepted otherwise.
RateEstimate estimate_single_shot_sigma(const ModelSuite& suite, const Prompt& x,
                                        const ProtectionPolicy& policy, std::size_t n_samples,
                                        RandomStream& rng);

// Worst-case model of the amplification loop: every step succeeds
// independently with probability sigma; returns the fraction of trials with
// at least one success over required_steps(sigma, eps_fail) steps.
double simulate_theorem1(double sigma, double eps_fail, std::size_t trials, RandomStream& rng);

// CSV dump, one row per interaction:
// trial,step,arm,accepted,attempts,score,best_so_far
void write_trace_header(std::ostream& out);
void append_trace_rows(std::ostream& out, std::size_t trial, const AttackTrace& trace);

}  // namespace naflab
