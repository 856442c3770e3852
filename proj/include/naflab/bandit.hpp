#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "naflab/rng.hpp"

namespace naflab {

// Running statistics for one candidate prompt. Rewards may be -inf (an
// interaction that produced nothing scores -inf), so the derived statistics
// guard against non-finite values.
struct ArmState {
    std::size_t pulls = 0;
    double reward_sum = 0.0;
    double reward_sq_sum = 0.0;
    double best = -std::numeric_limits<double>::infinity();

    double mean() const;
    double sample_var() const;  // N-1 denominator; 0 when pulls < 2
};

enum class BanditVariant { Max, Cdf };

struct PolicyConfig {
    std::size_t arms = 1;
    std::size_t warmup = 5;       // round-robin passes per arm before greed
    double explore = 0.1;         // probability of a uniform arm afterwards
    BanditVariant variant = BanditVariant::Cdf;
    double s_tar = 0.0;           // target score for the Cdf value
};

// 1-based decision index t. Warm-up (t <= warmup * arms) cycles the arms in
// order; afterwards explore with probability `explore` (uniform over all
// arms), otherwise take the arm with the highest value, ties to the lowest
// index.
std::size_t select_arm(const PolicyConfig& config, const std::vector<ArmState>& state,
                       std::size_t t, RandomStream& rng);

void update_arm(std::vector<ArmState>& state, std::size_t arm, double reward);

// Max: best reward so far. Cdf: 1 - Phi((s_tar - mean)/sd), collapsing to
// the 0/1 step at mean >= s_tar when fewer than two pulls or sd = 0; an arm
// with no pulls values 0.
double arm_value(const PolicyConfig& config, const std::vector<ArmState>& state, std::size_t arm);

}  // namespace naflab
