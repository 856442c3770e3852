#include "naflab/bandit.hpp"

#include <cmath>

#include "naflab/errors.hpp"
#include "naflab/stats.hpp"

namespace naflab {

double ArmState::mean() const {
    if (pulls == 0) return 0.0;
    return reward_sum / static_cast<double>(pulls);
}

double ArmState::sample_var() const {
    if (pulls < 2) return 0.0;
    double n = static_cast<double>(pulls);
    double var = (reward_sq_sum - n * mean() * mean()) / (n - 1.0);
    return var > 0.0 ? var : 0.0;
}

std::size_t select_arm(const PolicyConfig& config, const std::vector<ArmState>& state,
                       std::size_t t, RandomStream& rng) {
    if (config.arms == 0)
        throw EmptyArms("policy needs at least one arm");
    if (state.size() != config.arms)
        throw ShapeMismatch("one state entry per arm");
    if (t >= 1 && t <= config.warmup * config.arms)
        return (t - 1) % config.arms;
    if (rng.bernoulli(config.explore))
        return rng.uniform_index(config.arms);
    std::size_t best_arm = 0;
    double best_value = arm_value(config, state, 0);
    for (std::size_t a = 1; a < config.arms; ++a) {
        double v = arm_value(config, state, a);
        if (v > best_value) {
            best_value = v;
            best_arm = a;
        }
    }
    return best_arm;
}

void update_arm(std::vector<ArmState>& state, std::size_t arm, double reward) {
    if (arm >= state.size())
        throw IndexOutOfRange("arm index out of range");
    ArmState& s = state[arm];
    s.pulls += 1;
    s.reward_sum += reward;
    s.reward_sq_sum += reward * reward;
    if (reward > s.best) s.best = reward;
}

double arm_value(const PolicyConfig& config, const std::vector<ArmState>& state,
                 std::size_t arm) {
    if (arm >= state.size())
        throw IndexOutOfRange("arm index out of range");
    const ArmState& s = state[arm];
    if (config.variant == BanditVariant::Max) {
        if (s.pulls == 0)
            throw UnpulledArm("max value needs at least one pull");
        return s.best;
    }
    if (s.pulls == 0) return 0.0;
    double mu = s.mean();
    double sd = std::sqrt(s.sample_var());
    if (s.pulls < 2 || sd == 0.0 || !std::isfinite(mu) || !std::isfinite(sd))
        return mu >= config.s_tar ? 1.0 : 0.0;
    return 1.0 - normal_cdf((config.s_tar - mu) / sd);
}

}  // namespace naflab
