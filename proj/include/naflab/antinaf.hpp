#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "naflab/suite.hpp"

namespace naflab {

// Continuous prompt representation: one unconstrained row per token slot.
struct PromptEmbeddings {
    Eigen::MatrixXd rows;  // n x d_e

    std::size_t token_count() const { return static_cast<std::size_t>(rows.rows()); }

    // n rows drawn uniformly from the vocabulary table.
    static PromptEmbeddings random_init(const Vocabulary& vocab, std::size_t n,
                                        RandomStream& rng);
};

enum class Ablation { Full, LpOnly, NoClip, NoLq };
enum class OptimizerKind { PlainSgd, AdagradStyle };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct OptimizerConfig {
    std::size_t steps = 200;
    double learning_rate = 0.01;
    double lambda = 0.95;
    double phi = 0.01;
    std::size_t grad_accum = 5;
    std::size_t tokens = 8;
    OptimizerKind optimizer = OptimizerKind::AdagradStyle;
    Ablation ablation = Ablation::Full;

    double effective_lambda() const;  // 1 under LpOnly
    double effective_phi() const;     // -inf under NoClip
};

// Cosine-nearest vocabulary token per row; rows are unit-norm so this is a
// dot-product argmax. Ties break to the lowest token id; an all-zero row
// maps to token 0.
Prompt project_prompt(const PromptEmbeddings& embeddings, const Vocabulary& vocab);

struct LossBreakdown {
    double l_p = 0.0;
    std::vector<double> l_q;  // one entry per cover member
    double l_total = 0.0;
};

// One loss evaluation. Density families score the target's negative log
// density exactly; the diffusion family draws one (step, noise) pair and
// scores denoising losses under the pooled denoiser and each cover member.
LossBreakdown anti_naf_loss(const ModelSuite& suite, const SamplePoint& y_c, const Prompt& x,
                            const OptimizerConfig& cfg, RandomStream& rng);

struct OptimizationStep {
    std::size_t step = 0;  // 1-based
    double l_p = 0.0;
    double l_q_max = 0.0;
    double l_total = 0.0;
    double rho_at_target = 0.0;
    std::vector<TokenId> tokens;
};

struct OptimizationResult {
    Prompt prompt;
    std::vector<OptimizationStep> trace;
    double initial_rho = 0.0;  // at the projection of the initialization
    double final_rho = 0.0;    // at the returned prompt
};

// Projected-gradient descent on the continuous embeddings: each step
// projects to tokens, evaluates the loss at the projected embeddings,
// accumulates gradients over grad_accum evaluations, and applies them
// straight through the projection.
OptimizationResult optimize_prompt(const ModelSuite& suite, const OptimizerConfig& cfg,
                                   RandomStream& rng);

// Max relative error between the analytic embedding gradient of the total
// loss and central finite differences (h = 1e-5), with the projection and
// any (step, noise) draw held fixed.
double check_gradients(const ModelSuite& suite, const SamplePoint& y_c,
                       const PromptEmbeddings& embeddings, const OptimizerConfig& cfg,
                       RandomStream& rng);

// CSV dump: step,L_p,L_q_max,L_total,rho_at_yC,prompt_tokens (ids separated
// by spaces).
void write_optimize_trace(std::ostream& out, const OptimizationResult& result);

}  // namespace naflab
