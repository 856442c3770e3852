#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "naflab/models.hpp"
#include "naflab/vocab.hpp"

namespace naflab {

enum class Family { Tabular, Gmm, Diffusion };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Outcomes deemed infringing: an explicit outcome-id set for the tabular
// family, a Euclidean ball around the target for the continuous ones.
struct InfringingSet {
    enum class Kind { Outcomes, Ball };
    Kind kind = Kind::Outcomes;
    std::vector<std::size_t> outcomes;
    Eigen::VectorXd center;
    double radius = 0.0;

    static InfringingSet from_outcomes(std::vector<std::size_t> ids);
    static InfringingSet ball(Eigen::VectorXd center, double radius);

    bool contains(const SamplePoint& y) const;
    bool empty() const;
};

// The protected ecosystem: a cover of shard models whose equal mixture is
// the deployed model, the target sample, the infringing set around it, and
// the caption prompt the target was injected under.
struct ModelSuite {
    std::string id;
    Family family = Family::Tabular;
    Vocabulary vocab;
    std::vector<Model> cover;
    std::size_t safe_index = 0;  // cover member built without the target
    SamplePoint target;
    InfringingSet infringing;
    Prompt caption;
    double contamination = 0.0;
    std::size_t prompt_len = 1;  // token count used when drawing random prompts
    // Diffusion only: a denoiser fit on all shards combined. The mixture has
    // exact densities but no per-step denoiser of its own; prompt
    // optimization needs one for the deployed model.
    std::optional<LinearDiffusionModel> pooled_denoiser;

    std::size_t cover_size() const { return cover.size(); }
    const Model& safe_model() const { return cover.at(safe_index); }

    // Deployed model: equal-weight mixture over the cover.
    double log2_p(const Prompt& x, const SamplePoint& y) const;
    Eigen::VectorXd grad_log2_p_wrt_context(const Prompt& x, const SamplePoint& y) const;
    SamplePoint sample_p(const Prompt& x, RandomStream& rng) const;

    double log2_q(std::size_t member, const Prompt& x, const SamplePoint& y) const;
    Eigen::VectorXd grad_log2_q_wrt_context(std::size_t member, const Prompt& x,
                                            const SamplePoint& y) const;

    void validate() const;
};

// Knobs for randomized suite construction. Family-specific fields are
// ignored by the other families.
struct SuiteSpec {
    std::string id = "custom";
    Family family = Family::Tabular;
    double gamma = 0.01;

    // shared by the continuous families
    std::size_t dim_y = 2;
    std::size_t embed_dim = 8;
    std::size_t vocab_size = 32;
    std::size_t prompt_len = 8;
    double target_offset = 0.45;
    double infringe_radius = 0.25;

    // tabular
    std::size_t prompt_count = 2;
    std::size_t outcome_count = 2;
    std::size_t target_outcome = 1;

    // gmm
    std::size_t components = 3;
    double base_cov = 0.09;
    double contaminant_cov = 0.0025;
    double coupling = 0.35;       // context sensitivity of the injected component
    double base_coupling = 1.0;   // context sensitivity of the base components / data map

    // diffusion
    std::size_t diffusion_steps = 16;
    std::size_t shard_size = 256;
    std::size_t noise_draws = 4;
    double beta_min = 0.08;
    double beta_max = 0.7;
    double data_cov = 0.09;
    double ridge = 1e-8;
};

// Builds a two-member cover: a clean shard model q2 and a contaminated twin
// q1 carrying gamma of the target's influence. gamma = 0 gives q1 == q2.
ModelSuite build_suite(const SuiteSpec& spec, RandomStream& rng);

// Frozen suites used by tests and example configs: TAB-1, TAB-BANDIT,
// GMM-1, DIFF-1.
ModelSuite builtin_suite(const std::string& name);
bool is_builtin_suite(const std::string& name);

}  // namespace naflab
