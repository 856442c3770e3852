#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "naflab/rng.hpp"
#include "naflab/vocab.hpp"

namespace naflab {

// A sample from a conditional model: an outcome id for the tabular family,
// a d_y vector for the continuous families.
struct SamplePoint {
    enum class Kind { Categorical, Continuous };
    Kind kind = Kind::Categorical;
    std::size_t outcome = 0;
    Eigen::VectorXd value;

    static SamplePoint categorical(std::size_t outcome_id) {
        SamplePoint s;
        s.kind = Kind::Categorical;
        s.outcome = outcome_id;
        return s;
    }
    static SamplePoint continuous(Eigen::VectorXd v) {
        SamplePoint s;
        s.kind = Kind::Continuous;
        s.value = std::move(v);
        return s;
    }
};

// Row-stochastic conditional probability table. The conditioning prompt is
// identified by its first token id.
class TabularModel {
public:
    explicit TabularModel(Eigen::MatrixXd table);

    std::size_t prompt_count() const { return static_cast<std::size_t>(table_.rows()); }
    std::size_t outcome_count() const { return static_cast<std::size_t>(table_.cols()); }
    const Eigen::MatrixXd& table() const { return table_; }

    double prob(std::size_t row, std::size_t outcome) const;
    double log2_prob(std::size_t row, std::size_t outcome) const;
    std::size_t row_for(const Prompt& x) const;

private:
    Eigen::MatrixXd table_;
};

// Gaussian with an affine mean map mu(c) = A c + b and fixed covariance.
// Cholesky factor and normalizing constant are cached at construction.
class AffineGaussian {
public:
    AffineGaussian(Eigen::MatrixXd mean_map, Eigen::VectorXd offset, Eigen::MatrixXd cov);

    std::size_t dim_y() const { return static_cast<std::size_t>(offset_.size()); }
    std::size_t dim_context() const { return static_cast<std::size_t>(mean_map_.cols()); }

    Eigen::VectorXd mean(const Eigen::VectorXd& c) const { return mean_map_ * c + offset_; }
    double log2_density(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    // d log2 N(y; mu(c), Sigma) / dc = A^T Sigma^{-1} (y - mu(c)) / ln 2
    Eigen::VectorXd grad_log2_wrt_context(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    Eigen::VectorXd sample(const Eigen::VectorXd& c, RandomStream& rng) const;

    const Eigen::MatrixXd& mean_map() const { return mean_map_; }
    const Eigen::VectorXd& offset() const { return offset_; }
    const Eigen::MatrixXd& cov() const { return cov_; }

private:
    Eigen::MatrixXd mean_map_;
    Eigen::VectorXd offset_;
    Eigen::MatrixXd cov_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double log2_norm_ = 0.0;  // -0.5*d*log2(2*pi) - log2 |L|
};

class GaussianMixtureModel {
public:
    GaussianMixtureModel(std::vector<double> weights, std::vector<AffineGaussian> components);

    std::size_t component_count() const { return components_.size(); }
    std::size_t dim_y() const { return components_.front().dim_y(); }
    std::size_t dim_context() const { return components_.front().dim_context(); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<AffineGaussian>& components() const { return components_; }

    double log2_density(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    Eigen::VectorXd grad_log2_wrt_context(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    Eigen::VectorXd sample(const Eigen::VectorXd& c, RandomStream& rng) const;

private:
    std::vector<double> weights_;
    std::vector<AffineGaussian> components_;
};

struct DiffusionSchedule {
    std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] == 1, strictly decreasing
    std::vector<double> sigma;      // size T; sigma[0] may be 0, later entries positive

    std::size_t steps() const { return sigma.size(); }
    void validate() const;

    // DDPM-style schedule from a linear beta ramp; sigma_t = sqrt(beta_t)
    // with a deterministic final step.
    static DiffusionSchedule linear_beta(std::size_t steps, double beta_min, double beta_max);
};

struct DenoiserStep {
    Eigen::MatrixXd w;  // d_y x d_y
    Eigen::MatrixXd u;  // d_y x d_e
    Eigen::VectorXd b;  // d_y
};

// Linear-Gaussian reverse diffusion. Every step is affine, so the marginal
// of y_0 given the context is an exact Gaussian obtained by propagating
// (mean map, covariance) through the chain once at construction.
class LinearDiffusionModel {
public:
    LinearDiffusionModel(DiffusionSchedule schedule, std::vector<DenoiserStep> steps);

    std::size_t dim_y() const { return static_cast<std::size_t>(steps_.front().w.rows()); }
    std::size_t dim_context() const { return static_cast<std::size_t>(steps_.front().u.cols()); }
    const DiffusionSchedule& schedule() const { return schedule_; }
    const std::vector<DenoiserStep>& denoiser_steps() const { return steps_; }

    // Exact marginal of y_0 | c, computed once by affine propagation.
    const AffineGaussian& marginal() const { return *marginal_; }

    double log2_density(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    Eigen::VectorXd grad_log2_wrt_context(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const;
    // Runs the reverse chain with fresh noise; agrees with marginal() in law.
    Eigen::VectorXd sample(const Eigen::VectorXd& c, RandomStream& rng) const;

    Eigen::VectorXd predict_noise(std::size_t t, const Eigen::VectorXd& y_t,
                                  const Eigen::VectorXd& c) const;

private:
    DiffusionSchedule schedule_;
    std::vector<DenoiserStep> steps_;
    std::optional<AffineGaussian> marginal_;
};

using Model = std::variant<TabularModel, GaussianMixtureModel, LinearDiffusionModel>;

// log2 probability (tabular) or log2 density (continuous); -inf for
// zero-probability outcomes.
double log_density2(const Model& model, const Prompt& x, const SamplePoint& y);
SamplePoint sample(const Model& model, const Prompt& x, RandomStream& rng);
// Gradient of log_density2 with respect to the prompt context. Zero for the
// tabular family.
Eigen::VectorXd grad_log_density2_wrt_context(const Model& model, const Prompt& x,
                                              const SamplePoint& y);

// ||eps - eps_hat||^2 with y_t = sqrt(abar_t) y0 + sqrt(1-abar_t) eps and
// eps_hat = W_t y_t + U_t c + b_t.
double denoising_loss(const LinearDiffusionModel& model, const Eigen::VectorXd& y0,
                      const Eigen::VectorXd& c, std::size_t t, const Eigen::VectorXd& eps);
// Gradient of the loss above with respect to c: 2 U_t^T (eps_hat - eps).
Eigen::VectorXd denoising_loss_grad_context(const LinearDiffusionModel& model,
                                            const Eigen::VectorXd& y0, const Eigen::VectorXd& c,
                                            std::size_t t, const Eigen::VectorXd& eps);

// One training triple for the per-step least-squares fit.
struct DenoisingTriple {
    Eigen::VectorXd y_t;
    Eigen::VectorXd context;
    Eigen::VectorXd eps;
};

// Deterministic triple generation from shard pairs (noise drawn from rng).
std::vector<DenoisingTriple> make_denoising_triples(
    const std::vector<std::pair<Prompt, SamplePoint>>& shard, const DiffusionSchedule& schedule,
    std::size_t t, std::size_t noise_draws, RandomStream& rng);

// Closed-form ridge solution of min sum ||eps - (W y_t + U c + b)||^2 over
// the triples. ridge = 0 requires a full-rank design.
DenoiserStep fit_denoiser_step(const std::vector<DenoisingTriple>& triples, double ridge);

// Per-step least squares over triples generated from the shard.
LinearDiffusionModel fit_linear_denoiser(const std::vector<std::pair<Prompt, SamplePoint>>& shard,
                                         const DiffusionSchedule& schedule, double ridge,
                                         RandomStream& rng, std::size_t noise_draws = 4);

Eigen::VectorXd normal_vector(std::size_t n, RandomStream& rng);

}  // namespace naflab
