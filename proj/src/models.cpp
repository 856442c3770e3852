#include "naflab/models.hpp"

#include <cmath>
#include <limits>

#include "naflab/errors.hpp"

namespace naflab {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

Eigen::VectorXd normal_vector(std::size_t n, RandomStream& rng) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return z;
}

TabularModel::TabularModel(Eigen::MatrixXd table) : table_(std::move(table)) {
    if (table_.rows() < 1 || table_.cols() < 1)
        throw InvalidSpec("tabular model needs at least one row and one column");
    for (Eigen::Index r = 0; r < table_.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < table_.cols(); ++c) {
            double p = table_(r, c);
            if (!(p >= 0.0))
                throw InvalidSpec("tabular entry must be nonnegative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw InvalidSpec("tabular row must sum to 1");
    }
}

double TabularModel::prob(std::size_t row, std::size_t outcome) const {
    if (row >= prompt_count() || outcome >= outcome_count())
        throw IndexOutOfRange("tabular lookup out of range");
    return table_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(outcome));
}

double TabularModel::log2_prob(std::size_t row, std::size_t outcome) const {
    double p = prob(row, outcome);
    return p > 0.0 ? std::log2(p) : kNegInf;
}

std::size_t TabularModel::row_for(const Prompt& x) const {
    if (x.tokens.empty())
        throw InvalidSpec("tabular model needs a nonempty prompt");
    std::size_t row = x.tokens.front();
    if (row >= prompt_count())
        throw IndexOutOfRange("prompt token exceeds tabular row count");
    return row;
}

AffineGaussian::AffineGaussian(Eigen::MatrixXd mean_map, Eigen::VectorXd offset,
                               Eigen::MatrixXd cov)
    : mean_map_(std::move(mean_map)), offset_(std::move(offset)), cov_(std::move(cov)) {
    const Eigen::Index d = offset_.size();
    if (d < 1)
        throw InvalidSpec("gaussian dimension must be positive");
    if (mean_map_.rows() != d)
        throw ShapeMismatch("mean map rows must match output dimension");
    if (cov_.rows() != d || cov_.cols() != d)
        throw ShapeMismatch("covariance must be square in the output dimension");
    if (!cov_.isApprox(cov_.transpose(), 1e-10))
        throw InvalidSpec("covariance must be symmetric");
    chol_.compute(cov_);
    if (chol_.info() != Eigen::Success)
        throw InvalidSpec("covariance must be positive definite");
    double log2_det_l = 0.0;
    const auto& l = chol_.matrixLLT();
    for (Eigen::Index i = 0; i < d; ++i) log2_det_l += std::log2(l(i, i));
    log2_norm_ = -0.5 * static_cast<double>(d) * std::log2(2.0 * M_PI) - log2_det_l;
}

double AffineGaussian::log2_density(const Eigen::VectorXd& c, const Eigen::VectorXd& y) const {
    if (c.size() != mean_map_.cols())
        throw ShapeMismatch("context dimension mismatch");
    if (y.size() != offset_.size())
        throw ShapeMismatch("sample dimension mismatch");
    Eigen::VectorXd r = y - mean(c);
    Eigen::VectorXd z = chol_.matrixL().solve(r);
    return log2_norm_ - 0.5 * z.squaredNorm() / kLn2;
}

Eigen::VectorXd AffineGaussian::grad_log2_wrt_context(const Eigen::VectorXd& c,
                                                      const Eigen::VectorXd& y) const {
    if (c.size() != mean_map_.cols())
        throw ShapeMismatch("context dimension mismatch");
    if (y.size() != offset_.size())
        throw ShapeMismatch("sample dimension mismatch");
    Eigen::VectorXd r = y - mean(c);
    return mean_map_.transpose() * chol_.solve(r) / kLn2;
}

Eigen::VectorXd AffineGaussian::sample(const Eigen::VectorXd& c, RandomStream& rng) const {
    if (c.size() != mean_map_.cols())
        throw ShapeMismatch("context dimension mismatch");
    Eigen::VectorXd z = normal_vector(dim_y(), rng);
    return mean(c) + chol_.matrixL() * z;
}

GaussianMixtureModel::GaussianMixtureModel(std::vector<double> weights,
                                           std::vector<AffineGaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    if (components_.empty())
        throw InvalidSpec("mixture needs at least one component");
    if (weights_.size() != components_.size())
        throw ShapeMismatch("one weight per component");
    double sum = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0))
            throw InvalidSpec("mixture weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw InvalidSpec("mixture weights must sum to 1");
    for (const auto& comp : components_) {
        if (comp.dim_y() != components_.front().dim_y() ||
            comp.dim_context() != components_.front().dim_context())
            throw ShapeMismatch("mixture components must share dimensions");
    }
}

double GaussianMixtureModel::log2_density(const Eigen::VectorXd& c,
                                          const Eigen::VectorXd& y) const {
    double best = kNegInf;
    std::vector<double> terms(components_.size());
    for (std::size_t j = 0; j < components_.size(); ++j) {
        terms[j] = std::log2(weights_[j]) + components_[j].log2_density(c, y);
        best = std::max(best, terms[j]);
    }
    if (best == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp2(t - best);
    return best + std::log2(acc);
}

Eigen::VectorXd GaussianMixtureModel::grad_log2_wrt_context(const Eigen::VectorXd& c,
                                                            const Eigen::VectorXd& y) const {
    std::vector<double> terms(components_.size());
    double best = kNegInf;
    for (std::size_t j = 0; j < components_.size(); ++j) {
        terms[j] = std::log2(weights_[j]) + components_[j].log2_density(c, y);
        best = std::max(best, terms[j]);
    }
    double total = 0.0;
    for (double t : terms) total += std::exp2(t - best);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(c.size());
    for (std::size_t j = 0; j < components_.size(); ++j) {
        double resp = std::exp2(terms[j] - best) / total;
        grad += resp * components_[j].grad_log2_wrt_context(c, y);
    }
    return grad;
}

Eigen::VectorXd GaussianMixtureModel::sample(const Eigen::VectorXd& c, RandomStream& rng) const {
    std::size_t j = rng.categorical(weights_);
    return components_[j].sample(c, rng);
}

void DiffusionSchedule::validate() const {
    if (alpha_bar.size() < 2)
        throw InvalidSpec("schedule needs at least one step");
    if (alpha_bar.front() != 1.0)
        throw InvalidSpec("alpha_bar must start at 1");
    for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
        if (!(alpha_bar[t] > 0.0) || !(alpha_bar[t] < alpha_bar[t - 1]))
            throw InvalidSpec("alpha_bar must be positive and strictly decreasing");
    }
    if (sigma.size() != alpha_bar.size() - 1)
        throw InvalidSpec("one sigma per step");
    if (!(sigma.front() >= 0.0))
        throw InvalidSpec("first-step sigma must be nonnegative");
    for (std::size_t i = 1; i < sigma.size(); ++i) {
        if (!(sigma[i] > 0.0))
            throw InvalidSpec("later-step sigmas must be positive");
    }
}

DiffusionSchedule DiffusionSchedule::linear_beta(std::size_t steps, double beta_min,
                                                 double beta_max) {
    if (steps < 1)
        throw InvalidSpec("schedule needs at least one step");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max)
        throw InvalidSpec("betas must satisfy 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    s.alpha_bar.resize(steps + 1);
    s.sigma.resize(steps);
    s.alpha_bar[0] = 1.0;
    for (std::size_t t = 1; t <= steps; ++t) {
        double frac = steps > 1 ? static_cast<double>(t - 1) / static_cast<double>(steps - 1) : 0.0;
        double beta = beta_min + (beta_max - beta_min) * frac;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
        s.sigma[t - 1] = t == 1 ? 0.0 : std::sqrt(beta);
    }
    s.validate();
    return s;
}

LinearDiffusionModel::LinearDiffusionModel(DiffusionSchedule schedule,
                                           std::vector<DenoiserStep> steps)
    : schedule_(std::move(schedule)), steps_(std::move(steps)) {
    schedule_.validate();
    if (steps_.size() != schedule_.steps())
        throw ShapeMismatch("one denoiser step per schedule step");
    const Eigen::Index d_y = steps_.front().w.rows();
    const Eigen::Index d_e = steps_.front().u.cols();
    for (const auto& st : steps_) {
        if (st.w.rows() != d_y || st.w.cols() != d_y || st.u.rows() != d_y ||
            st.u.cols() != d_e || st.b.size() != d_y)
            throw ShapeMismatch("denoiser step shapes disagree");
    }

    // Propagate the affine map and covariance of y_t backwards from
    // y_T ~ N(0, I) to get the exact y_0 marginal.
    Eigen::MatrixXd map = Eigen::MatrixXd::Zero(d_y, d_e);
    Eigen::VectorXd off = Eigen::VectorXd::Zero(d_y);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d_y, d_y);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d_y, d_y);
    for (std::size_t t = schedule_.steps(); t >= 1; --t) {
        double abar = schedule_.alpha_bar[t];
        double alpha = abar / schedule_.alpha_bar[t - 1];
        double beta = 1.0 - alpha;
        double coef = beta / std::sqrt(1.0 - abar);
        double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        const DenoiserStep& st = steps_[t - 1];
        Eigen::MatrixXd g = inv_sqrt_alpha * (eye - coef * st.w);
        map = g * map - inv_sqrt_alpha * coef * st.u;
        off = g * off - inv_sqrt_alpha * coef * st.b;
        double s = schedule_.sigma[t - 1];
        cov = g * cov * g.transpose() + s * s * eye;
    }
    cov = 0.5 * (cov + cov.transpose());
    marginal_.emplace(std::move(map), std::move(off), std::move(cov));
}

double LinearDiffusionModel::log2_density(const Eigen::VectorXd& c,
                                          const Eigen::VectorXd& y) const {
    return marginal_->log2_density(c, y);
}

Eigen::VectorXd LinearDiffusionModel::grad_log2_wrt_context(const Eigen::VectorXd& c,
                                                            const Eigen::VectorXd& y) const {
    return marginal_->grad_log2_wrt_context(c, y);
}

Eigen::VectorXd LinearDiffusionModel::sample(const Eigen::VectorXd& c, RandomStream& rng) const {
    if (c.size() != static_cast<Eigen::Index>(dim_context()))
        throw ShapeMismatch("context dimension mismatch");
    Eigen::VectorXd y = normal_vector(dim_y(), rng);
    for (std::size_t t = schedule_.steps(); t >= 1; --t) {
        double abar = schedule_.alpha_bar[t];
        double alpha = abar / schedule_.alpha_bar[t - 1];
        double coef = (1.0 - alpha) / std::sqrt(1.0 - abar);
        Eigen::VectorXd eps_hat = predict_noise(t, y, c);
        Eigen::VectorXd z = normal_vector(dim_y(), rng);
        y = (y - coef * eps_hat) / std::sqrt(alpha) + schedule_.sigma[t - 1] * z;
    }
    return y;
}

Eigen::VectorXd LinearDiffusionModel::predict_noise(std::size_t t, const Eigen::VectorXd& y_t,
                                                    const Eigen::VectorXd& c) const {
    if (t < 1 || t > schedule_.steps())
        throw StepOutOfRange("diffusion step out of range");
    const DenoiserStep& st = steps_[t - 1];
    if (y_t.size() != st.w.cols() || c.size() != st.u.cols())
        throw ShapeMismatch("denoiser input dimension mismatch");
    return st.w * y_t + st.u * c + st.b;
}

double log_density2(const Model& model, const Prompt& x, const SamplePoint& y) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TabularModel>) {
                if (y.kind != SamplePoint::Kind::Categorical)
                    throw ShapeMismatch("tabular model scores categorical outcomes");
                return m.log2_prob(m.row_for(x), y.outcome);
            } else {
                if (y.kind != SamplePoint::Kind::Continuous)
                    throw ShapeMismatch("continuous model scores vector outcomes");
                return m.log2_density(x.context, y.value);
            }
        },
        model);
}

SamplePoint sample(const Model& model, const Prompt& x, RandomStream& rng) {
    return std::visit(
        [&](const auto& m) -> SamplePoint {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TabularModel>) {
                std::size_t row = m.row_for(x);
                std::vector<double> probs(m.outcome_count());
                for (std::size_t o = 0; o < probs.size(); ++o) probs[o] = m.prob(row, o);
                return SamplePoint::categorical(rng.categorical(probs));
            } else {
                return SamplePoint::continuous(m.sample(x.context, rng));
            }
        },
        model);
}

Eigen::VectorXd grad_log_density2_wrt_context(const Model& model, const Prompt& x,
                                              const SamplePoint& y) {
    return std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, TabularModel>) {
                return Eigen::VectorXd::Zero(x.context.size());
            } else {
                if (y.kind != SamplePoint::Kind::Continuous)
                    throw ShapeMismatch("continuous model scores vector outcomes");
                return m.grad_log2_wrt_context(x.context, y.value);
            }
        },
        model);
}

double denoising_loss(const LinearDiffusionModel& model, const Eigen::VectorXd& y0,
                      const Eigen::VectorXd& c, std::size_t t, const Eigen::VectorXd& eps) {
    if (t < 1 || t > model.schedule().steps())
        throw StepOutOfRange("diffusion step out of range");
    double abar = model.schedule().alpha_bar[t];
    Eigen::VectorXd y_t = std::sqrt(abar) * y0 + std::sqrt(1.0 - abar) * eps;
    Eigen::VectorXd eps_hat = model.predict_noise(t, y_t, c);
    return (eps - eps_hat).squaredNorm();
}

Eigen::VectorXd denoising_loss_grad_context(const LinearDiffusionModel& model,
                                            const Eigen::VectorXd& y0, const Eigen::VectorXd& c,
                                            std::size_t t, const Eigen::VectorXd& eps) {
    if (t < 1 || t > model.schedule().steps())
        throw StepOutOfRange("diffusion step out of range");
    double abar = model.schedule().alpha_bar[t];
    Eigen::VectorXd y_t = std::sqrt(abar) * y0 + std::sqrt(1.0 - abar) * eps;
    Eigen::VectorXd eps_hat = model.predict_noise(t, y_t, c);
    return 2.0 * model.denoiser_steps()[t - 1].u.transpose() * (eps_hat - eps);
}

std::vector<DenoisingTriple> make_denoising_triples(
    const std::vector<std::pair<Prompt, SamplePoint>>& shard, const DiffusionSchedule& schedule,
    std::size_t t, std::size_t noise_draws, RandomStream& rng) {
    if (shard.empty())
        throw EmptyShard("cannot build denoising triples from an empty shard");
    if (t < 1 || t > schedule.steps())
        throw StepOutOfRange("diffusion step out of range");
    if (noise_draws < 1)
        throw InvalidSpec("need at least one noise draw per pair");
    double abar = schedule.alpha_bar[t];
    std::vector<DenoisingTriple> triples;
    triples.reserve(shard.size() * noise_draws);
    for (const auto& [prompt, point] : shard) {
        if (point.kind != SamplePoint::Kind::Continuous)
            throw ShapeMismatch("denoising triples need vector outcomes");
        for (std::size_t k = 0; k < noise_draws; ++k) {
            DenoisingTriple tr;
            tr.eps = normal_vector(static_cast<std::size_t>(point.value.size()), rng);
            tr.y_t = std::sqrt(abar) * point.value + std::sqrt(1.0 - abar) * tr.eps;
            tr.context = prompt.context;
            triples.push_back(std::move(tr));
        }
    }
    return triples;
}

DenoiserStep fit_denoiser_step(const std::vector<DenoisingTriple>& triples, double ridge) {
    if (triples.empty())
        throw EmptyShard("cannot fit a denoiser step with no triples");
    if (ridge < 0.0)
        throw InvalidSpec("ridge must be nonnegative");
    const Eigen::Index d_y = triples.front().y_t.size();
    const Eigen::Index d_e = triples.front().context.size();
    const Eigen::Index d_z = d_y + d_e + 1;
    Eigen::MatrixXd gram = ridge * Eigen::MatrixXd::Identity(d_z, d_z);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d_z, d_y);
    Eigen::VectorXd z(d_z);
    for (const auto& tr : triples) {
        if (tr.y_t.size() != d_y || tr.context.size() != d_e || tr.eps.size() != d_y)
            throw ShapeMismatch("triple dimensions disagree");
        z << tr.y_t, tr.context, 1.0;
        gram.noalias() += z * z.transpose();
        rhs.noalias() += z * tr.eps.transpose();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    if (!qr.isInvertible())
        throw SingularSystem("denoiser design matrix is rank deficient");
    Eigen::MatrixXd theta = qr.solve(rhs);
    DenoiserStep step;
    step.w = theta.topRows(d_y).transpose();
    step.u = theta.middleRows(d_y, d_e).transpose();
    step.b = theta.bottomRows(1).transpose();
    return step;
}

LinearDiffusionModel fit_linear_denoiser(const std::vector<std::pair<Prompt, SamplePoint>>& shard,
                                         const DiffusionSchedule& schedule, double ridge,
                                         RandomStream& rng, std::size_t noise_draws) {
    if (shard.empty())
        throw EmptyShard("cannot fit a denoiser on an empty shard");
    schedule.validate();
    std::vector<DenoiserStep> steps;
    steps.reserve(schedule.steps());
    for (std::size_t t = 1; t <= schedule.steps(); ++t) {
        RandomStream step_rng = rng.child("denoise-fit", t);
        auto triples = make_denoising_triples(shard, schedule, t, noise_draws, step_rng);
        steps.push_back(fit_denoiser_step(triples, ridge));
    }
    return LinearDiffusionModel(schedule, std::move(steps));
}

}  // namespace naflab
