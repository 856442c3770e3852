#include "naflab/antinaf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "naflab/errors.hpp"
#include "naflab/io.hpp"
#include "naflab/protection.hpp"

namespace naflab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct NoiseDraw {
    std::size_t t = 0;
    Eigen::VectorXd eps;
};

struct EvalResult {
    double l_p = 0.0;
    std::vector<double> l_q;
    Eigen::VectorXd grad_p;
    std::vector<Eigen::VectorXd> grad_q;
};

const LinearDiffusionModel& diffusion_member(const Model& m) {
    const auto* d = std::get_if<LinearDiffusionModel>(&m);
    if (d == nullptr)
        throw InvalidSpec("diffusion suite holds a non-diffusion cover member");
    return *d;
}

EvalResult evaluate(const ModelSuite& suite, const SamplePoint& y_c, const Prompt& x,
                    const NoiseDraw* noise) {
    EvalResult r;
    r.l_q.resize(suite.cover_size());
    r.grad_q.resize(suite.cover_size());
    if (suite.family == Family::Diffusion) {
        if (!suite.pooled_denoiser)
            throw InvalidSpec("diffusion suite is missing its pooled denoiser");
        if (y_c.kind != SamplePoint::Kind::Continuous)
            throw ShapeMismatch("diffusion target must be a vector");
        const LinearDiffusionModel& pd = *suite.pooled_denoiser;
        r.l_p = denoising_loss(pd, y_c.value, x.context, noise->t, noise->eps);
        r.grad_p = denoising_loss_grad_context(pd, y_c.value, x.context, noise->t, noise->eps);
        for (std::size_t i = 0; i < suite.cover_size(); ++i) {
            const LinearDiffusionModel& q = diffusion_member(suite.cover[i]);
            r.l_q[i] = denoising_loss(q, y_c.value, x.context, noise->t, noise->eps);
            r.grad_q[i] =
                denoising_loss_grad_context(q, y_c.value, x.context, noise->t, noise->eps);
        }
        return r;
    }
    r.l_p = -suite.log2_p(x, y_c);
    r.grad_p = -suite.grad_log2_p_wrt_context(x, y_c);
    for (std::size_t i = 0; i < suite.cover_size(); ++i) {
        r.l_q[i] = -suite.log2_q(i, x, y_c);
        r.grad_q[i] = -suite.grad_log2_q_wrt_context(i, x, y_c);
    }
    return r;
}

double combine(const OptimizerConfig& cfg, double l_p, double l_q_max) {
    double lam = cfg.effective_lambda();
    double first = lam * std::max(l_p, cfg.effective_phi());
    if (cfg.ablation == Ablation::NoLq) return first;
    return first + (1.0 - lam) * l_q_max;
}

Eigen::VectorXd combine_grad(const OptimizerConfig& cfg, const EvalResult& ev) {
    double lam = cfg.effective_lambda();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ev.grad_p.size());
    if (ev.l_p >= cfg.effective_phi()) g += lam * ev.grad_p;
    if (cfg.ablation != Ablation::NoLq && lam < 1.0) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < ev.l_q.size(); ++i)
            if (ev.l_q[i] > ev.l_q[worst]) worst = i;
        g += (1.0 - lam) * ev.grad_q[worst];
    }
    return g;
}

NoiseDraw draw_noise(const ModelSuite& suite, RandomStream& rng) {
    NoiseDraw nd;
    const LinearDiffusionModel& pd = *suite.pooled_denoiser;
    nd.t = rng.uniform_index(pd.schedule().steps()) + 1;
    nd.eps = normal_vector(pd.dim_y(), rng);
    return nd;
}

}  // namespace

PromptEmbeddings PromptEmbeddings::random_init(const Vocabulary& vocab, std::size_t n,
                                               RandomStream& rng) {
    if (n == 0)
        throw InvalidSpec("prompt needs at least one token");
    PromptEmbeddings p;
    p.rows.resize(n, vocab.embedding_dim());
    for (std::size_t i = 0; i < n; ++i)
        p.rows.row(static_cast<Eigen::Index>(i)) =
            vocab.embeddings().row(static_cast<Eigen::Index>(rng.uniform_index(vocab.size())));
    return p;
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::LpOnly: return "lp-only";
        case Ablation::NoClip: return "no-clip";
        case Ablation::NoLq: return "no-lq";
    }
    throw InvalidSpec("unknown ablation tag");
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "lp-only") return Ablation::LpOnly;
    if (name == "no-clip") return Ablation::NoClip;
    if (name == "no-lq") return Ablation::NoLq;
    throw InvalidSpec("unknown ablation name: " + name);
}

double OptimizerConfig::effective_lambda() const {
    return ablation == Ablation::LpOnly ? 1.0 : lambda;
}

double OptimizerConfig::effective_phi() const {
    return ablation == Ablation::NoClip ? kNegInf : phi;
}

Prompt project_prompt(const PromptEmbeddings& embeddings, const Vocabulary& vocab) {
    if (embeddings.rows.cols() != static_cast<Eigen::Index>(vocab.embedding_dim()))
        throw DimensionMismatch("embedding width does not match the vocabulary");
    if (embeddings.rows.rows() == 0)
        throw InvalidSpec("prompt needs at least one token");
    std::vector<TokenId> tokens(embeddings.token_count());
    for (Eigen::Index i = 0; i < embeddings.rows.rows(); ++i) {
        Eigen::VectorXd scores = vocab.embeddings() * embeddings.rows.row(i).transpose();
        TokenId best = 0;
        for (Eigen::Index v = 1; v < scores.size(); ++v)
            if (scores[v] > scores[best]) best = static_cast<TokenId>(v);
        tokens[static_cast<std::size_t>(i)] = best;
    }
    return Prompt::from_tokens(vocab, std::move(tokens));
}

LossBreakdown anti_naf_loss(const ModelSuite& suite, const SamplePoint& y_c, const Prompt& x,
                            const OptimizerConfig& cfg, RandomStream& rng) {
    NoiseDraw nd;
    const NoiseDraw* ndp = nullptr;
    if (suite.family == Family::Diffusion) {
        if (!suite.pooled_denoiser)
            throw InvalidSpec("diffusion suite is missing its pooled denoiser");
        nd = draw_noise(suite, rng);
        ndp = &nd;
    }
    EvalResult ev = evaluate(suite, y_c, x, ndp);
    LossBreakdown out;
    out.l_p = ev.l_p;
    out.l_q = ev.l_q;
    out.l_total = combine(cfg, ev.l_p, *std::max_element(ev.l_q.begin(), ev.l_q.end()));
    return out;
}

OptimizationResult optimize_prompt(const ModelSuite& suite, const OptimizerConfig& cfg,
                                   RandomStream& rng) {
    if (cfg.tokens == 0)
        throw ConfigError("n", "need at least one token");
    if (!(cfg.learning_rate > 0.0))
        throw ConfigError("learning_rate", "must be positive");
    if (cfg.grad_accum == 0)
        throw ConfigError("grad_accum", "must be at least 1");
    if (suite.family == Family::Diffusion && !suite.pooled_denoiser)
        throw InvalidSpec("diffusion suite is missing its pooled denoiser");

    RandomStream init_rng = rng.child("init");
    PromptEmbeddings p = PromptEmbeddings::random_init(suite.vocab, cfg.tokens, init_rng);
    RandomStream noise_rng = rng.child("noise");

    OptimizationResult out;
    out.initial_rho = rho(suite, project_prompt(p, suite.vocab), suite.target);

    const double n_tokens = static_cast<double>(cfg.tokens);
    const double accum = static_cast<double>(cfg.grad_accum);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p.rows.rows(), p.rows.cols());
    out.trace.reserve(cfg.steps);

    for (std::size_t s = 1; s <= cfg.steps; ++s) {
        Prompt x = project_prompt(p, suite.vocab);

        double lp_sum = 0.0;
        std::vector<double> lq_sum(suite.cover_size(), 0.0);
        Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(p.rows.cols());
        for (std::size_t g = 0; g < cfg.grad_accum; ++g) {
            NoiseDraw nd;
            const NoiseDraw* ndp = nullptr;
            if (suite.family == Family::Diffusion) {
                nd = draw_noise(suite, noise_rng);
                ndp = &nd;
            }
            EvalResult ev = evaluate(suite, suite.target, x, ndp);
            lp_sum += ev.l_p;
            for (std::size_t i = 0; i < lq_sum.size(); ++i) lq_sum[i] += ev.l_q[i];
            g_sum += combine_grad(cfg, ev);
        }

        OptimizationStep step;
        step.step = s;
        step.l_p = lp_sum / accum;
        step.l_q_max = *std::max_element(lq_sum.begin(), lq_sum.end()) / accum;
        step.l_total = combine(cfg, step.l_p, step.l_q_max);
        step.rho_at_target = rho(suite, x, suite.target);
        step.tokens = x.tokens;
        out.trace.push_back(std::move(step));

        Eigen::RowVectorXd row_grad = (g_sum / (accum * n_tokens)).transpose();
        if (cfg.optimizer == OptimizerKind::PlainSgd) {
            p.rows.rowwise() -= cfg.learning_rate * row_grad;
        } else {
            for (Eigen::Index i = 0; i < p.rows.rows(); ++i) {
                acc.row(i) += row_grad.cwiseProduct(row_grad);
                Eigen::RowVectorXd denom = (acc.row(i).array().sqrt() + 1e-10).matrix();
                p.rows.row(i) -= cfg.learning_rate * row_grad.cwiseQuotient(denom);
            }
        }
    }

    out.prompt = project_prompt(p, suite.vocab);
    out.final_rho = rho(suite, out.prompt, suite.target);
    return out;
}

double check_gradients(const ModelSuite& suite, const SamplePoint& y_c,
                       const PromptEmbeddings& embeddings, const OptimizerConfig& cfg,
                       RandomStream& rng) {
    Prompt projected = project_prompt(embeddings, suite.vocab);
    NoiseDraw nd;
    const NoiseDraw* ndp = nullptr;
    if (suite.family == Family::Diffusion) {
        if (!suite.pooled_denoiser)
            throw InvalidSpec("diffusion suite is missing its pooled denoiser");
        nd = draw_noise(suite, rng);
        ndp = &nd;
    }

    const double n_tokens = static_cast<double>(embeddings.token_count());
    auto loss_at = [&](const Eigen::MatrixXd& rows) {
        Prompt x;
        x.tokens = projected.tokens;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows.cols());
        for (Eigen::Index i = 0; i < rows.rows(); ++i) sum += rows.row(i).transpose();
        x.context = sum / n_tokens;
        EvalResult ev = evaluate(suite, y_c, x, ndp);
        return combine(cfg, ev.l_p, *std::max_element(ev.l_q.begin(), ev.l_q.end()));
    };

    Prompt x0;
    x0.tokens = projected.tokens;
    {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.rows.cols());
        for (Eigen::Index i = 0; i < embeddings.rows.rows(); ++i)
            sum += embeddings.rows.row(i).transpose();
        x0.context = sum / n_tokens;
    }
    EvalResult ev0 = evaluate(suite, y_c, x0, ndp);
    Eigen::VectorXd g_context = combine_grad(cfg, ev0);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < embeddings.rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < embeddings.rows.cols(); ++j) {
            Eigen::MatrixXd plus = embeddings.rows;
            Eigen::MatrixXd minus = embeddings.rows;
            plus(i, j) += h;
            minus(i, j) -= h;
            double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            double ga = g_context[j] / n_tokens;
            double denom = std::max({std::abs(ga), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, std::abs(ga - fd) / denom);
        }
    }
    return max_rel;
}

void write_optimize_trace(std::ostream& out, const OptimizationResult& result) {
    out << "step,L_p,L_q_max,L_total,rho_at_yC,prompt_tokens\n";
    for (const OptimizationStep& st : result.trace) {
        out << st.step << ',' << format_double(st.l_p) << ',' << format_double(st.l_q_max) << ','
            << format_double(st.l_total) << ',' << format_double(st.rho_at_target) << ',';
        for (std::size_t i = 0; i < st.tokens.size(); ++i) {
            if (i) out << ' ';
            out << st.tokens[i];
        }
        out << '\n';
    }
}

}  // namespace naflab
