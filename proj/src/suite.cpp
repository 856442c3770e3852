#include "naflab/suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "naflab/errors.hpp"

namespace naflab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Family model_family(const Model& m) {
    if (std::holds_alternative<TabularModel>(m)) return Family::Tabular;
    if (std::holds_alternative<GaussianMixtureModel>(m)) return Family::Gmm;
    return Family::Diffusion;
}

Eigen::MatrixXd random_matrix(std::size_t rows, std::size_t cols, RandomStream& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
    return m;
}

Eigen::VectorXd random_unit(std::size_t n, RandomStream& rng) {
    Eigen::VectorXd v = normal_vector(n, rng);
    double norm = v.norm();
    while (norm == 0.0) {
        v = normal_vector(n, rng);
        norm = v.norm();
    }
    return v / norm;
}

Eigen::VectorXd random_simplex(std::size_t n, RandomStream& rng) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = -std::log(rng.uniform_pos());
    return v / v.sum();
}

ModelSuite build_tabular(const SuiteSpec& spec, RandomStream& rng) {
    if (spec.prompt_count < 1 || spec.outcome_count < 2)
        throw InvalidSpec("tabular suite needs >= 1 prompt and >= 2 outcomes");
    if (spec.target_outcome >= spec.outcome_count)
        throw InvalidSpec("target outcome exceeds outcome count");

    ModelSuite s;
    s.id = spec.id;
    s.family = Family::Tabular;
    RandomStream vocab_rng = rng.child("vocab");
    s.vocab = Vocabulary::random(spec.prompt_count, std::max<std::size_t>(spec.embed_dim, 2),
                                 vocab_rng);

    RandomStream row_rng = rng.child("rows");
    Eigen::MatrixXd q2(spec.prompt_count, spec.outcome_count);
    for (Eigen::Index r = 0; r < q2.rows(); ++r)
        q2.row(r) = random_simplex(spec.outcome_count, row_rng).transpose();

    Eigen::MatrixXd q1 = q2;
    const Eigen::Index caption_row = 0;
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(spec.outcome_count);
    spike[static_cast<Eigen::Index>(spec.target_outcome)] = 1.0;
    q1.row(caption_row) =
        (1.0 - spec.gamma) * q2.row(caption_row) + spec.gamma * spike.transpose();

    s.cover.emplace_back(TabularModel(q1));
    s.cover.emplace_back(TabularModel(q2));
    s.safe_index = 1;
    s.target = SamplePoint::categorical(spec.target_outcome);
    s.infringing = InfringingSet::from_outcomes({spec.target_outcome});
    s.caption = Prompt::from_tokens(s.vocab, {static_cast<TokenId>(caption_row)});
    s.contamination = spec.gamma;
    s.prompt_len = 1;
    return s;
}

ModelSuite build_gmm(const SuiteSpec& spec, RandomStream& rng) {
    if (spec.components < 1)
        throw InvalidSpec("gmm suite needs at least one component");
    if (!(spec.base_cov > 0.0) || !(spec.contaminant_cov > 0.0))
        throw InvalidSpec("covariance scales must be positive");

    ModelSuite s;
    s.id = spec.id;
    s.family = Family::Gmm;
    RandomStream vocab_rng = rng.child("vocab");
    s.vocab = Vocabulary::random(spec.vocab_size, spec.embed_dim, vocab_rng);
    RandomStream caption_rng = rng.child("caption");
    s.caption = Prompt::random(s.vocab, spec.prompt_len, caption_rng);
    s.prompt_len = spec.prompt_len;

    RandomStream comp_rng = rng.child("components");
    std::vector<AffineGaussian> comps;
    Eigen::MatrixXd base_cov = spec.base_cov * Eigen::MatrixXd::Identity(spec.dim_y, spec.dim_y);
    for (std::size_t j = 0; j < spec.components; ++j) {
        Eigen::MatrixXd a = spec.base_coupling * random_matrix(spec.dim_y, spec.embed_dim, comp_rng);
        Eigen::VectorXd b = normal_vector(spec.dim_y, comp_rng);
        comps.emplace_back(std::move(a), std::move(b), base_cov);
    }
    std::vector<double> w(spec.components, 1.0 / static_cast<double>(spec.components));
    GaussianMixtureModel q2(w, comps);

    RandomStream target_rng = rng.child("target");
    Eigen::VectorXd y_c =
        comps.front().mean(s.caption.context) + spec.target_offset * random_unit(spec.dim_y, target_rng);

    if (spec.gamma > 0.0) {
        RandomStream cont_rng = rng.child("contaminant");
        Eigen::MatrixXd a_cont = spec.coupling * random_matrix(spec.dim_y, spec.embed_dim, cont_rng);
        Eigen::VectorXd b_cont = y_c - a_cont * s.caption.context;
        std::vector<AffineGaussian> comps1 = comps;
        comps1.emplace_back(std::move(a_cont), std::move(b_cont),
                            spec.contaminant_cov *
                                Eigen::MatrixXd::Identity(spec.dim_y, spec.dim_y));
        std::vector<double> w1(spec.components,
                               (1.0 - spec.gamma) / static_cast<double>(spec.components));
        w1.push_back(spec.gamma);
        s.cover.emplace_back(GaussianMixtureModel(std::move(w1), std::move(comps1)));
    } else {
        s.cover.emplace_back(q2);
    }
    s.cover.emplace_back(std::move(q2));
    s.safe_index = 1;
    s.target = SamplePoint::continuous(y_c);
    s.infringing = InfringingSet::ball(y_c, spec.infringe_radius);
    s.contamination = spec.gamma;
    return s;
}

ModelSuite build_diffusion(const SuiteSpec& spec, RandomStream& rng) {
    if (!(spec.data_cov > 0.0))
        throw InvalidSpec("data covariance must be positive");
    if (spec.shard_size < 1)
        throw InvalidSpec("shard must be nonempty");

    ModelSuite s;
    s.id = spec.id;
    s.family = Family::Diffusion;
    RandomStream vocab_rng = rng.child("vocab");
    s.vocab = Vocabulary::random(spec.vocab_size, spec.embed_dim, vocab_rng);
    RandomStream caption_rng = rng.child("caption");
    s.caption = Prompt::random(s.vocab, spec.prompt_len, caption_rng);
    s.prompt_len = spec.prompt_len;

    RandomStream data_rng = rng.child("data-map");
    Eigen::MatrixXd a_data =
        spec.base_coupling * random_matrix(spec.dim_y, spec.embed_dim, data_rng);
    Eigen::VectorXd b_data = normal_vector(spec.dim_y, data_rng);
    double data_sd = std::sqrt(spec.data_cov);

    RandomStream shard_rng = rng.child("shard");
    std::vector<std::pair<Prompt, SamplePoint>> shard;
    shard.reserve(spec.shard_size);
    for (std::size_t i = 0; i < spec.shard_size; ++i) {
        Prompt x = Prompt::random(s.vocab, spec.prompt_len, shard_rng);
        Eigen::VectorXd y =
            a_data * x.context + b_data + data_sd * normal_vector(spec.dim_y, shard_rng);
        shard.emplace_back(std::move(x), SamplePoint::continuous(std::move(y)));
    }

    RandomStream target_rng = rng.child("target");
    Eigen::VectorXd y_c = a_data * s.caption.context + b_data +
                          spec.target_offset * random_unit(spec.dim_y, target_rng);

    DiffusionSchedule schedule =
        DiffusionSchedule::linear_beta(spec.diffusion_steps, spec.beta_min, spec.beta_max);

    // Same stream label for both shard fits: with gamma = 0 the shards and
    // the noise draws coincide, so q1 == q2 exactly.
    RandomStream fit_q2 = rng.child("fit");
    LinearDiffusionModel q2 =
        fit_linear_denoiser(shard, schedule, spec.ridge, fit_q2, spec.noise_draws);

    std::size_t n_cont = 0;
    if (spec.gamma > 0.0) {
        double raw = spec.gamma * static_cast<double>(spec.shard_size) / (1.0 - spec.gamma);
        n_cont = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(raw)));
    }
    std::vector<std::pair<Prompt, SamplePoint>> shard_cont = shard;
    for (std::size_t i = 0; i < n_cont; ++i)
        shard_cont.emplace_back(s.caption, SamplePoint::continuous(y_c));

    RandomStream fit_q1 = rng.child("fit");
    LinearDiffusionModel q1 =
        fit_linear_denoiser(shard_cont, schedule, spec.ridge, fit_q1, spec.noise_draws);

    std::vector<std::pair<Prompt, SamplePoint>> pool = shard;
    pool.insert(pool.end(), shard_cont.begin(), shard_cont.end());
    RandomStream fit_pool = rng.child("fit-pooled");
    s.pooled_denoiser = fit_linear_denoiser(pool, schedule, spec.ridge, fit_pool,
                                            spec.noise_draws);

    s.cover.emplace_back(std::move(q1));
    s.cover.emplace_back(std::move(q2));
    s.safe_index = 1;
    s.target = SamplePoint::continuous(y_c);
    s.infringing = InfringingSet::ball(y_c, spec.infringe_radius);
    s.contamination = spec.gamma;
    return s;
}

}  // namespace

std::string family_name(Family f) {
    switch (f) {
        case Family::Tabular: return "tabular";
        case Family::Gmm: return "gmm";
        case Family::Diffusion: return "diffusion";
    }
    throw InvalidSpec("unknown family tag");
}

Family family_from_name(const std::string& name) {
    if (name == "tabular") return Family::Tabular;
    if (name == "gmm") return Family::Gmm;
    if (name == "diffusion") return Family::Diffusion;
    throw InvalidSpec("unknown family name: " + name);
}

InfringingSet InfringingSet::from_outcomes(std::vector<std::size_t> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    InfringingSet set;
    set.kind = Kind::Outcomes;
    set.outcomes = std::move(ids);
    return set;
}

InfringingSet InfringingSet::ball(Eigen::VectorXd center, double radius) {
    InfringingSet set;
    set.kind = Kind::Ball;
    set.center = std::move(center);
    set.radius = radius;
    return set;
}

bool InfringingSet::contains(const SamplePoint& y) const {
    if (empty()) return false;
    if (kind == Kind::Outcomes) {
        if (y.kind != SamplePoint::Kind::Categorical)
            throw ShapeMismatch("outcome set tests categorical samples");
        return std::binary_search(outcomes.begin(), outcomes.end(), y.outcome);
    }
    if (y.kind != SamplePoint::Kind::Continuous)
        throw ShapeMismatch("ball set tests vector samples");
    if (y.value.size() != center.size())
        throw ShapeMismatch("sample dimension mismatch");
    return (y.value - center).norm() <= radius;
}

bool InfringingSet::empty() const {
    return kind == Kind::Outcomes ? outcomes.empty() : radius < 0.0;
}

double ModelSuite::log2_p(const Prompt& x, const SamplePoint& y) const {
    double best = kNegInf;
    std::vector<double> terms(cover.size());
    for (std::size_t i = 0; i < cover.size(); ++i) {
        terms[i] = log_density2(cover[i], x, y);
        best = std::max(best, terms[i]);
    }
    if (best == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp2(t - best);
    return best + std::log2(acc / static_cast<double>(cover.size()));
}

Eigen::VectorXd ModelSuite::grad_log2_p_wrt_context(const Prompt& x, const SamplePoint& y) const {
    std::vector<double> terms(cover.size());
    double best = kNegInf;
    for (std::size_t i = 0; i < cover.size(); ++i) {
        terms[i] = log_density2(cover[i], x, y);
        best = std::max(best, terms[i]);
    }
    double total = 0.0;
    for (double t : terms) total += std::exp2(t - best);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.context.size());
    for (std::size_t i = 0; i < cover.size(); ++i) {
        double resp = std::exp2(terms[i] - best) / total;
        if (resp > 0.0) grad += resp * grad_log_density2_wrt_context(cover[i], x, y);
    }
    return grad;
}

SamplePoint ModelSuite::sample_p(const Prompt& x, RandomStream& rng) const {
    std::size_t member = rng.uniform_index(cover.size());
    return sample(cover[member], x, rng);
}

double ModelSuite::log2_q(std::size_t member, const Prompt& x, const SamplePoint& y) const {
    if (member >= cover.size())
        throw IndexOutOfRange("cover member out of range");
    return log_density2(cover[member], x, y);
}

Eigen::VectorXd ModelSuite::grad_log2_q_wrt_context(std::size_t member, const Prompt& x,
                                                    const SamplePoint& y) const {
    if (member >= cover.size())
        throw IndexOutOfRange("cover member out of range");
    return grad_log_density2_wrt_context(cover[member], x, y);
}

void ModelSuite::validate() const {
    if (cover.empty())
        throw InvalidSpec("suite needs a nonempty cover");
    if (safe_index >= cover.size())
        throw InvalidSpec("safe member index out of range");
    for (const auto& m : cover) {
        if (model_family(m) != family)
            throw InvalidSpec("cover member family does not match suite tag");
    }
    if (!(contamination >= 0.0) || contamination >= 1.0)
        throw InvalidSpec("contamination rate must lie in [0, 1)");
    if (caption.tokens.empty())
        throw InvalidSpec("suite needs a caption prompt");
    if (family == Family::Tabular) {
        if (target.kind != SamplePoint::Kind::Categorical ||
            infringing.kind != InfringingSet::Kind::Outcomes)
            throw InvalidSpec("tabular suites use categorical targets");
    } else {
        if (target.kind != SamplePoint::Kind::Continuous ||
            infringing.kind != InfringingSet::Kind::Ball)
            throw InvalidSpec("continuous suites use vector targets");
    }
}

ModelSuite build_suite(const SuiteSpec& spec, RandomStream& rng) {
    if (!(spec.gamma >= 0.0) || spec.gamma >= 1.0)
        throw InvalidSpec("gamma must lie in [0, 1)");
    ModelSuite s;
    switch (spec.family) {
        case Family::Tabular: s = build_tabular(spec, rng); break;
        case Family::Gmm: s = build_gmm(spec, rng); break;
        case Family::Diffusion: s = build_diffusion(spec, rng); break;
    }
    s.validate();
    if (!s.infringing.contains(s.target))
        throw InvalidSpec("target must lie inside the infringing set");
    return s;
}

ModelSuite builtin_suite(const std::string& name) {
    if (name == "TAB-1") {
        ModelSuite s;
        s.id = name;
        s.family = Family::Tabular;
        Eigen::MatrixXd emb(1, 2);
        emb << 1.0, 0.0;
        s.vocab = Vocabulary::from_rows(emb);
        Eigen::MatrixXd q1(1, 2), q2(1, 2);
        q1 << 0.5, 0.5;
        q2 << 0.25, 0.75;
        s.cover.emplace_back(TabularModel(q1));
        s.cover.emplace_back(TabularModel(q2));
        s.safe_index = 1;
        s.target = SamplePoint::categorical(1);
        s.infringing = InfringingSet::from_outcomes({1});
        s.caption = Prompt::from_tokens(s.vocab, {0});
        s.contamination = 0.0;
        s.prompt_len = 1;
        s.validate();
        return s;
    }
    if (name == "TAB-BANDIT") {
        ModelSuite s;
        s.id = name;
        s.family = Family::Tabular;
        s.vocab = Vocabulary::from_rows(Eigen::MatrixXd::Identity(3, 3));
        Eigen::MatrixXd rows(3, 2);
        rows << 1.0, 0.0, 0.98, 0.02, 0.9, 0.1;
        s.cover.emplace_back(TabularModel(rows));
        s.cover.emplace_back(TabularModel(rows));
        s.safe_index = 1;
        s.target = SamplePoint::categorical(1);
        s.infringing = InfringingSet::from_outcomes({1});
        s.caption = Prompt::from_tokens(s.vocab, {2});
        s.contamination = 0.0;
        s.prompt_len = 1;
        s.validate();
        return s;
    }
    if (name == "GMM-1") {
        // The injected component is the context-sensitive pathway; the base
        // components move an order of magnitude less, so prompts cannot steer
        // the safe model onto the target.
        SuiteSpec spec;
        spec.id = name;
        spec.family = Family::Gmm;
        spec.gamma = 0.05;
        spec.dim_y = 2;
        spec.embed_dim = 8;
        spec.vocab_size = 32;
        spec.prompt_len = 8;
        spec.components = 3;
        spec.base_cov = 0.09;
        spec.contaminant_cov = 0.0025;
        spec.coupling = 0.35;
        spec.base_coupling = 0.1;
        spec.target_offset = 0.45;
        spec.infringe_radius = 0.25;
        RandomStream rng(101);
        return build_suite(spec, rng);
    }
    if (name == "DIFF-1") {
        SuiteSpec spec;
        spec.id = name;
        spec.family = Family::Diffusion;
        spec.gamma = 0.05;
        spec.dim_y = 2;
        spec.embed_dim = 8;
        spec.vocab_size = 32;
        spec.prompt_len = 8;
        spec.diffusion_steps = 16;
        spec.shard_size = 256;
        spec.noise_draws = 4;
        spec.beta_min = 0.08;
        spec.beta_max = 0.7;
        spec.data_cov = 0.09;
        spec.ridge = 1e-8;
        spec.base_coupling = 0.1;
        spec.target_offset = 0.45;
        spec.infringe_radius = 0.25;
        RandomStream rng(202);
        return build_suite(spec, rng);
    }
    throw InvalidSpec("unknown builtin suite: " + name);
}

bool is_builtin_suite(const std::string& name) {
    return name == "TAB-1" || name == "TAB-BANDIT" || name == "GMM-1" || name == "DIFF-1";
}

}  // namespace naflab
