#include "naflab/serialize.hpp"

#include <variant>

namespace naflab {

namespace {

using nlohmann::json;

json model_to_json(const Model& model) {
    json out;
    if (const auto* tab = std::get_if<TabularModel>(&model)) {
        out["family"] = "tabular";
        out["table"] = matrix_to_json(tab->table());
    } else if (const auto* gmm = std::get_if<GaussianMixtureModel>(&model)) {
        out["family"] = "gmm";
        out["weights"] = gmm->weights();
        json comps = json::array();
        for (const AffineGaussian& g : gmm->components()) {
            json c;
            c["mean_map"] = matrix_to_json(g.mean_map());
            c["offset"] = vector_to_json(g.offset());
            c["cov"] = matrix_to_json(g.cov());
            comps.push_back(std::move(c));
        }
        out["components"] = std::move(comps);
    } else {
        const auto& diff = std::get<LinearDiffusionModel>(model);
        out["family"] = "diffusion";
        out["alpha_bar"] = diff.schedule().alpha_bar;
        out["sigma"] = diff.schedule().sigma;
        json steps = json::array();
        for (const DenoiserStep& s : diff.denoiser_steps()) {
            json step;
            step["w"] = matrix_to_json(s.w);
            step["u"] = matrix_to_json(s.u);
            step["b"] = vector_to_json(s.b);
            steps.push_back(std::move(step));
        }
        out["steps"] = std::move(steps);
    }
    return out;
}

json sample_to_json(const SamplePoint& y) {
    json out;
    if (y.kind == SamplePoint::Kind::Categorical) {
        out["kind"] = "categorical";
        out["outcome"] = y.outcome;
    } else {
        out["kind"] = "continuous";
        out["value"] = vector_to_json(y.value);
    }
    return out;
}

}  // namespace

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

nlohmann::json suite_to_json(const ModelSuite& suite) {
    json out;
    out["id"] = suite.id;
    out["family"] = family_name(suite.family);
    out["contamination"] = suite.contamination;
    out["prompt_len"] = suite.prompt_len;
    out["safe_index"] = suite.safe_index;
    out["vocab"] = matrix_to_json(suite.vocab.embeddings());
    json cover = json::array();
    for (const Model& m : suite.cover) cover.push_back(model_to_json(m));
    out["cover"] = std::move(cover);
    out["target"] = sample_to_json(suite.target);
    json infringing;
    if (suite.infringing.kind == InfringingSet::Kind::Outcomes) {
        infringing["kind"] = "outcomes";
        infringing["outcomes"] = suite.infringing.outcomes;
    } else {
        infringing["kind"] = "ball";
        infringing["center"] = vector_to_json(suite.infringing.center);
        infringing["radius"] = suite.infringing.radius;
    }
    out["infringing"] = std::move(infringing);
    out["caption_tokens"] = suite.caption.tokens;
    if (suite.pooled_denoiser)
        out["pooled_denoiser"] = model_to_json(Model(*suite.pooled_denoiser));
    return out;
}

nlohmann::json theorem2_to_json(const Theorem2Report& report) {
    json out;
    out["eta"] = report.eta;
    out["delta"] = report.delta;
    out["alpha"] = report.alpha;
    out["eps_p"] = report.eps_p;
    out["eps_c"] = report.eps_c;
    out["eps_rho"] = report.eps_rho;
    out["eps"] = report.eps;
    out["c1"] = report.c1;
    out["c2"] = report.c2;
    out["bound"] = report.bound;
    out["lhs"] = report.lhs;
    out["quadrature_error"] = report.quadrature_error;
    out["holds"] = report.holds;
    out["retained"] = report.retained;
    out["best_candidate"] = report.best_candidate;
    return out;
}

}  // namespace naflab
