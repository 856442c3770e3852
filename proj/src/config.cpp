#include "naflab/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "naflab/errors.hpp"

namespace naflab {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
    throw ConfigError(field, msg);
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) bad(path, "expected an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const std::string_view a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known) bad(join(path, item.key()), "unknown field");
    }
}

double get_double(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) bad(join(path, key), "expected a number");
    return v.get<double>();
}

std::size_t get_size(const json& obj, const std::string& path, const char* key,
                     std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) bad(join(path, key), "expected a non-negative integer");
    return v.get<std::size_t>();
}

std::uint64_t get_u64(const json& obj, const std::string& path, const char* key,
                      std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) bad(join(path, key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) bad(join(path, key), "expected a string");
    return v.get<std::string>();
}

std::vector<double> get_double_array(const json& obj, const std::string& path, const char* key,
                                     std::vector<double> fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array()) bad(join(path, key), "expected an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number()) bad(join(path, key), "expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<std::string> get_string_array(const json& obj, const std::string& path,
                                          const char* key, std::vector<std::string> fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array()) bad(join(path, key), "expected an array of strings");
    std::vector<std::string> out;
    for (const json& e : v) {
        if (!e.is_string()) bad(join(path, key), "expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

void require_probability(double v, const std::string& field, bool allow_one) {
    if (!(v > 0.0) || (allow_one ? !(v <= 1.0) : !(v < 1.0)))
        bad(field, allow_one ? "must lie in (0, 1]" : "must lie in (0, 1)");
}

void check_prompt_source(const std::string& name, const std::string& field) {
    if (name != "caption" && name != "random" && name != "antinaf")
        bad(field, "unknown prompt source '" + name + "' (caption | random | antinaf)");
}

void parse_suite(const json& obj, RunConfig& cfg) {
    const std::string path = "suite";
    if (obj.contains("builtin")) {
        check_keys(obj, path, {"builtin"});
        const std::string name = get_string(obj, path, "builtin", "");
        if (!is_builtin_suite(name)) bad("suite.builtin", "unknown builtin suite '" + name + "'");
        cfg.suite_is_builtin = true;
        cfg.builtin_name = name;
        return;
    }
    check_keys(obj, path,
               {"id", "family", "gamma", "dim_y", "embed_dim", "vocab_size", "prompt_len",
                "target_offset", "infringe_radius", "prompt_count", "outcome_count",
                "target_outcome", "components", "base_cov", "contaminant_cov", "coupling",
                "base_coupling", "diffusion_steps", "shard_size", "noise_draws", "beta_min",
                "beta_max", "data_cov", "ridge"});
    if (!obj.contains("family")) bad("suite.family", "required for a custom suite");
    cfg.suite_is_builtin = false;
    SuiteSpec& s = cfg.suite_spec;
    s.id = get_string(obj, path, "id", s.id);
    const std::string family = get_string(obj, path, "family", "");
    try {
        s.family = family_from_name(family);
    } catch (const Error&) {
        bad("suite.family", "unknown family '" + family + "'");
    }
    s.gamma = get_double(obj, path, "gamma", s.gamma);
    if (!(s.gamma >= 0.0) || !(s.gamma < 1.0)) bad("suite.gamma", "must lie in [0, 1)");
    s.dim_y = get_size(obj, path, "dim_y", s.dim_y);
    s.embed_dim = get_size(obj, path, "embed_dim", s.embed_dim);
    s.vocab_size = get_size(obj, path, "vocab_size", s.vocab_size);
    s.prompt_len = get_size(obj, path, "prompt_len", s.prompt_len);
    s.target_offset = get_double(obj, path, "target_offset", s.target_offset);
    s.infringe_radius = get_double(obj, path, "infringe_radius", s.infringe_radius);
    if (s.family != Family::Tabular && !(s.infringe_radius > 0.0))
        bad("suite.infringe_radius", "must be positive");
    s.prompt_count = get_size(obj, path, "prompt_count", s.prompt_count);
    s.outcome_count = get_size(obj, path, "outcome_count", s.outcome_count);
    s.target_outcome = get_size(obj, path, "target_outcome", s.target_outcome);
    s.components = get_size(obj, path, "components", s.components);
    s.base_cov = get_double(obj, path, "base_cov", s.base_cov);
    s.contaminant_cov = get_double(obj, path, "contaminant_cov", s.contaminant_cov);
    s.coupling = get_double(obj, path, "coupling", s.coupling);
    s.base_coupling = get_double(obj, path, "base_coupling", s.base_coupling);
    s.diffusion_steps = get_size(obj, path, "diffusion_steps", s.diffusion_steps);
    s.shard_size = get_size(obj, path, "shard_size", s.shard_size);
    s.noise_draws = get_size(obj, path, "noise_draws", s.noise_draws);
    s.beta_min = get_double(obj, path, "beta_min", s.beta_min);
    s.beta_max = get_double(obj, path, "beta_max", s.beta_max);
    s.data_cov = get_double(obj, path, "data_cov", s.data_cov);
    s.ridge = get_double(obj, path, "ridge", s.ridge);
}

void parse_protection(const json& obj, ProtectionSpec& p) {
    const std::string path = "protection";
    check_keys(obj, path, {"ar_grid", "k", "calibration_samples"});
    p.ar_grid = get_double_array(obj, path, "ar_grid", p.ar_grid);
    if (p.ar_grid.empty()) bad("protection.ar_grid", "must not be empty");
    for (std::size_t i = 0; i < p.ar_grid.size(); ++i) {
        if (!(p.ar_grid[i] > 0.0) || !(p.ar_grid[i] <= 1.0))
            bad("protection.ar_grid", "entries must lie in (0, 1]");
        if (i > 0 && !(p.ar_grid[i] > p.ar_grid[i - 1]))
            bad("protection.ar_grid", "entries must be strictly increasing");
    }
    if (obj.contains("k")) {
        const json& v = obj.at("k");
        if (!v.is_number()) bad("protection.k", "expected a number");
        p.explicit_k = v.get<double>();
    }
    p.calibration_samples = get_size(obj, path, "calibration_samples", p.calibration_samples);
    if (p.calibration_samples == 0) bad("protection.calibration_samples", "must be positive");
}

void parse_attack(const json& obj, AttackSpec& a) {
    const std::string path = "attack";
    check_keys(obj, path, {"mode", "steps", "score", "s_tar", "max_attempts", "trials", "prompt"});
    const std::string mode = get_string(obj, path, "mode", "amplified");
    if (mode == "single")
        a.mode = AttackMode::Kind::Single;
    else if (mode == "amplified")
        a.mode = AttackMode::Kind::Amplified;
    else if (mode == "bandit")
        a.mode = AttackMode::Kind::BanditAmplified;
    else
        bad("attack.mode", "unknown mode '" + mode + "' (single | amplified | bandit)");
    a.steps = get_size(obj, path, "steps", a.steps);
    if (a.steps == 0) bad("attack.steps", "must be positive");
    if (obj.contains("score")) {
        const std::string score = get_string(obj, path, "score", "");
        if (score == "indicator")
            a.score = ScoreFunction::Kind::Indicator;
        else if (score == "negative-distance")
            a.score = ScoreFunction::Kind::NegativeDistance;
        else
            bad("attack.score", "unknown score '" + score + "' (indicator | negative-distance)");
    }
    if (obj.contains("s_tar")) {
        const json& v = obj.at("s_tar");
        if (!v.is_number()) bad("attack.s_tar", "expected a number");
        a.s_tar = v.get<double>();
    }
    a.max_attempts = get_size(obj, path, "max_attempts", a.max_attempts);
    if (a.max_attempts == 0) bad("attack.max_attempts", "must be positive");
    a.trials = get_size(obj, path, "trials", a.trials);
    if (a.trials == 0) bad("attack.trials", "must be positive");
    a.prompt = get_string(obj, path, "prompt", a.prompt);
    check_prompt_source(a.prompt, "attack.prompt");
}

void parse_bandit(const json& obj, BanditSpec& b) {
    const std::string path = "bandit";
    check_keys(obj, path, {"variant", "warmup", "explore", "candidates"});
    const std::string variant = get_string(obj, path, "variant", "cdf");
    if (variant == "max")
        b.variant = BanditVariant::Max;
    else if (variant == "cdf")
        b.variant = BanditVariant::Cdf;
    else
        bad("bandit.variant", "unknown variant '" + variant + "' (max | cdf)");
    b.warmup = get_size(obj, path, "warmup", b.warmup);
    b.explore = get_double(obj, path, "explore", b.explore);
    if (!(b.explore >= 0.0) || !(b.explore <= 1.0)) bad("bandit.explore", "must lie in [0, 1]");
    b.candidates = get_string_array(obj, path, "candidates", b.candidates);
    if (b.candidates.empty()) bad("bandit.candidates", "must not be empty");
    for (const std::string& c : b.candidates) check_prompt_source(c, "bandit.candidates");
}

void parse_antinaf(const json& obj, AntiNafSpec& a) {
    const std::string path = "antinaf";
    check_keys(obj, path,
               {"steps", "learning_rate", "lambda", "phi", "grad_accum", "tokens", "optimizer",
                "ablation", "seeds"});
    OptimizerConfig& c = a.config;
    c.steps = get_size(obj, path, "steps", c.steps);
    c.learning_rate = get_double(obj, path, "learning_rate", c.learning_rate);
    if (!(c.learning_rate > 0.0)) bad("antinaf.learning_rate", "must be positive");
    c.lambda = get_double(obj, path, "lambda", c.lambda);
    if (!(c.lambda >= 0.0) || !(c.lambda <= 1.0)) bad("antinaf.lambda", "must lie in [0, 1]");
    c.phi = get_double(obj, path, "phi", c.phi);
    if (!std::isfinite(c.phi)) bad("antinaf.phi", "must be finite");
    c.grad_accum = get_size(obj, path, "grad_accum", c.grad_accum);
    if (c.grad_accum == 0) bad("antinaf.grad_accum", "must be positive");
    c.tokens = get_size(obj, path, "tokens", c.tokens);
    if (c.tokens == 0) bad("antinaf.tokens", "must be positive");
    const std::string optimizer = get_string(obj, path, "optimizer", "adagrad");
    if (optimizer == "sgd")
        c.optimizer = OptimizerKind::PlainSgd;
    else if (optimizer == "adagrad")
        c.optimizer = OptimizerKind::AdagradStyle;
    else
        bad("antinaf.optimizer", "unknown optimizer '" + optimizer + "' (sgd | adagrad)");
    const std::string ablation = get_string(obj, path, "ablation", "full");
    try {
        c.ablation = ablation_from_name(ablation);
    } catch (const Error&) {
        bad("antinaf.ablation", "unknown ablation '" + ablation + "'");
    }
    a.seeds = get_size(obj, path, "seeds", a.seeds);
    if (a.seeds == 0) bad("antinaf.seeds", "must be positive");
}

void parse_report(const json& obj, ReportSpec& r) {
    const std::string path = "report";
    check_keys(obj, path, {"prompts", "modes", "cir_samples", "eq4_cases", "thm1", "thm2"});
    r.prompts = get_string_array(obj, path, "prompts", r.prompts);
    if (r.prompts.empty()) bad("report.prompts", "must not be empty");
    for (const std::string& p : r.prompts) check_prompt_source(p, "report.prompts");
    r.modes = get_string_array(obj, path, "modes", r.modes);
    if (r.modes.empty()) bad("report.modes", "must not be empty");
    for (const std::string& m : r.modes)
        if (m != "single" && m != "amplified" && m != "bandit")
            bad("report.modes", "unknown mode '" + m + "' (single | amplified | bandit)");
    r.cir_samples = get_size(obj, path, "cir_samples", r.cir_samples);
    if (r.cir_samples == 0) bad("report.cir_samples", "must be positive");
    r.eq4_cases = get_size(obj, path, "eq4_cases", r.eq4_cases);
    if (obj.contains("thm1")) {
        const json& t = obj.at("thm1");
        check_keys(t, "report.thm1", {"sigma", "eps", "trials"});
        r.thm1.sigma = get_double(t, "report.thm1", "sigma", r.thm1.sigma);
        require_probability(r.thm1.sigma, "report.thm1.sigma", true);
        r.thm1.eps = get_double(t, "report.thm1", "eps", r.thm1.eps);
        require_probability(r.thm1.eps, "report.thm1.eps", false);
        r.thm1.trials = get_size(t, "report.thm1", "trials", r.thm1.trials);
        if (r.thm1.trials == 0) bad("report.thm1.trials", "must be positive");
    }
    if (obj.contains("thm2")) {
        const json& t = obj.at("thm2");
        check_keys(t, "report.thm2", {"delta", "resolution", "ar"});
        r.thm2.delta = get_double(t, "report.thm2", "delta", r.thm2.delta);
        if (!(r.thm2.delta > 0.0)) bad("report.thm2.delta", "must be positive");
        r.thm2.resolution = get_size(t, "report.thm2", "resolution", r.thm2.resolution);
        if (r.thm2.resolution < 8) bad("report.thm2.resolution", "must be at least 8");
        r.thm2.ar = get_double(t, "report.thm2", "ar", r.thm2.ar);
        require_probability(r.thm2.ar, "report.thm2.ar", true);
    }
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        bad("json", e.what());
    }
    if (!root.is_object()) bad("json", "top level must be an object");
    check_keys(root, "",
               {"seed", "out", "threads", "suite", "protection", "attack", "bandit", "antinaf",
                "report"});

    RunConfig cfg;
    cfg.seed = get_u64(root, "", "seed", cfg.seed);
    cfg.out = get_string(root, "", "out", cfg.out);
    cfg.threads = get_size(root, "", "threads", cfg.threads);
    if (cfg.threads == 0) bad("threads", "must be positive");
    if (root.contains("suite")) parse_suite(root.at("suite"), cfg);
    if (root.contains("protection")) parse_protection(root.at("protection"), cfg.protection);
    if (root.contains("attack")) parse_attack(root.at("attack"), cfg.attack);
    if (root.contains("bandit")) parse_bandit(root.at("bandit"), cfg.bandit);
    if (root.contains("antinaf")) parse_antinaf(root.at("antinaf"), cfg.antinaf);
    if (root.contains("report")) parse_report(root.at("report"), cfg.report);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bad(path.string(), "cannot read config file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

ModelSuite build_config_suite(const RunConfig& cfg, RandomStream& base) {
    if (cfg.suite_is_builtin) return builtin_suite(cfg.builtin_name);
    RandomStream build = base.child("suite-build");
    return build_suite(cfg.suite_spec, build);
}

}  // namespace naflab
