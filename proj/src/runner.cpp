#include "naflab/runner.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "naflab/antinaf.hpp"
#include "naflab/errors.hpp"
#include "naflab/io.hpp"
#include "naflab/serialize.hpp"
#include "naflab/stats.hpp"

namespace naflab {

namespace {

using nlohmann::json;

std::string checksum_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(bytes));
    return std::string(buf);
}

// Collects artifacts, then writes them plus a summary.json whose manifest
// lists every file with its checksum.
class OutputBundle {
public:
    OutputBundle(std::filesystem::path dir, std::string command, std::uint64_t seed)
        : dir_(std::move(dir)) {
        summary_["command"] = std::move(command);
        summary_["seed"] = seed;
    }

    json& summary() { return summary_; }

    void add_file(const std::string& name, std::string content) {
        files_.emplace_back(name, std::move(content));
    }

    void finalize() {
        json manifest = json::array();
        for (const auto& [name, content] : files_) {
            json entry;
            entry["path"] = name;
            entry["checksum"] = checksum_hex(content);
            manifest.push_back(std::move(entry));
        }
        summary_["files"] = std::move(manifest);
        for (const auto& [name, content] : files_) write_file_atomic(dir_ / name, content);
        write_file_atomic(dir_ / "summary.json", summary_.dump(2) + "\n");
    }

private:
    std::filesystem::path dir_;
    json summary_;
    std::vector<std::pair<std::string, std::string>> files_;
};

Prompt make_prompt(const std::string& source, const ModelSuite& suite, const RunConfig& cfg,
                   const RandomStream& base) {
    if (source == "caption") return suite.caption;
    if (source == "random") {
        RandomStream r = base.child("prompt-random");
        return Prompt::random(suite.vocab, suite.prompt_len, r);
    }
    if (suite.family == Family::Tabular)
        throw ConfigError("prompts", "antinaf prompts need a continuous suite");
    RandomStream r = base.child("prompt-antinaf");
    return optimize_prompt(suite, cfg.antinaf.config, r).prompt;
}

json prompt_to_json(const std::string& source, const Prompt& prompt) {
    json out;
    out["source"] = source;
    out["tokens"] = prompt.tokens;
    return out;
}

ScoreFunction resolve_score(const RunConfig& cfg, const ModelSuite& suite) {
    const ScoreFunction::Kind kind = cfg.attack.score.value_or(
        suite.family == Family::Tabular ? ScoreFunction::Kind::Indicator
                                        : ScoreFunction::Kind::NegativeDistance);
    if (kind == ScoreFunction::Kind::NegativeDistance && suite.family == Family::Tabular)
        throw ConfigError("attack.score", "negative-distance needs a continuous suite");
    ScoreFunction score = kind == ScoreFunction::Kind::Indicator
                              ? ScoreFunction::indicator()
                              : ScoreFunction::negative_distance(suite.infringing.radius);
    if (cfg.attack.s_tar) score.s_tar = *cfg.attack.s_tar;
    return score;
}

ProtectionPolicy make_policy(const RunConfig& cfg, const ModelSuite& suite, const Prompt& x,
                             double ar, const RandomStream& base, std::uint64_t index) {
    if (cfg.protection.explicit_k)
        return ProtectionPolicy{*cfg.protection.explicit_k, ar, 0};
    RandomStream calib = base.child("calibrate", index);
    return calibrate_k(suite, x, ar, cfg.protection.calibration_samples, calib);
}

PolicyConfig bandit_policy_config(const RunConfig& cfg, std::size_t arms, double s_tar) {
    PolicyConfig pc;
    pc.arms = arms;
    pc.warmup = cfg.bandit.warmup;
    pc.explore = cfg.bandit.explore;
    pc.variant = cfg.bandit.variant;
    pc.s_tar = s_tar;
    return pc;
}

AttackMode make_mode(const RunConfig& cfg, const std::string& name, double s_tar) {
    if (name == "single") return AttackMode::single();
    if (name == "amplified") return AttackMode::amplified(cfg.attack.steps);
    return AttackMode::bandit_amplified(bandit_policy_config(cfg, 0, s_tar), cfg.attack.steps);
}

std::string joined_candidates(const RunConfig& cfg) {
    std::string tag = "bandit:";
    for (std::size_t i = 0; i < cfg.bandit.candidates.size(); ++i) {
        if (i > 0) tag += '+';
        tag += cfg.bandit.candidates[i];
    }
    return tag;
}

void require_continuous(const ModelSuite& suite, const char* field, const char* need) {
    if (suite.family == Family::Tabular) throw ConfigError(field, need);
}

// ---- subcommands -----------------------------------------------------

void run_suite_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    const ModelSuite suite = build_config_suite(cfg, base);
    bundle.add_file("suite.json", suite_to_json(suite).dump(2) + "\n");

    json info;
    info["id"] = suite.id;
    info["family"] = family_name(suite.family);
    info["cover_size"] = suite.cover_size();
    info["contamination"] = suite.contamination;
    bundle.summary()["suite"] = std::move(info);

    json calibration = json::array();
    for (std::size_t i = 0; i < cfg.protection.ar_grid.size(); ++i) {
        const double ar = cfg.protection.ar_grid[i];
        RandomStream calib = base.child("calibrate", i);
        const ProtectionPolicy policy =
            calibrate_k(suite, suite.caption, ar, cfg.protection.calibration_samples, calib);
        json row;
        row["ar"] = ar;
        row["k"] = policy.k_x;
        calibration.push_back(std::move(row));
    }
    bundle.summary()["calibration"] = std::move(calibration);
}

void run_attack_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    if (cfg.attack.mode == AttackMode::Kind::Single)
        throw ConfigError("attack.mode", "the attack command needs an amplified mode");
    const ModelSuite suite = build_config_suite(cfg, base);
    const ScoreFunction score = resolve_score(cfg, suite);
    const double ar = cfg.protection.ar_grid.front();

    PromptSource source = PromptSource::fixed(suite.caption);
    std::vector<ProtectionPolicy> policies;
    json prompts = json::array();
    if (cfg.attack.mode == AttackMode::Kind::BanditAmplified) {
        std::vector<Prompt> candidates;
        for (const std::string& name : cfg.bandit.candidates) {
            candidates.push_back(make_prompt(name, suite, cfg, base));
            prompts.push_back(prompt_to_json(name, candidates.back()));
        }
        for (std::size_t i = 0; i < candidates.size(); ++i)
            policies.push_back(make_policy(cfg, suite, candidates[i], ar, base, i));
        const PolicyConfig pc = bandit_policy_config(cfg, candidates.size(), score.s_tar);
        source = PromptSource::bandit(pc, std::move(candidates));
    } else {
        const Prompt prompt = make_prompt(cfg.attack.prompt, suite, cfg, base);
        prompts.push_back(prompt_to_json(cfg.attack.prompt, prompt));
        policies.push_back(make_policy(cfg, suite, prompt, ar, base, 0));
        source = PromptSource::fixed(prompt);
    }

    std::vector<AttackTrace> traces(cfg.attack.trials);
    const RandomStream attack_base = base.child("attack");
    parallel_for(cfg.attack.trials, cfg.threads, [&](std::size_t i) {
        RandomStream trial = attack_base.child("trial", i);
        traces[i] = run_amplification_trial(suite, policies, source, cfg.attack.steps, score,
                                            cfg.attack.max_attempts, trial);
    });

    std::ostringstream csv;
    write_trace_header(csv);
    std::size_t successes = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        append_trace_rows(csv, i, traces[i]);
        if (traces[i].success) ++successes;
    }
    bundle.add_file("traces.csv", csv.str());

    const double rate = static_cast<double>(successes) / static_cast<double>(traces.size());
    json attack;
    attack["mode"] = cfg.attack.mode == AttackMode::Kind::BanditAmplified ? "bandit" : "amplified";
    attack["steps"] = cfg.attack.steps;
    attack["trials"] = cfg.attack.trials;
    attack["ar"] = ar;
    attack["k"] = policies.front().k_x;
    attack["success_rate"] = rate;
    attack["ci_halfwidth"] = wald_halfwidth(rate, traces.size());
    if (cfg.attack.mode == AttackMode::Kind::Amplified) {
        RandomStream sigma_rng = base.child("sigma");
        const RateEstimate sigma = estimate_single_shot_sigma(
            suite, source.prompt, policies.front(), cfg.protection.calibration_samples, sigma_rng);
        attack["sigma"] = sigma.value;
        attack["predicted_success"] = amplified_success_prob(sigma.value, cfg.attack.steps);
    }
    bundle.summary()["suite"] = suite.id;
    bundle.summary()["prompts"] = std::move(prompts);
    bundle.summary()["attack"] = std::move(attack);
}

void run_optimize_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    const ModelSuite suite = build_config_suite(cfg, base);
    require_continuous(suite, "suite", "prompt optimization needs a continuous suite");

    std::vector<OptimizationResult> results(cfg.antinaf.seeds);
    parallel_for(cfg.antinaf.seeds, cfg.threads, [&](std::size_t s) {
        RandomStream stream = base.child("antinaf", s);
        results[s] = optimize_prompt(suite, cfg.antinaf.config, stream);
    });

    json runs = json::array();
    double mean_final = 0.0;
    for (std::size_t s = 0; s < results.size(); ++s) {
        std::ostringstream csv;
        write_optimize_trace(csv, results[s]);
        bundle.add_file("antinaf-" + std::to_string(s) + ".csv", csv.str());
        json run;
        run["seed_index"] = s;
        run["initial_rho"] = results[s].initial_rho;
        run["final_rho"] = results[s].final_rho;
        run["tokens"] = results[s].prompt.tokens;
        runs.push_back(std::move(run));
        mean_final += results[s].final_rho;
    }
    bundle.summary()["suite"] = suite.id;
    bundle.summary()["ablation"] = ablation_name(cfg.antinaf.config.ablation);
    bundle.summary()["runs"] = std::move(runs);
    bundle.summary()["mean_final_rho"] = mean_final / static_cast<double>(results.size());
}

struct CurveJob {
    std::string prompt_tag;
    PromptSource source;
    AttackMode mode;
};

void append_curves(const RunConfig& cfg, const ModelSuite& suite, const RandomStream& base,
                   const std::vector<std::string>& mode_names, OutputBundle& bundle,
                   json& prompts_json) {
    const InfringementRule rule = InfringementRule::from_suite(suite);
    const ScoreFunction score = rule.induced_score();

    std::vector<CurveJob> jobs;
    std::vector<Prompt> fixed_prompts;
    std::vector<std::string> fixed_tags;
    for (const std::string& name : cfg.report.prompts) {
        fixed_prompts.push_back(make_prompt(name, suite, cfg, base));
        fixed_tags.push_back(name);
        prompts_json.push_back(prompt_to_json(name, fixed_prompts.back()));
    }
    std::vector<Prompt> candidates;
    for (const std::string& name : cfg.bandit.candidates)
        candidates.push_back(make_prompt(name, suite, cfg, base));

    for (const std::string& mode_name : mode_names) {
        const AttackMode mode = make_mode(cfg, mode_name, score.s_tar);
        if (mode.kind == AttackMode::Kind::BanditAmplified) {
            CurveJob job;
            job.prompt_tag = joined_candidates(cfg);
            job.source = PromptSource::bandit(mode.bandit, candidates);
            job.mode = mode;
            jobs.push_back(std::move(job));
        } else {
            for (std::size_t i = 0; i < fixed_prompts.size(); ++i) {
                CurveJob job;
                job.prompt_tag = fixed_tags[i];
                job.source = PromptSource::fixed(fixed_prompts[i]);
                job.mode = mode;
                jobs.push_back(std::move(job));
            }
        }
    }

    const std::vector<double>& grid = cfg.protection.ar_grid;
    const std::size_t n_points = jobs.size() * grid.size();
    std::vector<FarArPoint> points(n_points);
    const RandomStream curve_base = base.child("curve").child(suite.id);
    parallel_for(n_points, cfg.threads, [&](std::size_t idx) {
        const std::size_t job_idx = idx / grid.size();
        const std::size_t ar_idx = idx % grid.size();
        const CurveJob& job = jobs[job_idx];
        RandomStream stream =
            curve_base.child(job.prompt_tag).child(job.mode.tag()).child("ar", ar_idx);
        const RateEstimate est =
            far_at_ar(suite, job.source, rule, grid[ar_idx], job.mode, cfg.attack.trials, stream,
                      cfg.protection.calibration_samples, cfg.attack.max_attempts);
        FarArPoint p;
        p.ar = grid[ar_idx];
        p.far = est.value;
        p.ci_halfwidth = est.ci_halfwidth;
        p.trials = cfg.attack.trials;
        p.mode = job.mode.tag();
        p.prompt = job.prompt_tag;
        points[idx] = std::move(p);
    });

    std::ostringstream csv;
    write_curve_header(csv);
    FarArCurve all;
    all.points = std::move(points);
    append_curve_rows(csv, suite.id, all, cfg.seed);
    bundle.add_file("curves.csv", csv.str());
    bundle.summary()["curves"] = json::array({"curves.csv"});
}

void run_curve_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    const ModelSuite suite = build_config_suite(cfg, base);
    const std::string mode_name = cfg.attack.mode == AttackMode::Kind::Single  ? "single"
                                  : cfg.attack.mode == AttackMode::Kind::Amplified
                                      ? "amplified"
                                      : "bandit";
    json prompts = json::array();
    append_curves(cfg, suite, base, {mode_name}, bundle, prompts);
    bundle.summary()["suite"] = suite.id;
    bundle.summary()["prompts"] = std::move(prompts);
    bundle.summary()["trials"] = cfg.attack.trials;
}

json run_thm1_block(const RunConfig& cfg, RandomStream& base) {
    const Theorem1Spec& spec = cfg.report.thm1;
    const std::size_t steps = required_steps(spec.sigma, spec.eps);
    RandomStream sim = base.child("thm1");
    const double frequency = simulate_theorem1(spec.sigma, spec.eps, spec.trials, sim);
    json out;
    out["sigma"] = spec.sigma;
    out["eps"] = spec.eps;
    out["T"] = steps;
    out["trials"] = spec.trials;
    out["frequency"] = frequency;
    out["ci_halfwidth"] = wald_halfwidth(frequency, spec.trials);
    out["analytic"] = amplified_success_prob(spec.sigma, steps);
    return out;
}

json run_thm2_block(const RunConfig& cfg, const ModelSuite& suite, RandomStream& base) {
    std::vector<Prompt> candidates;
    std::vector<ProtectionPolicy> policies;
    json used = json::array();
    for (std::size_t i = 0; i < cfg.report.prompts.size(); ++i) {
        const std::string& name = cfg.report.prompts[i];
        candidates.push_back(make_prompt(name, suite, cfg, base));
        RandomStream calib = base.child("thm2-calibrate", i);
        policies.push_back(calibrate_k(suite, candidates.back(), cfg.report.thm2.ar,
                                       cfg.protection.calibration_samples, calib));
        used.push_back(name);
    }
    const Theorem2Report report = verify_theorem2(suite, candidates, policies,
                                                  cfg.report.thm2.delta,
                                                  cfg.report.thm2.resolution);
    json out = theorem2_to_json(report);
    out["ar"] = cfg.report.thm2.ar;
    out["prompts"] = std::move(used);
    return out;
}

void run_thm1_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    bundle.summary()["thm1"] = run_thm1_block(cfg, base);
}

void run_thm2_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    const ModelSuite suite = build_config_suite(cfg, base);
    require_continuous(suite, "suite", "the lower-bound check needs a continuous suite");
    if (suite.target.value.size() > 2)
        throw ConfigError("suite.dim_y", "the lower-bound check covers 1-D and 2-D suites");
    bundle.summary()["suite"] = suite.id;
    bundle.summary()["thm2"] = run_thm2_block(cfg, suite, base);
}

void run_report_cmd(const RunConfig& cfg, OutputBundle& bundle, RandomStream& base) {
    const ModelSuite suite = build_config_suite(cfg, base);
    bundle.add_file("suite.json", suite_to_json(suite).dump(2) + "\n");

    json suite_info;
    suite_info["id"] = suite.id;
    suite_info["family"] = family_name(suite.family);
    suite_info["cover_size"] = suite.cover_size();
    suite_info["contamination"] = suite.contamination;
    bundle.summary()["suite"] = std::move(suite_info);

    json prompts = json::array();
    append_curves(cfg, suite, base, cfg.report.modes, bundle, prompts);

    const InfringementRule rule = InfringementRule::from_suite(suite);
    json cir_block;
    for (std::size_t i = 0; i < cfg.report.prompts.size(); ++i) {
        const std::string& name = cfg.report.prompts[i];
        const Prompt prompt = make_prompt(name, suite, cfg, base);
        RandomStream stream = base.child("cir", i);
        cir_block[name] = cir(suite, prompt, rule, cfg.report.cir_samples, stream);
    }
    bundle.summary()["prompts"] = std::move(prompts);
    bundle.summary()["cir"] = std::move(cir_block);

    if (cfg.attack.mode != AttackMode::Kind::Single) {
        const ScoreFunction score = resolve_score(cfg, suite);
        const Prompt prompt = make_prompt(cfg.attack.prompt, suite, cfg, base);
        const double ar = cfg.protection.ar_grid.front();
        const std::vector<ProtectionPolicy> policies = {
            make_policy(cfg, suite, prompt, ar, base, 0)};
        const PromptSource source = PromptSource::fixed(prompt);
        std::vector<AttackTrace> traces(cfg.attack.trials);
        const RandomStream attack_base = base.child("attack");
        parallel_for(cfg.attack.trials, cfg.threads, [&](std::size_t i) {
            RandomStream trial = attack_base.child("trial", i);
            traces[i] =
                run_amplification_trial(suite, policies, source, cfg.attack.steps, score,
                                        cfg.attack.max_attempts, trial);
        });
        std::ostringstream csv;
        write_trace_header(csv);
        for (std::size_t i = 0; i < traces.size(); ++i) append_trace_rows(csv, i, traces[i]);
        bundle.add_file("traces.csv", csv.str());
    }

    if (cfg.report.eq4_cases > 0) {
        RandomStream audit_rng = base.child("eq4-audit");
        const AuditResult audit = eq4_audit(cfg.report.eq4_cases, audit_rng);
        json audit_json;
        audit_json["cases"] = audit.cases;
        audit_json["violations"] = audit.violations;
        bundle.summary()["eq4_audit"] = std::move(audit_json);
    }

    bundle.summary()["thm1"] = run_thm1_block(cfg, base);
    if (suite.family != Family::Tabular && suite.target.value.size() <= 2)
        bundle.summary()["thm2"] = run_thm2_block(cfg, suite, base);
}

}  // namespace

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads == 0) threads = 1;
    threads = std::min(threads, n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

bool is_known_command(const std::string& command) {
    return command == "suite" || command == "attack" || command == "optimize" ||
           command == "curve" || command == "verify-thm1" || command == "verify-thm2" ||
           command == "report";
}

void run_command(const std::string& command, const RunConfig& cfg) {
    if (!is_known_command(command)) throw ConfigError("command", "unknown command '" + command + "'");
    std::filesystem::create_directories(cfg.out);
    OutputBundle bundle(cfg.out, command, cfg.seed);
    RandomStream base(cfg.seed);
    if (command == "suite")
        run_suite_cmd(cfg, bundle, base);
    else if (command == "attack")
        run_attack_cmd(cfg, bundle, base);
    else if (command == "optimize")
        run_optimize_cmd(cfg, bundle, base);
    else if (command == "curve")
        run_curve_cmd(cfg, bundle, base);
    else if (command == "verify-thm1")
        run_thm1_cmd(cfg, bundle, base);
    else if (command == "verify-thm2")
        run_thm2_cmd(cfg, bundle, base);
    else
        run_report_cmd(cfg, bundle, base);
    bundle.finalize();
}

}  // namespace naflab
