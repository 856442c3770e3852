#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "naflab/analysis.hpp"
#include "naflab/antinaf.hpp"
#include "naflab/attack.hpp"
#include "naflab/bandit.hpp"
#include "naflab/suite.hpp"

namespace naflab {

struct ProtectionSpec {
    std::vector<double> ar_grid = {0.05, 0.1, 0.2, 0.4, 0.8, 1.0};
    std::optional<double> explicit_k;  // overrides calibration when present
    std::size_t calibration_samples = 4096;
};

struct AttackSpec {
    AttackMode::Kind mode = AttackMode::Kind::Amplified;
    std::size_t steps = 100;
    std::optional<ScoreFunction::Kind> score;  // defaults to the suite's natural score
    std::optional<double> s_tar;
    std::size_t max_attempts = 1000;
    std::size_t trials = 2000;
    std::string prompt = "caption";
};

struct BanditSpec {
    BanditVariant variant = BanditVariant::Cdf;
    std::size_t warmup = 5;
    double explore = 0.1;
    std::vector<std::string> candidates = {"caption", "random"};
};

struct AntiNafSpec {
    OptimizerConfig config;
    std::size_t seeds = 5;
};

struct Theorem1Spec {
    double sigma = 0.01;
    double eps = 0.01;
    std::size_t trials = 100000;
};

struct Theorem2Spec {
    double delta = 0.05;
    std::size_t resolution = 128;
    double ar = 0.5;
};

struct ReportSpec {
    std::vector<std::string> prompts = {"caption", "random"};
    std::vector<std::string> modes = {"single", "amplified"};
    std::size_t cir_samples = 20000;
    std::size_t eq4_cases = 1000;
    Theorem1Spec thm1;
    Theorem2Spec thm2;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out = "out";
    std::size_t threads = 1;
    bool suite_is_builtin = true;
    std::string builtin_name = "TAB-1";
    SuiteSpec suite_spec;
    ProtectionSpec protection;
    AttackSpec attack;
    BanditSpec bandit;
    AntiNafSpec antinaf;
    ReportSpec report;
};

// Strict parse: unknown keys, wrong types, and out-of-range values raise
// ConfigError naming the offending field.
RunConfig parse_config(const std::string& json_text);

// Reads and parses; an unreadable file raises ConfigError naming the path.
RunConfig load_config(const std::filesystem::path& path);

ModelSuite build_config_suite(const RunConfig& cfg, RandomStream& base);

}  // namespace naflab
