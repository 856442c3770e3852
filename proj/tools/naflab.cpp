#include <cstdint>
#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "naflab/config.hpp"
#include "naflab/errors.hpp"
#include "naflab/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"naflab: deterministic testbed for rejection-sampling copyright protection"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 0;

    const std::pair<const char*, const char*> commands[] = {
        {"suite", "build a model suite and calibrate acceptance thresholds"},
        {"attack", "run amplification-attack trials and dump traces"},
        {"optimize", "run gradient prompt optimization"},
        {"curve", "compute FAR-AR curves"},
        {"verify-thm1", "check the amplification success lower bound"},
        {"verify-thm2", "check the filtered-density lower bound"},
        {"report", "full experiment bundle"},
    };
    for (const auto& [name, description] : commands) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("--config", config_path, "JSON config path")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "override the output directory");
        sub->add_option("--threads", threads, "override the worker count");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        naflab::RunConfig cfg = naflab::load_config(config_path);
        if (sub->count("--seed") > 0) cfg.seed = seed;
        if (sub->count("--out") > 0) cfg.out = out;
        if (sub->count("--threads") > 0) {
            if (threads == 0) throw naflab::ConfigError("threads", "must be positive");
            cfg.threads = threads;
        }
        naflab::run_command(sub->get_name(), cfg);
    } catch (const naflab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
