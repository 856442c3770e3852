#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "naflab/config.hpp"

namespace naflab {

// Runs fn(0..n-1) on a worker pool. Tasks must be independent; the caller
// provides per-index derived streams and owns result slots, so the schedule
// never affects the output.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

bool is_known_command(const std::string& command);

// Executes one subcommand, writing its artifacts under cfg.out. Every output
// file is listed with a content checksum in summary.json. Throws ConfigError
// for configuration problems and other Error subtypes for runtime failures;
// the CLI maps these to exit codes 2 and 1.
void run_command(const std::string& command, const RunConfig& cfg);

}  // namespace naflab
