#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"

namespace dpm::cli {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNotConverged = 4 };

const std::vector<std::string>& command_names();

int cmd_simulate(const Config& cfg, std::ostream& out);
int cmd_estimate(const Config& cfg, std::ostream& out);
int cmd_verify(const Config& cfg, std::ostream& out);
int cmd_count(const Config& cfg, std::ostream& out);
int cmd_ame(const Config& cfg, std::ostream& out);
int cmd_montecarlo(const Config& cfg, std::ostream& out);

// Dispatches and maps exceptions to exit codes, printing one line
// `error: <Class>: <message>` to err.
int run_command(const std::string& name, const Config& cfg, std::ostream& out, std::ostream& err);

// data.input when set, otherwise a simulated sample from the design block
Dataset load_data(const Config& cfg, const ModelSpec& spec);

} // namespace dpm::cli
