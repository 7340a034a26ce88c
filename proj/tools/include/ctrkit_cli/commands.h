#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ctrkit_cli/config.h"

namespace ctrkit::cli {

const std::vector<std::string>& command_names();

/// Runs one command, writing artifacts under `out` and a human-readable
/// summary to `log`. Throws ctrkit::Error on any failure.
void run_command(const std::string& command, const Config& config,
                 const std::filesystem::path& out, std::ostream& log);

}  // namespace ctrkit::cli
