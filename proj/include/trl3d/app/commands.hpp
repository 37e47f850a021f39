#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "trl3d/app/config.hpp"

namespace trl3d {

/// gen-data, train-classify, train-align, eval-align, eval-depth,
/// eval-camera, gradcheck, ablate.
const std::vector<std::string>& command_names();

/// Runs one command, writing every artifact under `out` (created if
/// needed) and progress lines to `log`. Returns the process exit code;
/// failures are reported by exception.
int run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// JSON echo of the command, library version and fully resolved config.
std::string run_manifest(const std::string& command, const RunConfig& cfg);

}  // namespace trl3d
