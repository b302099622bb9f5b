#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "minaf/pipeline/config.hpp"

namespace minaf::pipeline {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDiverged = 3;

/// Each command reads its section of `cfg`, writes only under its output
/// directory (for probe: the cache directory) and echoes the effective
/// section there as config.ini. Existing outputs are kept unless `force`.
void cmd_generate(const RunConfig& cfg, bool force);
void cmd_probe(const RunConfig& cfg, bool force);
void cmd_train(const RunConfig& cfg, bool force);
void cmd_eval(const RunConfig& cfg, bool force);
void cmd_predict(const RunConfig& cfg, bool force);
void cmd_experiment(const RunConfig& cfg, bool force);

/// Full command line (`minaf <command> [options]`); returns the exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace minaf::pipeline
