#pragma once

// Command-line front end: ingest -> build -> prune -> eval / predict-terms /
// export-dot as composable subcommands, plus `run` to drive the whole
// pipeline from one config file.

#include <iosfwd>
#include <string>
#include <vector>

#include "taskforest/config.hpp"

namespace taskforest {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

// args excludes the program name.  Reports go to out, diagnostics and
// progress to err; returns one of the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

// The `run` subcommand's engine: ingest, build, prune, export and evaluate
// into config.out_dir.  Throws DataError (with the failing stage named) on
// bad inputs.
void run_pipeline(const RunConfig& config, std::ostream& out,
                  std::ostream& err);

}  // namespace taskforest
