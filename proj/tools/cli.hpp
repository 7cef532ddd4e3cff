#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vshift::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

/// Environment variable naming the directory that relative output paths are
/// resolved against.
inline constexpr const char* kOutputDirEnv = "VSHIFT_OUTPUT_DIR";

/// Runs the command line `args` (without the program name). Machine-readable
/// results go to `out` or to the files named by flags; summaries and errors go
/// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vshift::cli
