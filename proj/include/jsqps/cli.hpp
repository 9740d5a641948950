#pragma once

#include <iosfwd>

namespace jsqps {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitParameter = 1,
  kExitNumerical = 2,
  kExitResource = 3,
};

/// Runs one command line. CSV goes to `out` unless --out names a file;
/// diagnostics and log messages go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace jsqps
