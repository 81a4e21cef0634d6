#pragma once

#include <string>

#include "mmoba/error.hpp"

namespace mmoba {

inline constexpr const char* kVersion = "0.1.0";

// Exit status classes; docs/cli.md lists them.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,
  kExitMissingFile = 3,
  kExitSchema = 4,
  kExitCorrupt = 5,
  kExitConfig = 6,
};

int exit_code_for(ErrorKind kind);

// Entry point of the `mmoba` executable. Errors become one stderr line: "error: <category>: <message>".
int run_cli(int argc, const char* const* argv);

}  // namespace mmoba
