#pragma once

#include <iosfwd>

namespace kktsynth {

/// Process exit codes of the kktsynth command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,       // bad arguments, unreadable or unparsable input, I/O failure
  kExitNotSettled = 2,  // transient did not settle (or diverged)
  kExitKktFail = 3,     // settled point fails the KKT check
  kExitDegree = 4,      // constraint degree above 2
  kExitBenchGate = 5,   // benchmark accuracy/settling gate failed
};

/// `kktsynth (solve|synth|bench|check) <input> [flags]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kktsynth
