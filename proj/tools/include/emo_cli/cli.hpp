#pragma once

#include <iosfwd>

namespace emo::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,    // bad flag or flag value
  kRuntime = 2,  // unreadable file, divergence, ...
};

/// Runs one `emocnn` invocation. argv[0] is the program name.
int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err);

}  // namespace emo::cli
