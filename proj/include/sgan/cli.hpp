#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sgan::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "SGAN_OUT_DIR";

/// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgan::cli
