#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace riskspan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line. `args` excludes the program name; for example
/// {"train", "--corpus", "c.jsonl", "--out", "m.json"}. Machine-readable
/// results go to `out` when a command has no --out, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace riskspan::cli
