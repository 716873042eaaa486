#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spikegrad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Entry point of the `spikegrad` tool. `args` excludes the program name.
/// Returns 0 on success, 1 on invalid input or usage errors, 2 on numerical
/// failures (failed gradient check, diverged training, scheduler mismatch).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spikegrad::cli
