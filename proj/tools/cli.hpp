#pragma once

namespace xai::cli {

/// Exit codes: 0 success, 1 gate failure, 2 usage or configuration error,
/// 3 provider or adapter fault.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGate = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitProvider = 3;

/// Entry point behind the `xaieval` binary. Diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace xai::cli
