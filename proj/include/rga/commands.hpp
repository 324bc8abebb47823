#pragma once

#include <ostream>

namespace rga::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the rga command line:
///   rga <verb> [--config FILE] [--key=value ...]
/// Verbs: gradcheck, train, eval, export-attn, export-relations,
/// param-count, bench. Every verb echoes its resolved config first.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rga::cli
