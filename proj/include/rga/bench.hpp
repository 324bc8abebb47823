#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "rga/attention.hpp"

namespace rga {

struct BenchRow {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::string module;
  double median_ms = 0.0;
  std::int64_t param_count = 0;
};

/// Modules timed per size, in output order.
const std::vector<std::string>& bench_modules();

/// Analytic parameter count of a benchmarked module at (C, H, W).
std::int64_t bench_param_count(const std::string& module, std::int64_t c, std::int64_t h, std::int64_t w,
                               const AttentionConfig& cfg);

/// Eval-mode forward time of every module on one (1, C, side, side) input
/// per (channels, side) pair: one warmup, then the median of `runs` timings.
std::vector<BenchRow> run_bench(const std::vector<std::int64_t>& channels, const std::vector<std::int64_t>& sides,
                                int runs, const AttentionConfig& cfg, std::uint64_t seed);

/// Header "size,channels,height,width,module,median_ms,param_count".
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace rga
