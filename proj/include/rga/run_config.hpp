#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rga/backbone.hpp"
#include "rga/dataset.hpp"
#include "rga/train.hpp"

namespace rga {

/// Invalid key, value or combination in a run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything one CLI invocation needs. Text form is one key=value per line;
/// '#' starts a comment.
struct RunConfig {
  std::uint64_t seed = 1;
  BackboneConfig backbone;
  TrainConfig train;

  int num_ids = 16;
  int per_id = 20;
  int eval_ids = 16;
  int eval_per_id = 20;
  int query_per_id = 2;

  std::string checkpoint = "model.rgaw";
  std::string out_dir = ".";

  int block = 0;
  int image = 0;
  std::vector<std::int64_t> targets{0, 100, 300};

  std::vector<std::int64_t> bench_channels{32, 64, 128};
  std::vector<std::int64_t> bench_sides{8, 16, 32};
  int bench_runs = 5;

  std::size_t gradcheck_elements = 6;
  double gradcheck_corrupt = 1.0;

  /// Backbone built from this config; the classifier has num_ids classes.
  BackboneConfig model() const;
  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Sets one key; unknown keys and malformed values raise ConfigError.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every line of a key=value text on top of cfg.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its resolved value, one per line, in a fixed order.
std::string to_text(const RunConfig& cfg);
std::vector<std::string> config_keys();

/// Disjoint train and evaluation identities plus the query/gallery split of
/// the evaluation set (first query_per_id samples of each identity query).
struct ExperimentData {
  Dataset train;
  Dataset eval;
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
};

ExperimentData make_data(const RunConfig& cfg);

}  // namespace rga
