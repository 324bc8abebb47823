#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rga/backbone.hpp"

namespace rga {

/// Row-major (h, w) grid of values.
struct Grid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> values;
};

/// Shortest decimal form that parses back to the same float.
std::string format_float(float v);

/// One CSV row per grid row.
void write_csv_grid(const std::filesystem::path& path, const Grid& grid);
Grid read_csv_grid(const std::filesystem::path& path);

/// 8-bit binary PGM (P5), min-max normalised to [0, 255]; a constant grid
/// is written as mid-gray 128.
void write_pgm(const std::filesystem::path& path, const Grid& grid);
std::vector<std::uint8_t> pgm_pixels(const Grid& grid);

/// Raised when a block has no spatial attention stage to export.
class NoSpatialAttention : public std::invalid_argument {
 public:
  explicit NoSpatialAttention(int block);
};

/// Spatial attention map of one (3, H, W) image at the given block, from an
/// eval-mode forward.
Grid spatial_attention_map(const Backbone& net, ParameterSet<float>& params, const Tensor<float>& image, int block);

struct RelationMaps {
  std::vector<Grid> targets;  // R_s(i, :) reshaped to (H, W) per target i
  Grid snl_weights;           // per-source SNL weights at the same block
};

/// Relation rows of the block's spatial affinity for each target position,
/// plus the per-source weight map of a seeded simplified non-local block
/// applied to the same block input. Targets must be below H*W.
RelationMaps relation_maps(const Backbone& net, ParameterSet<float>& params, const Tensor<float>& image, int block,
                           const std::vector<std::int64_t>& targets, std::uint64_t seed);

}  // namespace rga
