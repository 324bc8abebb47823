#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rga/tensor.hpp"

namespace rga {

inline constexpr std::int64_t kImageChannels = 3;
inline constexpr std::int64_t kImageHeight = 64;
inline constexpr std::int64_t kImageWidth = 32;

/// Appearance of one synthetic person, drawn once per identity.
struct SyntheticIdentity {
  std::array<float, 3> torso;
  std::array<float, 3> legs;
  double width_frac;   // body width / image width
  double height_frac;  // body height / image height
};

struct Sample {
  Tensor<float> image;              // (3, 64, 32), values in [0, 1]
  std::vector<std::uint8_t> mask;   // 64*32, 1 on visible body pixels
  int id = 0;
  bool occluded = false;
};

struct Dataset {
  std::vector<SyntheticIdentity> identities;
  std::vector<Sample> samples;  // identity-major: per_id samples of id 0, then id 1, ...
};

/// Minimum largest per-channel colour difference between any two identities.
inline constexpr float kMinColorGap = 0.2f;

/// Renders num_ids * per_id person images: a two-colour body (torso, legs)
/// with a head, on a coloured value-noise background, with +-4 px position
/// jitter and an occluding rectangle with probability 0.3.
/// Deterministic in seed; throws std::invalid_argument for num_ids < 2 or
/// per_id < 2.
Dataset gen_dataset(int num_ids, int per_id, std::uint64_t seed);

/// Stacks the selected samples into (n, 3, 64, 32).
Tensor<float> stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);
std::vector<int> labels_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

/// Mirrors a (3, H, W) image or every image of a (B, 3, H, W) batch left-right.
Tensor<float> flip_horizontal(const Tensor<float>& images);

/// Fraction of body pixels falling into each cell of an (h, w) grid over
/// the image.
std::vector<double> downsample_mask(const std::vector<std::uint8_t>& mask, std::int64_t h, std::int64_t w);

}  // namespace rga
