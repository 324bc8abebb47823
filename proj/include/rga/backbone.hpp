#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rga/attention.hpp"

namespace rga {

struct BackboneConfig {
  std::vector<std::int64_t> widths{16, 32, 64, 128};
  /// Stride-2 flag per block.
  std::vector<bool> downsample{true, true, true, false};
  /// Blocks followed by an attention insertion point.
  std::vector<bool> insert{true, true, true, true};
  AttentionConfig attention;
  std::int64_t embed_dim = 64;
  std::int64_t num_classes = 16;
  std::int64_t in_channels = 3;
  std::int64_t height = 64;
  std::int64_t width = 32;

  /// Throws std::invalid_argument on inconsistent lengths, non-positive
  /// sizes, or a stride plan the input resolution cannot follow.
  void validate() const;
};

struct BlockGeometry {
  std::int64_t in_channels, channels, height, width;
  int stride;
};

template <class T>
struct EmbeddingBatch {
  Tensor<T> embeddings;  // (B, D)
  Tensor<T> logits;      // (B, K)
  std::vector<int> labels;
};

/// Stack of 3x3 conv + BN + ReLU blocks, each optionally followed by an
/// attention block, then global average pooling, a linear embedding and a
/// linear identity classifier.
///
/// Parameter names: "block<i>.conv.weight", "block<i>.bn.*",
/// "block<i>.rga_s.*", "block<i>.rga_c.*", "embed.*", "classifier.*".
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  struct Output {
    Var embeddings;
    Var logits;
    std::vector<Var> features;           // block outputs after attention
    std::vector<AttentionTrace> traces;  // per block; empty Vars where absent
  };

  /// images (B, in_channels, height, width). With bypass set every gate is 1.
  template <class T>
  Output forward(Context<T>& ctx, Var images, bool bypass = false) const;

  std::int64_t param_count() const;
  std::size_t num_blocks() const { return geometry_.size(); }
  const BlockGeometry& geometry(std::size_t block) const { return geometry_.at(block); }
  const AttentionBlock& attention(std::size_t block) const { return attention_.at(block); }
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<BlockGeometry> geometry_;
  std::vector<AttentionBlock> attention_;
};

/// Eval-mode forward without recording, in chunks of `batch` images.
template <class T>
EmbeddingBatch<T> embed(const Backbone& net, ParameterSet<T>& params, const Tensor<T>& images,
                        const std::vector<int>& labels, std::int64_t batch = 32);

}  // namespace rga
