#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "rga/layers.hpp"

namespace rga {

enum class EmbeddingMode { kAsymmetric, kSymmetric, kNone };

/// Attention applied at one insertion point. kNone is the plain backbone.
enum class Composition { kNone, kS, kC, kSC, kCS, kSParallelC };

std::string to_string(EmbeddingMode m);
std::string to_string(Composition c);
EmbeddingMode parse_embedding_mode(std::string_view s);
/// Accepts baseline|none, S, C, SC, CS, S-parallel-C and S//C.
Composition parse_composition(std::string_view s);

struct AttentionConfig {
  /// Reduction ratio of the embedding functions.
  std::int64_t s1 = 8;
  /// Reduction ratio of the attention head.
  std::int64_t s2 = 8;
  EmbeddingMode embedding_mode = EmbeddingMode::kAsymmetric;
  bool use_relation = true;
  bool use_original = true;
  Composition composition = Composition::kSC;
  /// Evaluate the spatial relation embedding through the affinity factors
  /// (W_a R^T + W_b R with R = theta^T phi) instead of materialising the
  /// stacked relation tensor. Both routes compute the same function.
  bool factored_relation = true;

  /// Throws std::invalid_argument on s1/s2 < 1 or when both branches of the
  /// relation-aware feature are disabled.
  void validate() const;
};

/// Spatial relation-aware global attention over a (B,C,H,W) feature map.
///
/// Feature nodes are the N = H*W raster-ordered positions. Each node's
/// relation vector [R(i,:), R(:,i)] (2N values) is embedded to N/s1
/// channels, joined with the channel-pooled embedding of the node feature,
/// and mapped to a sigmoid gate by a two-layer 1x1 head.
class RgaSpatial {
 public:
  RgaSpatial(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
             AttentionConfig config);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  /// Affinity matrices (B, N, N): R[b][i][j] = theta(x_i)^T phi(x_j).
  template <class T>
  Var affinity(Context<T>& ctx, Var x) const;

  /// Spatial attention map (B, 1, H, W), values in (0, 1).
  template <class T>
  Var attention(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;

  const std::string& prefix() const { return prefix_; }
  std::int64_t embed_dim() const { return embed_; }
  std::int64_t relation_dim() const { return relation_; }
  std::int64_t head_in() const { return head_in_; }
  std::int64_t head_hidden() const { return head_hidden_; }
  std::int64_t nodes() const { return n_; }

 private:
  template <class T>
  std::pair<Var, Var> node_embeddings(Context<T>& ctx, Var x3) const;

  std::string prefix_;
  std::int64_t c_, h_, w_, n_;
  AttentionConfig cfg_;
  std::int64_t embed_;     // theta/phi/psi width
  std::int64_t relation_;  // relation embedding width N/s1
  std::int64_t head_in_, head_hidden_;
};

/// Channel relation-aware global attention. Feature nodes are the C channel
/// maps flattened to H*W values; embeddings act on the flattened spatial axis.
class RgaChannel {
 public:
  RgaChannel(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
             AttentionConfig config);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  /// (B, C, C)
  template <class T>
  Var affinity(Context<T>& ctx, Var x) const;

  /// Channel attention (B, C, 1, 1), values in (0, 1).
  template <class T>
  Var attention(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;

  const std::string& prefix() const { return prefix_; }
  std::int64_t embed_dim() const { return embed_; }
  std::int64_t relation_dim() const { return relation_; }
  std::int64_t head_in() const { return head_in_; }
  std::int64_t head_hidden() const { return head_hidden_; }

 private:
  template <class T>
  std::pair<Var, Var> node_embeddings(Context<T>& ctx, Var xt) const;

  std::string prefix_;
  std::int64_t c_, h_, w_, n_;
  AttentionConfig cfg_;
  std::int64_t embed_;
  std::int64_t relation_;
  std::int64_t head_in_, head_hidden_;
};

/// Relation vectors of every node: (B, 2K, K) from (B, K, K) affinities.
/// Column i holds [R(i,:), R(:,i)].
template <class T>
Var relation_stack(Graph<T>& g, Var affinity);

/// Same on a single (K, K) matrix, returning (2K, K).
template <class T>
Tensor<T> relation_stack(const Tensor<T>& affinity);

/// Gates x (B,C,H,W) by a spatial map (B,1,H,W) or a channel map (B,C,1,1):
/// out = x * a, no residual term.
template <class T>
Var apply_attention(Graph<T>& g, Var x, Var a);

/// Maps recorded during one composed forward, for exporters and tests.
struct AttentionTrace {
  Var spatial;  // (B,1,H,W) when a spatial stage ran
  Var channel;  // (B,C,1,1) when a channel stage ran
  Var spatial_input;
  Var channel_input;
};

/// One insertion point: RGA-S and/or RGA-C combined per config.composition.
/// SC gates by the spatial map then by the channel map computed on the
/// spatially gated features; CS is the mirror image; S-parallel-C computes
/// both maps from the same input and multiplies both gates into it.
class AttentionBlock {
 public:
  AttentionBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
                 AttentionConfig config);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  /// With bypass set, maps are still computed but the input is returned
  /// unchanged (every gate forced to 1).
  template <class T>
  Var forward(Context<T>& ctx, Var x, AttentionTrace* trace = nullptr, bool bypass = false) const;

  std::int64_t param_count() const;
  bool has_spatial() const;
  bool has_channel() const;
  const RgaSpatial& spatial() const;
  const RgaChannel& channel() const;
  Composition composition() const { return cfg_.composition; }

 private:
  AttentionConfig cfg_;
  std::optional<RgaSpatial> spatial_;
  std::optional<RgaChannel> channel_;
};

}  // namespace rga
