#include "rga/attention.hpp"

#include <algorithm>
#include <stdexcept>

namespace rga {

std::string to_string(EmbeddingMode m) {
  switch (m) {
    case EmbeddingMode::kAsymmetric: return "asymmetric";
    case EmbeddingMode::kSymmetric: return "symmetric";
    case EmbeddingMode::kNone: return "none";
  }
  return "?";
}

std::string to_string(Composition c) {
  switch (c) {
    case Composition::kNone: return "baseline";
    case Composition::kS: return "S";
    case Composition::kC: return "C";
    case Composition::kSC: return "SC";
    case Composition::kCS: return "CS";
    case Composition::kSParallelC: return "S-parallel-C";
  }
  return "?";
}

EmbeddingMode parse_embedding_mode(std::string_view s) {
  if (s == "asymmetric") return EmbeddingMode::kAsymmetric;
  if (s == "symmetric") return EmbeddingMode::kSymmetric;
  if (s == "none") return EmbeddingMode::kNone;
  throw std::invalid_argument("unknown embedding mode '" + std::string(s) + "'");
}

Composition parse_composition(std::string_view s) {
  if (s == "baseline" || s == "none") return Composition::kNone;
  if (s == "S") return Composition::kS;
  if (s == "C") return Composition::kC;
  if (s == "SC") return Composition::kSC;
  if (s == "CS") return Composition::kCS;
  if (s == "S-parallel-C" || s == "S//C") return Composition::kSParallelC;
  throw std::invalid_argument("unknown composition mode '" + std::string(s) + "'");
}

void AttentionConfig::validate() const {
  if (s1 < 1 || s2 < 1) throw std::invalid_argument("s1 and s2 must be positive");
  if (!use_relation && !use_original) {
    throw std::invalid_argument("at least one of use_relation and use_original must be set");
  }
}

namespace {

void check_divisible(std::int64_t value, std::int64_t by, const std::string& what, const std::string& prefix) {
  if (value % by != 0) {
    throw std::invalid_argument(prefix + ": " + what + " = " + std::to_string(value) + " is not divisible by s1 = " +
                                std::to_string(by));
  }
}

std::int64_t head_width(std::int64_t in, std::int64_t s2) { return std::max<std::int64_t>(1, in / s2); }

std::int64_t head_count(std::int64_t in, std::int64_t hidden) {
  return layers::conv1x1_bn_count(in, hidden) + layers::conv1x1_bn_count(hidden, 1);
}

template <class T>
void init_head(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t hidden, const Rng& init) {
  layers::add_conv1x1_bn(ps, prefix + ".head1", in, hidden, init);
  layers::add_conv1x1_bn(ps, prefix + ".head2", hidden, 1, init);
  // Every gate starts at sigmoid(0).
  ps.value(prefix + ".head2.bn.gamma").fill(T{0});
}

/// sigmoid(BN(W2 relu(BN(W1 y)))) on (B, D, K) -> (B, 1, K).
template <class T>
Var head(Context<T>& ctx, Var y, const std::string& prefix) {
  Var h = layers::conv1x1_bn(ctx, y, prefix + ".head1", true);
  Var z = layers::conv1x1_bn(ctx, h, prefix + ".head2", false);
  return ops::sigmoid(ctx.graph, z);
}

void check_input(const Shape& s, std::int64_t c, std::int64_t h, std::int64_t w, const std::string& prefix) {
  if (s.size() != 4 || s[1] != c || s[2] != h || s[3] != w) {
    throw ShapeError(prefix + ": expected input (B," + std::to_string(c) + "," + std::to_string(h) + "," +
                     std::to_string(w) + "), got " + shape_str(s));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Relation stacking and gating

template <class T>
Var relation_stack(Graph<T>& g, Var affinity) {
  const Shape s = g.value(affinity).shape();
  if (s.size() != 3 || s[1] != s[2]) throw ShapeError("relation_stack: affinity must be (B,K,K), got " + shape_str(s));
  // Row j < K of column i is R(i, j) (= R^T[j][i]); row K + j is R(j, i).
  Var outgoing = ops::permute(g, affinity, {0, 2, 1});
  return ops::concat(g, {outgoing, affinity}, 1);
}

template <class T>
Tensor<T> relation_stack(const Tensor<T>& affinity) {
  if (affinity.rank() != 2 || affinity.dim(0) != affinity.dim(1)) {
    throw ShapeError("relation_stack: affinity must be square, got " + shape_str(affinity.shape()));
  }
  Graph<T> g;
  g.set_recording(false);
  const std::int64_t k = affinity.dim(0);
  Var r = g.constant(affinity.reshaped(Shape{1, k, k}));
  return g.value(relation_stack(g, r)).reshaped(Shape{2 * k, k});
}

template <class T>
Var apply_attention(Graph<T>& g, Var x, Var a) {
  const Shape xs = g.value(x).shape();
  const Shape as = g.value(a).shape();
  const bool spatial = as.size() == 4 && xs.size() == 4 && as[0] == xs[0] && as[1] == 1 && as[2] == xs[2] &&
                       as[3] == xs[3];
  const bool channel = as.size() == 4 && xs.size() == 4 && as[0] == xs[0] && as[1] == xs[1] && as[2] == 1 &&
                       as[3] == 1;
  if (!spatial && !channel) {
    throw ShapeError("apply_attention: map " + shape_str(as) + " matches neither (B,1,H,W) nor (B,C,1,1) for input " +
                     shape_str(xs));
  }
  return ops::mul(g, x, a);
}

// ---------------------------------------------------------------------------
// RGA-S

RgaSpatial::RgaSpatial(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
                       AttentionConfig config)
    : prefix_(std::move(prefix)), c_(channels), h_(height), w_(width), n_(height * width), cfg_(config) {
  cfg_.validate();
  check_divisible(c_, cfg_.s1, "channels", prefix_);
  check_divisible(n_, cfg_.s1, "spatial size N", prefix_);
  embed_ = c_ / cfg_.s1;
  relation_ = n_ / cfg_.s1;
  if (!cfg_.use_relation) {
    head_in_ = embed_;
  } else {
    head_in_ = relation_ + (cfg_.use_original ? 1 : 0);
  }
  head_hidden_ = head_width(head_in_, cfg_.s2);
}

template <class T>
void RgaSpatial::init(ParameterSet<T>& ps, const Rng& init) const {
  if (cfg_.use_relation) {
    if (cfg_.embedding_mode != EmbeddingMode::kNone) layers::add_conv1x1_bn(ps, prefix_ + ".theta", c_, embed_, init);
    if (cfg_.embedding_mode == EmbeddingMode::kAsymmetric) layers::add_conv1x1_bn(ps, prefix_ + ".phi", c_, embed_, init);
    layers::add_conv1x1_bn(ps, prefix_ + ".relation", 2 * n_, relation_, init);
  }
  if (cfg_.use_original) layers::add_conv1x1_bn(ps, prefix_ + ".psi", c_, embed_, init);
  init_head(ps, prefix_, head_in_, head_hidden_, init);
}

std::int64_t RgaSpatial::param_count() const {
  std::int64_t n = 0;
  if (cfg_.use_relation) {
    if (cfg_.embedding_mode == EmbeddingMode::kAsymmetric) n += 2 * layers::conv1x1_bn_count(c_, embed_);
    if (cfg_.embedding_mode == EmbeddingMode::kSymmetric) n += layers::conv1x1_bn_count(c_, embed_);
    n += layers::conv1x1_bn_count(2 * n_, relation_);
  }
  if (cfg_.use_original) n += layers::conv1x1_bn_count(c_, embed_);
  return n + head_count(head_in_, head_hidden_);
}

template <class T>
std::pair<Var, Var> RgaSpatial::node_embeddings(Context<T>& ctx, Var x3) const {
  switch (cfg_.embedding_mode) {
    case EmbeddingMode::kNone:
      return {x3, x3};
    case EmbeddingMode::kSymmetric: {
      Var e = layers::conv1x1_bn(ctx, x3, prefix_ + ".theta", true);
      return {e, e};
    }
    case EmbeddingMode::kAsymmetric:
      break;
  }
  return {layers::conv1x1_bn(ctx, x3, prefix_ + ".theta", true), layers::conv1x1_bn(ctx, x3, prefix_ + ".phi", true)};
}

template <class T>
Var RgaSpatial::affinity(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_input(g.value(x).shape(), c_, h_, w_, prefix_);
  if (!cfg_.use_relation) throw std::logic_error(prefix_ + ": relations are disabled in this configuration");
  const std::int64_t b = g.value(x).dim(0);
  Var x3 = ops::reshape(g, x, Shape{b, c_, n_});
  auto [theta, phi] = node_embeddings(ctx, x3);
  return ops::matmul(g, ops::permute(g, theta, {0, 2, 1}), phi);
}

template <class T>
Var RgaSpatial::attention(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_input(g.value(x).shape(), c_, h_, w_, prefix_);
  const std::int64_t b = g.value(x).dim(0);
  Var x3 = ops::reshape(g, x, Shape{b, c_, n_});

  std::vector<Var> parts;
  if (cfg_.use_original) {
    Var psi = layers::conv1x1_bn(ctx, x3, prefix_ + ".psi", true);
    parts.push_back(cfg_.use_relation ? ops::mean(g, psi, 1) : psi);
  }
  if (cfg_.use_relation) {
    auto [theta, phi] = node_embeddings(ctx, x3);
    Var emb;
    if (cfg_.factored_relation) {
      // W [R^T; R] = W_a (phi^T theta) + W_b (theta^T phi), evaluated right to left.
      Var w = g.parameter(ctx.params, prefix_ + ".relation.weight");
      Var wa = ops::slice(g, w, 1, 0, n_);
      Var wb = ops::slice(g, w, 1, n_, n_);
      Var out_part = ops::matmul(g, ops::matmul(g, wa, ops::permute(g, phi, {0, 2, 1})), theta);
      Var in_part = ops::matmul(g, ops::matmul(g, wb, ops::permute(g, theta, {0, 2, 1})), phi);
      emb = ops::relu(g, layers::batch_norm(ctx, ops::add(g, out_part, in_part), prefix_ + ".relation.bn"));
    } else {
      Var r = ops::matmul(g, ops::permute(g, theta, {0, 2, 1}), phi);
      emb = layers::conv1x1_bn(ctx, relation_stack(g, r), prefix_ + ".relation", true);
    }
    parts.push_back(emb);
  }
  Var y = parts.size() == 1 ? parts[0] : ops::concat(g, parts, 1);
  Var a = head(ctx, y, prefix_);
  return ops::reshape(g, a, Shape{b, 1, h_, w_});
}

// ---------------------------------------------------------------------------
// RGA-C

RgaChannel::RgaChannel(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
                       AttentionConfig config)
    : prefix_(std::move(prefix)), c_(channels), h_(height), w_(width), n_(height * width), cfg_(config) {
  cfg_.validate();
  check_divisible(n_, cfg_.s1, "spatial size H*W", prefix_);
  check_divisible(c_, cfg_.s1, "channels", prefix_);
  embed_ = n_ / cfg_.s1;
  relation_ = c_ / cfg_.s1;
  if (!cfg_.use_relation) {
    head_in_ = embed_;
  } else {
    head_in_ = relation_ + (cfg_.use_original ? 1 : 0);
  }
  head_hidden_ = head_width(head_in_, cfg_.s2);
}

template <class T>
void RgaChannel::init(ParameterSet<T>& ps, const Rng& init) const {
  if (cfg_.use_relation) {
    if (cfg_.embedding_mode != EmbeddingMode::kNone) layers::add_conv1x1_bn(ps, prefix_ + ".theta", n_, embed_, init);
    if (cfg_.embedding_mode == EmbeddingMode::kAsymmetric) layers::add_conv1x1_bn(ps, prefix_ + ".phi", n_, embed_, init);
    layers::add_conv1x1_bn(ps, prefix_ + ".relation", 2 * c_, relation_, init);
  }
  if (cfg_.use_original) layers::add_conv1x1_bn(ps, prefix_ + ".psi", n_, embed_, init);
  init_head(ps, prefix_, head_in_, head_hidden_, init);
}

std::int64_t RgaChannel::param_count() const {
  std::int64_t n = 0;
  if (cfg_.use_relation) {
    if (cfg_.embedding_mode == EmbeddingMode::kAsymmetric) n += 2 * layers::conv1x1_bn_count(n_, embed_);
    if (cfg_.embedding_mode == EmbeddingMode::kSymmetric) n += layers::conv1x1_bn_count(n_, embed_);
    n += layers::conv1x1_bn_count(2 * c_, relation_);
  }
  if (cfg_.use_original) n += layers::conv1x1_bn_count(n_, embed_);
  return n + head_count(head_in_, head_hidden_);
}

template <class T>
std::pair<Var, Var> RgaChannel::node_embeddings(Context<T>& ctx, Var xt) const {
  switch (cfg_.embedding_mode) {
    case EmbeddingMode::kNone:
      return {xt, xt};
    case EmbeddingMode::kSymmetric: {
      Var e = layers::conv1x1_bn(ctx, xt, prefix_ + ".theta", true);
      return {e, e};
    }
    case EmbeddingMode::kAsymmetric:
      break;
  }
  return {layers::conv1x1_bn(ctx, xt, prefix_ + ".theta", true), layers::conv1x1_bn(ctx, xt, prefix_ + ".phi", true)};
}

template <class T>
Var RgaChannel::affinity(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_input(g.value(x).shape(), c_, h_, w_, prefix_);
  if (!cfg_.use_relation) throw std::logic_error(prefix_ + ": relations are disabled in this configuration");
  const std::int64_t b = g.value(x).dim(0);
  Var xt = ops::permute(g, ops::reshape(g, x, Shape{b, c_, n_}), {0, 2, 1});
  auto [theta, phi] = node_embeddings(ctx, xt);
  return ops::matmul(g, ops::permute(g, theta, {0, 2, 1}), phi);
}

template <class T>
Var RgaChannel::attention(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_input(g.value(x).shape(), c_, h_, w_, prefix_);
  const std::int64_t b = g.value(x).dim(0);
  // Flattened spatial axis as channels: (B, HW, C), one position per channel node.
  Var xt = ops::permute(g, ops::reshape(g, x, Shape{b, c_, n_}), {0, 2, 1});

  std::vector<Var> parts;
  if (cfg_.use_original) {
    Var psi = layers::conv1x1_bn(ctx, xt, prefix_ + ".psi", true);
    parts.push_back(cfg_.use_relation ? ops::mean(g, psi, 1) : psi);
  }
  if (cfg_.use_relation) {
    auto [theta, phi] = node_embeddings(ctx, xt);
    Var r = ops::matmul(g, ops::permute(g, theta, {0, 2, 1}), phi);
    parts.push_back(layers::conv1x1_bn(ctx, relation_stack(g, r), prefix_ + ".relation", true));
  }
  Var y = parts.size() == 1 ? parts[0] : ops::concat(g, parts, 1);
  Var a = head(ctx, y, prefix_);
  return ops::reshape(g, a, Shape{b, c_, 1, 1});
}

// ---------------------------------------------------------------------------
// Composition

AttentionBlock::AttentionBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width,
                               AttentionConfig config)
    : cfg_(config) {
  cfg_.validate();
  const Composition c = cfg_.composition;
  if (c != Composition::kNone && c != Composition::kC) spatial_.emplace(prefix + ".rga_s", channels, height, width, cfg_);
  if (c != Composition::kNone && c != Composition::kS) channel_.emplace(prefix + ".rga_c", channels, height, width, cfg_);
}

bool AttentionBlock::has_spatial() const { return spatial_.has_value(); }
bool AttentionBlock::has_channel() const { return channel_.has_value(); }

const RgaSpatial& AttentionBlock::spatial() const {
  if (!spatial_) throw std::logic_error("attention block has no spatial stage");
  return *spatial_;
}

const RgaChannel& AttentionBlock::channel() const {
  if (!channel_) throw std::logic_error("attention block has no channel stage");
  return *channel_;
}

template <class T>
void AttentionBlock::init(ParameterSet<T>& ps, const Rng& init) const {
  if (spatial_) spatial_->init(ps, init);
  if (channel_) channel_->init(ps, init);
}

std::int64_t AttentionBlock::param_count() const {
  return (spatial_ ? spatial_->param_count() : 0) + (channel_ ? channel_->param_count() : 0);
}

template <class T>
Var AttentionBlock::forward(Context<T>& ctx, Var x, AttentionTrace* trace, bool bypass) const {
  auto& g = ctx.graph;
  auto gate = [&](Var in, Var a) { return bypass ? in : apply_attention(g, in, a); };
  AttentionTrace local;
  Var out = x;
  switch (cfg_.composition) {
    case Composition::kNone:
      break;
    case Composition::kS:
      local.spatial_input = x;
      local.spatial = spatial_->attention(ctx, x);
      out = gate(x, local.spatial);
      break;
    case Composition::kC:
      local.channel_input = x;
      local.channel = channel_->attention(ctx, x);
      out = gate(x, local.channel);
      break;
    case Composition::kSC: {
      local.spatial_input = x;
      local.spatial = spatial_->attention(ctx, x);
      Var y = gate(x, local.spatial);
      local.channel_input = y;
      local.channel = channel_->attention(ctx, y);
      out = gate(y, local.channel);
      break;
    }
    case Composition::kCS: {
      local.channel_input = x;
      local.channel = channel_->attention(ctx, x);
      Var y = gate(x, local.channel);
      local.spatial_input = y;
      local.spatial = spatial_->attention(ctx, y);
      out = gate(y, local.spatial);
      break;
    }
    case Composition::kSParallelC:
      local.spatial_input = x;
      local.channel_input = x;
      local.spatial = spatial_->attention(ctx, x);
      local.channel = channel_->attention(ctx, x);
      out = gate(gate(x, local.spatial), local.channel);
      break;
  }
  if (trace) *trace = local;
  return out;
}

#define RGA_INSTANTIATE_ATTENTION(T)                                                      \
  template Var relation_stack<T>(Graph<T>&, Var);                                       \
  template Tensor<T> relation_stack<T>(const Tensor<T>&);                               \
  template Var apply_attention<T>(Graph<T>&, Var, Var);                                 \
  template void RgaSpatial::init<T>(ParameterSet<T>&, const Rng&) const;                \
  template Var RgaSpatial::affinity<T>(Context<T>&, Var) const;                         \
  template Var RgaSpatial::attention<T>(Context<T>&, Var) const;                        \
  template void RgaChannel::init<T>(ParameterSet<T>&, const Rng&) const;                \
  template Var RgaChannel::affinity<T>(Context<T>&, Var) const;                         \
  template Var RgaChannel::attention<T>(Context<T>&, Var) const;                        \
  template void AttentionBlock::init<T>(ParameterSet<T>&, const Rng&) const;            \
  template Var AttentionBlock::forward<T>(Context<T>&, Var, AttentionTrace*, bool) const;

RGA_INSTANTIATE_ATTENTION(float)
RGA_INSTANTIATE_ATTENTION(double)

}  // namespace rga
