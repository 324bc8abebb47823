#include "rga/baselines.hpp"

#include <stdexcept>

#include "rga/attention.hpp"

namespace rga {

namespace {

void check_reduction(std::int64_t channels, std::int64_t reduction, const std::string& prefix) {
  if (reduction < 1 || channels < reduction) {
    throw std::invalid_argument(prefix + ": channels " + std::to_string(channels) + " below reduction ratio " +
                                std::to_string(reduction));
  }
}

void check_feature(const Shape& s, std::int64_t c, const std::string& prefix) {
  if (s.size() != 4 || s[1] != c) {
    throw ShapeError(prefix + ": expected (B," + std::to_string(c) + ",H,W) input, got " + shape_str(s));
  }
}

/// Two-layer bottleneck with biases on (B, C, K).
template <class T>
Var mlp(Context<T>& ctx, Var x, const std::string& prefix) {
  Var h = ops::relu(ctx.graph, layers::conv1x1_bias(ctx, x, prefix + ".fc1"));
  return layers::conv1x1_bias(ctx, h, prefix + ".fc2");
}

}  // namespace

// ---------------------------------------------------------------------------
// Non-local

NlBlock::NlBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width)
    : prefix_(std::move(prefix)), c_(channels), h_(height), w_(width), inner_(channels / kReduction) {
  if (channels % kReduction != 0) {
    throw std::invalid_argument(prefix_ + ": channels must be divisible by " + std::to_string(kReduction));
  }
}

template <class T>
void NlBlock::init(ParameterSet<T>& ps, const Rng& init) const {
  layers::add_conv1x1_bias(ps, prefix_ + ".theta", c_, inner_, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".phi", c_, inner_, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".g", c_, inner_, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".out", inner_, c_, init);
}

std::int64_t NlBlock::param_count() const {
  return 3 * layers::conv1x1_bias_count(c_, inner_) + layers::conv1x1_bias_count(inner_, c_);
}

template <class T>
NlBlock::Output NlBlock::forward(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_feature(g.value(x).shape(), c_, prefix_);
  const Shape xs = g.value(x).shape();
  if (xs[2] != h_ || xs[3] != w_) throw ShapeError(prefix_ + ": spatial size mismatch, got " + shape_str(xs));
  const std::int64_t b = xs[0], n = h_ * w_;
  Var x3 = ops::reshape(g, x, Shape{b, c_, n});
  Var theta = layers::conv1x1_bias(ctx, x3, prefix_ + ".theta");
  Var phi = layers::conv1x1_bias(ctx, x3, prefix_ + ".phi");
  Var value = layers::conv1x1_bias(ctx, x3, prefix_ + ".g");
  Var weights = ops::softmax(g, ops::matmul(g, ops::permute(g, theta, {0, 2, 1}), phi));  // (B, N, N)
  // y[:, i] = sum_j f[i, j] g[:, j]
  Var y = ops::matmul(g, value, ops::permute(g, weights, {0, 2, 1}));
  Var z = layers::conv1x1_bias(ctx, y, prefix_ + ".out");
  Var out = ops::reshape(g, ops::add(g, x3, z), xs);
  return {out, weights};
}

// ---------------------------------------------------------------------------
// Simplified non-local

SnlBlock::SnlBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width)
    : prefix_(std::move(prefix)), c_(channels), h_(height), w_(width) {}

template <class T>
void SnlBlock::init(ParameterSet<T>& ps, const Rng& init) const {
  layers::add_conv1x1_bias(ps, prefix_ + ".key", c_, 1, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".transform", c_, c_, init);
}

std::int64_t SnlBlock::param_count() const {
  return layers::conv1x1_bias_count(c_, 1) + layers::conv1x1_bias_count(c_, c_);
}

template <class T>
SnlBlock::Output SnlBlock::forward(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_feature(g.value(x).shape(), c_, prefix_);
  const Shape xs = g.value(x).shape();
  if (xs[2] != h_ || xs[3] != w_) throw ShapeError(prefix_ + ": spatial size mismatch, got " + shape_str(xs));
  const std::int64_t b = xs[0], n = h_ * w_;
  Var x3 = ops::reshape(g, x, Shape{b, c_, n});
  Var weights = ops::softmax(g, layers::conv1x1_bias(ctx, x3, prefix_ + ".key"));  // (B, 1, N)
  Var pooled = ops::matmul(g, x3, ops::permute(g, weights, {0, 2, 1}));            // (B, C, 1)
  Var context = layers::conv1x1_bias(ctx, pooled, prefix_ + ".transform");
  Var out = ops::reshape(g, ops::add(g, x3, context), xs);
  return {out, weights, context};
}

// ---------------------------------------------------------------------------
// SE

SeBlock::SeBlock(std::string prefix, std::int64_t channels, std::int64_t reduction)
    : prefix_(std::move(prefix)), c_(channels), hidden_(0) {
  check_reduction(channels, reduction, prefix_);
  hidden_ = channels / reduction;
}

template <class T>
void SeBlock::init(ParameterSet<T>& ps, const Rng& init) const {
  layers::add_conv1x1_bias(ps, prefix_ + ".fc1", c_, hidden_, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".fc2", hidden_, c_, init);
}

std::int64_t SeBlock::param_count() const {
  return layers::conv1x1_bias_count(c_, hidden_) + layers::conv1x1_bias_count(hidden_, c_);
}

template <class T>
Var SeBlock::attention(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_feature(g.value(x).shape(), c_, prefix_);
  const Shape xs = g.value(x).shape();
  const std::int64_t b = xs[0];
  Var squeezed = ops::mean(g, ops::reshape(g, x, Shape{b, c_, xs[2] * xs[3]}), 2);
  return ops::reshape(g, ops::sigmoid(g, mlp(ctx, squeezed, prefix_)), Shape{b, c_, 1, 1});
}

template <class T>
Var SeBlock::forward(Context<T>& ctx, Var x) const {
  return apply_attention(ctx.graph, x, attention(ctx, x));
}

// ---------------------------------------------------------------------------
// CBAM

CbamChannel::CbamChannel(std::string prefix, std::int64_t channels, std::int64_t reduction)
    : prefix_(std::move(prefix)), c_(channels), hidden_(0) {
  check_reduction(channels, reduction, prefix_);
  hidden_ = channels / reduction;
}

template <class T>
void CbamChannel::init(ParameterSet<T>& ps, const Rng& init) const {
  layers::add_conv1x1_bias(ps, prefix_ + ".fc1", c_, hidden_, init);
  layers::add_conv1x1_bias(ps, prefix_ + ".fc2", hidden_, c_, init);
}

std::int64_t CbamChannel::param_count() const {
  return layers::conv1x1_bias_count(c_, hidden_) + layers::conv1x1_bias_count(hidden_, c_);
}

template <class T>
Var CbamChannel::attention(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  check_feature(g.value(x).shape(), c_, prefix_);
  const Shape xs = g.value(x).shape();
  const std::int64_t b = xs[0];
  Var x3 = ops::reshape(g, x, Shape{b, c_, xs[2] * xs[3]});
  Var avg = mlp(ctx, ops::mean(g, x3, 2), prefix_);
  Var mx = mlp(ctx, ops::max(g, x3, 2), prefix_);
  return ops::reshape(g, ops::sigmoid(g, ops::add(g, avg, mx)), Shape{b, c_, 1, 1});
}

template <class T>
Var CbamChannel::forward(Context<T>& ctx, Var x) const {
  return apply_attention(ctx.graph, x, attention(ctx, x));
}

CbamSpatial::CbamSpatial(std::string prefix) : prefix_(std::move(prefix)) {}

template <class T>
void CbamSpatial::init(ParameterSet<T>& ps, const Rng& init) const {
  const std::int64_t fan_in = 2 * kKernel * kKernel;
  layers::add_weight(ps, prefix_ + ".conv.weight", Shape{1, 2, kKernel, kKernel}, fan_in, init);
  layers::add_bias(ps, prefix_ + ".conv.bias", 1, fan_in, init);
}

std::int64_t CbamSpatial::param_count() const { return 2 * kKernel * kKernel + 1; }

template <class T>
Var CbamSpatial::attention(Context<T>& ctx, Var x) const {
  auto& g = ctx.graph;
  const Shape xs = g.value(x).shape();
  if (xs.size() != 4) throw ShapeError(prefix_ + ": expected (B,C,H,W) input, got " + shape_str(xs));
  Var summary = ops::concat(g, {ops::mean(g, x, 1), ops::max(g, x, 1)}, 1);  // (B, 2, H, W)
  Var z = ops::conv2d(g, summary, g.parameter(ctx.params, prefix_ + ".conv.weight"), 1, kKernel / 2);
  Var bias = ops::reshape(g, g.parameter(ctx.params, prefix_ + ".conv.bias"), Shape{1, 1, 1, 1});
  return ops::sigmoid(g, ops::add(g, z, bias));
}

template <class T>
Var CbamSpatial::forward(Context<T>& ctx, Var x) const {
  return apply_attention(ctx.graph, x, attention(ctx, x));
}

Cbam::Cbam(std::string prefix, std::int64_t channels, std::int64_t reduction)
    : channel_(prefix + ".channel", channels, reduction), spatial_(prefix + ".spatial") {}

template <class T>
void Cbam::init(ParameterSet<T>& ps, const Rng& init) const {
  channel_.init(ps, init);
  spatial_.init(ps, init);
}

std::int64_t Cbam::param_count() const { return channel_.param_count() + spatial_.param_count(); }

template <class T>
Var Cbam::forward(Context<T>& ctx, Var x) const {
  return spatial_.forward(ctx, channel_.forward(ctx, x));
}

#define RGA_INSTANTIATE_BASELINES(T)                                              \
  template void NlBlock::init<T>(ParameterSet<T>&, const Rng&) const;             \
  template NlBlock::Output NlBlock::forward<T>(Context<T>&, Var) const;           \
  template void SnlBlock::init<T>(ParameterSet<T>&, const Rng&) const;            \
  template SnlBlock::Output SnlBlock::forward<T>(Context<T>&, Var) const;         \
  template void SeBlock::init<T>(ParameterSet<T>&, const Rng&) const;             \
  template Var SeBlock::attention<T>(Context<T>&, Var) const;                     \
  template Var SeBlock::forward<T>(Context<T>&, Var) const;                       \
  template void CbamChannel::init<T>(ParameterSet<T>&, const Rng&) const;         \
  template Var CbamChannel::attention<T>(Context<T>&, Var) const;                 \
  template Var CbamChannel::forward<T>(Context<T>&, Var) const;                   \
  template void CbamSpatial::init<T>(ParameterSet<T>&, const Rng&) const;         \
  template Var CbamSpatial::attention<T>(Context<T>&, Var) const;                 \
  template Var CbamSpatial::forward<T>(Context<T>&, Var) const;                   \
  template void Cbam::init<T>(ParameterSet<T>&, const Rng&) const;                \
  template Var Cbam::forward<T>(Context<T>&, Var) const;

RGA_INSTANTIATE_BASELINES(float)
RGA_INSTANTIATE_BASELINES(double)

}  // namespace rga
