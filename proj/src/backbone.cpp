#include "rga/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace rga {

namespace {

std::string block_name(std::size_t i) { return "block" + std::to_string(i); }

AttentionConfig with_composition(AttentionConfig cfg, bool inserted) {
  if (!inserted) cfg.composition = Composition::kNone;
  return cfg;
}

}  // namespace

void BackboneConfig::validate() const {
  if (widths.empty()) throw std::invalid_argument("backbone needs at least one block");
  if (downsample.size() != widths.size() || insert.size() != widths.size()) {
    throw std::invalid_argument("widths, downsample and insert must have the same length (" +
                                std::to_string(widths.size()) + ", " + std::to_string(downsample.size()) + ", " +
                                std::to_string(insert.size()) + ")");
  }
  for (auto w : widths) {
    if (w <= 0) throw std::invalid_argument("block widths must be positive");
  }
  if (embed_dim <= 0 || num_classes < 2 || in_channels <= 0) {
    throw std::invalid_argument("embed_dim and in_channels must be positive and num_classes at least 2");
  }
  std::int64_t h = height, w = width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (downsample[i]) {
      if (h % 2 || w % 2) {
        throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                    " cannot be halved at block " + std::to_string(i));
      }
      h /= 2;
      w /= 2;
    }
  }
  if (h < 1 || w < 1) throw std::invalid_argument("stride plan reduces the feature map to nothing");
  attention.validate();
}

Backbone::Backbone(BackboneConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  std::int64_t cin = cfg_.in_channels, h = cfg_.height, w = cfg_.width;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    const int stride = cfg_.downsample[i] ? 2 : 1;
    h /= stride;
    w /= stride;
    geometry_.push_back({cin, cfg_.widths[i], h, w, stride});
    attention_.emplace_back(block_name(i), cfg_.widths[i], h, w, with_composition(cfg_.attention, cfg_.insert[i]));
    cin = cfg_.widths[i];
  }
}

template <class T>
void Backbone::init(ParameterSet<T>& ps, const Rng& init) const {
  for (std::size_t i = 0; i < geometry_.size(); ++i) {
    const auto& gm = geometry_[i];
    const std::string p = block_name(i);
    layers::add_weight(ps, p + ".conv.weight", Shape{gm.channels, gm.in_channels, 3, 3}, gm.in_channels * 9, init);
    layers::add_batch_norm(ps, p + ".bn", gm.channels);
    attention_[i].init(ps, init);
  }
  layers::add_conv1x1_bias(ps, "embed", geometry_.back().channels, cfg_.embed_dim, init);
  layers::add_conv1x1_bias(ps, "classifier", cfg_.embed_dim, cfg_.num_classes, init);
}

std::int64_t Backbone::param_count() const {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < geometry_.size(); ++i) {
    const auto& gm = geometry_[i];
    n += gm.channels * gm.in_channels * 9 + 2 * gm.channels + attention_[i].param_count();
  }
  n += layers::conv1x1_bias_count(geometry_.back().channels, cfg_.embed_dim);
  n += layers::conv1x1_bias_count(cfg_.embed_dim, cfg_.num_classes);
  return n;
}

template <class T>
Backbone::Output Backbone::forward(Context<T>& ctx, Var images, bool bypass) const {
  auto& g = ctx.graph;
  const Shape s = g.value(images).shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.height || s[3] != cfg_.width) {
    throw ShapeError("backbone: expected images (B," + std::to_string(cfg_.in_channels) + "," +
                     std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "), got " + shape_str(s));
  }
  const std::int64_t b = s[0];
  Output out;
  Var x = images;
  for (std::size_t i = 0; i < geometry_.size(); ++i) {
    const std::string p = block_name(i);
    x = ops::conv2d(g, x, g.parameter(ctx.params, p + ".conv.weight"), geometry_[i].stride, 1);
    x = ops::relu(g, layers::batch_norm(ctx, x, p + ".bn"));
    AttentionTrace trace;
    x = attention_[i].forward(ctx, x, &trace, bypass);
    out.features.push_back(x);
    out.traces.push_back(trace);
  }
  const std::int64_t c = geometry_.back().channels;
  Var pooled = ops::mean(g, ops::reshape(g, x, Shape{b, c, geometry_.back().height * geometry_.back().width}), 2,
                         false);
  out.embeddings = layers::conv1x1_bias(ctx, pooled, "embed");
  out.logits = layers::conv1x1_bias(ctx, out.embeddings, "classifier");
  return out;
}

template <class T>
EmbeddingBatch<T> embed(const Backbone& net, ParameterSet<T>& params, const Tensor<T>& images,
                        const std::vector<int>& labels, std::int64_t batch) {
  if (images.rank() != 4) throw ShapeError("embed: images must be (B,C,H,W), got " + shape_str(images.shape()));
  const std::int64_t total = images.dim(0);
  if (static_cast<std::int64_t>(labels.size()) != total) throw ShapeError("embed: label count does not match images");
  const std::int64_t per = images.size() / static_cast<std::size_t>(total);
  const std::int64_t d = net.config().embed_dim, k = net.config().num_classes;
  EmbeddingBatch<T> res{Tensor<T>(Shape{total, d}), Tensor<T>(Shape{total, k}), labels};
  for (std::int64_t start = 0; start < total; start += batch) {
    const std::int64_t n = std::min(batch, total - start);
    Shape cs = images.shape();
    cs[0] = n;
    Tensor<T> chunk(cs, std::vector<T>(images.ptr() + start * per, images.ptr() + (start + n) * per));
    Graph<T> g;
    g.set_recording(false);
    Context<T> ctx{g, params, Mode::kEval};
    auto o = net.forward(ctx, g.constant(std::move(chunk)));
    std::copy_n(g.value(o.embeddings).ptr(), n * d, res.embeddings.ptr() + start * d);
    std::copy_n(g.value(o.logits).ptr(), n * k, res.logits.ptr() + start * k);
  }
  return res;
}

#define RGA_INSTANTIATE_BACKBONE(T)                                                                        \
  template void Backbone::init<T>(ParameterSet<T>&, const Rng&) const;                                    \
  template Backbone::Output Backbone::forward<T>(Context<T>&, Var, bool) const;                           \
  template EmbeddingBatch<T> embed<T>(const Backbone&, ParameterSet<T>&, const Tensor<T>&, const std::vector<int>&, \
                                      std::int64_t);

RGA_INSTANTIATE_BACKBONE(float)
RGA_INSTANTIATE_BACKBONE(double)

}  // namespace rga
