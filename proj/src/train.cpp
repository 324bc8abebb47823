#include "rga/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rga/losses.hpp"

namespace rga {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (lr < 0 || weight_decay < 0) throw std::invalid_argument("lr and weight_decay must be nonnegative");
  if (ids_per_batch < 2 || instances_per_id < 2) {
    throw std::invalid_argument("ids_per_batch and instances_per_id must both be at least 2");
  }
  if (label_smoothing < 0 || label_smoothing >= 1) throw std::invalid_argument("label_smoothing must be in [0, 1)");
  if (margin < 0) throw std::invalid_argument("margin must be nonnegative");
}

Adam::Adam(const TrainConfig& cfg)
    : lr_(cfg.lr), wd_(cfg.weight_decay), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.adam_eps) {}

void Adam::step(ParameterSet<float>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (auto& [name, e] : params) {
    if (!e.trainable) continue;
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m.assign(e.value.size(), 0.f);
      v.assign(e.value.size(), 0.f);
    }
    float* w = e.value.ptr();
    const float* g = e.grad.ptr();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + wd_ * w[i];
      m[i] = static_cast<float>(b1_ * m[i] + (1 - b1_) * gi);
      v[i] = static_cast<float>(b2_ * v[i] + (1 - b2_) * gi * gi);
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr_ * mh / (std::sqrt(vh) + eps_));
    }
  }
}

PkSampler::PkSampler(std::vector<int> labels, int p, int k) : labels_(std::move(labels)), p_(p), k_(k) {
  if (p < 2 || k < 2) throw std::invalid_argument("sampler needs P >= 2 and K >= 2");
  for (std::size_t i = 0; i < labels_.size(); ++i) by_id_[labels_[i]].push_back(i);
  if (static_cast<int>(by_id_.size()) < p_) {
    throw std::invalid_argument("dataset smaller than one batch: " + std::to_string(by_id_.size()) +
                                " identities for P = " + std::to_string(p_));
  }
}

std::vector<std::vector<std::size_t>> PkSampler::epoch(Rng& rng) const {
  std::map<int, std::vector<std::vector<std::size_t>>> chunks;
  for (const auto& [id, idx] : by_id_) {
    auto& out = chunks[id];
    if (static_cast<int>(idx.size()) < k_) {
      std::vector<std::size_t> c;
      for (int j = 0; j < k_; ++j) c.push_back(idx[rng.below(idx.size())]);
      out.push_back(std::move(c));
      continue;
    }
    auto shuffled = idx;
    rng.shuffle(shuffled.begin(), shuffled.end());
    for (std::size_t s = 0; s + k_ <= shuffled.size(); s += k_) {
      out.emplace_back(shuffled.begin() + s, shuffled.begin() + s + k_);
    }
    // Chunks are consumed from the back.
    std::reverse(out.begin(), out.end());
  }
  std::vector<std::vector<std::size_t>> batches;
  for (;;) {
    std::vector<int> avail;
    for (const auto& [id, c] : chunks) {
      if (!c.empty()) avail.push_back(id);
    }
    if (static_cast<int>(avail.size()) < p_) break;
    rng.shuffle(avail.begin(), avail.end());
    std::vector<std::size_t> batch;
    for (int j = 0; j < p_; ++j) {
      auto& c = chunks[avail[j]];
      batch.insert(batch.end(), c.back().begin(), c.back().end());
      c.pop_back();
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<std::size_t> PkSampler::probe_batch() const {
  std::vector<std::size_t> out;
  int taken = 0;
  for (const auto& [id, idx] : by_id_) {
    if (taken++ == p_) break;
    for (int j = 0; j < k_; ++j) out.push_back(idx[static_cast<std::size_t>(j) % idx.size()]);
  }
  return out;
}

template <class T>
ParameterSet<T> init_params(const Backbone& net, std::uint64_t seed) {
  ParameterSet<T> ps;
  net.init(ps, Rng(seed).split(Stream::kInit));
  return ps;
}

template ParameterSet<float> init_params<float>(const Backbone&, std::uint64_t);
template ParameterSet<double> init_params<double>(const Backbone&, std::uint64_t);

namespace {

struct StepLoss {
  double id = 0, triplet = 0, total = 0;
};

StepLoss forward_loss(const Backbone& net, const TrainConfig& cfg, ParameterSet<float>& params,
                      const Tensor<float>& images, const std::vector<int>& labels, bool update) {
  Graph<float> g;
  g.set_recording(update);
  Context<float> ctx{g, params, Mode::kTrain};
  ctx.update_running_stats = update;
  auto out = net.forward(ctx, g.constant(images));
  Var id = id_loss(g, out.logits, labels, cfg.label_smoothing);
  Var tri = triplet_batch_hard(g, out.embeddings, labels, cfg.margin);
  Var total = ops::add(g, id, tri);
  if (update) {
    params.zero_grad();
    g.backward(total);
  }
  return {g.value(id).item(), g.value(tri).item(), g.value(total).item()};
}

}  // namespace

TrainResult train(const Backbone& net, const TrainConfig& cfg, const std::vector<Sample>& samples, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.id < 0 || s.id >= net.config().num_classes) {
      throw std::invalid_argument("sample identity " + std::to_string(s.id) + " outside the classifier's " +
                                  std::to_string(net.config().num_classes) + " classes");
    }
    labels.push_back(s.id);
  }
  const PkSampler sampler(labels, cfg.ids_per_batch, cfg.instances_per_id);
  const Rng root(seed);
  Rng sampler_rng = root.split(Stream::kSampler);
  Rng augment_rng = root.split(Stream::kAugment);

  TrainResult res;
  res.params = init_params<float>(net, seed);
  Adam opt(cfg);

  const auto probe_idx = sampler.probe_batch();
  const Tensor<float> probe_images = stack_images(samples, probe_idx);
  const std::vector<int> probe_labels = labels_of(samples, probe_idx);
  res.initial_probe_loss = forward_loss(net, cfg, res.params, probe_images, probe_labels, false).total;

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    EpochStats st;
    st.epoch = ep + 1;
    for (const auto& batch : sampler.epoch(sampler_rng)) {
      Tensor<float> images = stack_images(samples, batch);
      if (cfg.flip) {
        const std::size_t per = images.size() / batch.size();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          if (!augment_rng.bernoulli(0.5)) continue;
          Tensor<float> one(Shape{kImageChannels, kImageHeight, kImageWidth},
                            std::vector<float>(images.ptr() + i * per, images.ptr() + (i + 1) * per));
          const Tensor<float> flipped = flip_horizontal(one);
          std::copy(flipped.data().begin(), flipped.data().end(), images.ptr() + i * per);
        }
      }
      const StepLoss l = forward_loss(net, cfg, res.params, images, labels_of(samples, batch), true);
      opt.step(res.params);
      st.id_loss += l.id;
      st.triplet_loss += l.triplet;
      st.total_loss += l.total;
      ++st.steps;
    }
    if (st.steps == 0) throw std::invalid_argument("dataset smaller than one batch");
    st.id_loss /= st.steps;
    st.triplet_loss /= st.steps;
    st.total_loss /= st.steps;
    st.probe_loss = forward_loss(net, cfg, res.params, probe_images, probe_labels, false).total;
    res.trace.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return res;
}

}  // namespace rga
