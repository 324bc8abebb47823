#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rga/backbone.hpp"
#include "rga/dataset.hpp"

namespace rga {

struct TrainConfig {
  int epochs = 40;
  double lr = 8e-4;
  /// L2 penalty added to the gradient before the Adam moments.
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int ids_per_batch = 4;       // P
  int instances_per_id = 4;    // K
  double label_smoothing = 0.1;
  double margin = 0.3;
  bool flip = true;

  void validate() const;
};

class Adam {
 public:
  explicit Adam(const TrainConfig& cfg);
  /// Updates every trainable entry from its gradient buffer.
  void step(ParameterSet<float>& params);
  int steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<std::vector<float>, std::vector<float>>, std::less<>> moments_;
};

/// Identity-balanced batches: each batch holds P distinct identities with K
/// instances each. Every identity's samples are shuffled and cut into K-sized
/// chunks (an identity with fewer than K samples contributes one chunk drawn
/// with replacement); batches are formed until fewer than P identities have
/// chunks left.
class PkSampler {
 public:
  PkSampler(std::vector<int> labels, int p, int k);
  std::vector<std::vector<std::size_t>> epoch(Rng& rng) const;
  /// First K instances of the first P identities, in index order.
  std::vector<std::size_t> probe_batch() const;

 private:
  std::vector<int> labels_;
  int p_, k_;
  std::map<int, std::vector<std::size_t>> by_id_;
};

struct EpochStats {
  int epoch = 0;
  int steps = 0;
  double id_loss = 0.0;       // means over the epoch's steps
  double triplet_loss = 0.0;
  double total_loss = 0.0;
  /// Total loss on the fixed probe batch after the epoch, batch statistics,
  /// no augmentation; constant when parameters do not change.
  double probe_loss = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  ParameterSet<float> params;
  double initial_probe_loss = 0.0;
  std::vector<EpochStats> trace;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains from the seeded initialisation with id_loss + triplet_batch_hard
/// per step. Deterministic in seed. Throws std::invalid_argument when the
/// samples cannot fill one P x K batch.
TrainResult train(const Backbone& net, const TrainConfig& cfg, const std::vector<Sample>& samples, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

/// Seeded initial parameters of net.
template <class T>
ParameterSet<T> init_params(const Backbone& net, std::uint64_t seed);

}  // namespace rga
