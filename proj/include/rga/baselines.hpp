#pragma once

#include <cstdint>
#include <string>

#include "rga/layers.hpp"

// Comparison attention blocks operating on (B,C,H,W) features.

namespace rga {

/// Embedded dot-product non-local block: softmax-normalised pairwise weights
/// aggregate value-embedded source features, which are projected back to C
/// channels and added to the input.
class NlBlock {
 public:
  static constexpr std::int64_t kReduction = 2;

  NlBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  struct Output {
    Var out;
    Var weights;  // (B, N, N), row i = weights over sources for target i
  };

  template <class T>
  Output forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  std::int64_t c_, h_, w_, inner_;
};

/// Simplified non-local block: one weight per source position from a 1x1
/// convolution of the source feature, softmax over positions, a single
/// context vector transformed by a 1x1 layer and added at every position.
class SnlBlock {
 public:
  SnlBlock(std::string prefix, std::int64_t channels, std::int64_t height, std::int64_t width);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  struct Output {
    Var out;
    Var weights;  // (B, 1, N)
    Var context;  // (B, C, 1), the term added to every position
  };

  template <class T>
  Output forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  std::int64_t c_, h_, w_;
};

/// Squeeze-and-excitation: spatial mean -> C/r -> ReLU -> C -> sigmoid gates.
class SeBlock {
 public:
  SeBlock(std::string prefix, std::int64_t channels, std::int64_t reduction = 8);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  /// Channel gates (B, C, 1, 1).
  template <class T>
  Var attention(Context<T>& ctx, Var x) const;

  template <class T>
  Var forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  std::int64_t c_, hidden_;
};

/// CBAM channel gate: shared MLP over spatial mean- and max-pooled features,
/// summed before the sigmoid.
class CbamChannel {
 public:
  CbamChannel(std::string prefix, std::int64_t channels, std::int64_t reduction = 8);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  template <class T>
  Var attention(Context<T>& ctx, Var x) const;

  template <class T>
  Var forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;

 private:
  std::string prefix_;
  std::int64_t c_, hidden_;
};

/// CBAM spatial gate: 7x7 convolution (zero padding 3) over the
/// [channel-mean, channel-max] summary.
class CbamSpatial {
 public:
  static constexpr int kKernel = 7;

  explicit CbamSpatial(std::string prefix);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  /// Spatial map (B, 1, H, W).
  template <class T>
  Var attention(Context<T>& ctx, Var x) const;

  template <class T>
  Var forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;

 private:
  std::string prefix_;
};

/// Channel gate followed by spatial gate.
class Cbam {
 public:
  Cbam(std::string prefix, std::int64_t channels, std::int64_t reduction = 8);

  template <class T>
  void init(ParameterSet<T>& ps, const Rng& init) const;

  template <class T>
  Var forward(Context<T>& ctx, Var x) const;

  std::int64_t param_count() const;

 private:
  CbamChannel channel_;
  CbamSpatial spatial_;
};

}  // namespace rga
