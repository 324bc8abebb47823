#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rga/graph.hpp"
#include "rga/ops.hpp"
#include "rga/parameters.hpp"
#include "rga/rng.hpp"

namespace rga {

enum class Mode { kTrain, kEval };

/// Everything a module forward needs besides its input.
template <class T>
struct Context {
  Graph<T>& graph;
  ParameterSet<T>& params;
  Mode mode = Mode::kTrain;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  /// Batch-norm running statistics are updated only when this is set.
  bool update_running_stats = true;
};

namespace layers {

/// Weight drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) using a stream keyed
/// by the parameter name, so values do not depend on creation order.
template <class T>
void add_weight(ParameterSet<T>& ps, const std::string& name, Shape shape, std::int64_t fan_in, const Rng& init);

template <class T>
void add_bias(ParameterSet<T>& ps, const std::string& name, std::int64_t n, std::int64_t fan_in, const Rng& init);

/// gamma=1, beta=0, running mean 0, running variance 1.
template <class T>
void add_batch_norm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels);

/// Trainable BN with running-statistics bookkeeping in train mode.
template <class T>
Var batch_norm(Context<T>& ctx, Var x, const std::string& prefix);

/// "<prefix>.weight" (cout, cin) followed by BN at "<prefix>.bn" and an
/// optional ReLU.
template <class T>
void add_conv1x1_bn(ParameterSet<T>& ps, const std::string& prefix, std::int64_t cin, std::int64_t cout,
                    const Rng& init);

template <class T>
Var conv1x1_bn(Context<T>& ctx, Var x, const std::string& prefix, bool relu);

/// 1x1 convolution with bias and no normalisation.
template <class T>
void add_conv1x1_bias(ParameterSet<T>& ps, const std::string& prefix, std::int64_t cin, std::int64_t cout,
                      const Rng& init);

template <class T>
Var conv1x1_bias(Context<T>& ctx, Var x, const std::string& prefix);

/// Closed-form trainable size of a conv1x1+BN layer.
constexpr std::int64_t conv1x1_bn_count(std::int64_t cin, std::int64_t cout) { return cin * cout + 2 * cout; }
constexpr std::int64_t conv1x1_bias_count(std::int64_t cin, std::int64_t cout) { return cin * cout + cout; }

}  // namespace layers
}  // namespace rga
