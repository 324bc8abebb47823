#include "rga/layers.hpp"

#include <cmath>

namespace rga::layers {

template <class T>
void add_weight(ParameterSet<T>& ps, const std::string& name, Shape shape, std::int64_t fan_in, const Rng& init) {
  Rng rng = init.split(name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> w(std::move(shape));
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  ps.add(name, std::move(w));
}

template <class T>
void add_bias(ParameterSet<T>& ps, const std::string& name, std::int64_t n, std::int64_t fan_in, const Rng& init) {
  add_weight(ps, name, Shape{n}, fan_in, init);
}

template <class T>
void add_batch_norm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels) {
  ps.add(prefix + ".gamma", Tensor<T>(Shape{channels}, T{1}));
  ps.add(prefix + ".beta", Tensor<T>(Shape{channels}, T{0}));
  ps.add(prefix + ".running_mean", Tensor<T>(Shape{channels}, T{0}), false);
  ps.add(prefix + ".running_var", Tensor<T>(Shape{channels}, T{1}), false);
}

template <class T>
Var batch_norm(Context<T>& ctx, Var x, const std::string& prefix) {
  auto& g = ctx.graph;
  const bool training = ctx.mode == Mode::kTrain;
  Var gamma = g.parameter(ctx.params, prefix + ".gamma");
  Var beta = g.parameter(ctx.params, prefix + ".beta");
  std::optional<Var> rm, rv;
  if (!training) {
    rm = g.constant(ctx.params.value(prefix + ".running_mean"));
    rv = g.constant(ctx.params.value(prefix + ".running_var"));
  }
  Var y = ops::batch_norm(g, x, gamma, beta, rm, rv, ops::BatchNormAttrs{training, ctx.bn_eps});
  if (training && ctx.update_running_stats) {
    const auto& saved = g.saved(y);
    const Tensor<T>& mean = saved[2];
    const Tensor<T>& var = saved[3];
    const Shape xs = g.value(x).shape();
    const double n = static_cast<double>(numel(xs) / xs[1]);
    const double unbias = n > 1 ? n / (n - 1) : 1.0;
    const T m = static_cast<T>(ctx.bn_momentum);
    auto& run_mean = ctx.params.value(prefix + ".running_mean");
    auto& run_var = ctx.params.value(prefix + ".running_var");
    for (std::size_t c = 0; c < mean.size(); ++c) {
      run_mean[c] = (T{1} - m) * run_mean[c] + m * mean[c];
      run_var[c] = (T{1} - m) * run_var[c] + m * static_cast<T>(var[c] * unbias);
    }
  }
  return y;
}

template <class T>
void add_conv1x1_bn(ParameterSet<T>& ps, const std::string& prefix, std::int64_t cin, std::int64_t cout,
                    const Rng& init) {
  add_weight(ps, prefix + ".weight", Shape{cout, cin}, cin, init);
  add_batch_norm(ps, prefix + ".bn", cout);
}

template <class T>
Var conv1x1_bn(Context<T>& ctx, Var x, const std::string& prefix, bool relu) {
  Var y = ops::conv1x1(ctx.graph, x, ctx.graph.parameter(ctx.params, prefix + ".weight"));
  y = batch_norm(ctx, y, prefix + ".bn");
  return relu ? ops::relu(ctx.graph, y) : y;
}

template <class T>
void add_conv1x1_bias(ParameterSet<T>& ps, const std::string& prefix, std::int64_t cin, std::int64_t cout,
                      const Rng& init) {
  add_weight(ps, prefix + ".weight", Shape{cout, cin}, cin, init);
  add_bias(ps, prefix + ".bias", cout, cin, init);
}

template <class T>
Var conv1x1_bias(Context<T>& ctx, Var x, const std::string& prefix) {
  auto& g = ctx.graph;
  Var y = ops::conv1x1(g, x, g.parameter(ctx.params, prefix + ".weight"));
  const Shape ys = g.value(y).shape();
  Shape bshape(ys.size(), 1);
  bshape[1] = ys[1];
  Var b = ops::reshape(g, g.parameter(ctx.params, prefix + ".bias"), bshape);
  return ops::add(g, y, b);
}

#define RGA_INSTANTIATE_LAYERS(T)                                                                       \
  template void add_weight<T>(ParameterSet<T>&, const std::string&, Shape, std::int64_t, const Rng&);   \
  template void add_bias<T>(ParameterSet<T>&, const std::string&, std::int64_t, std::int64_t, const Rng&); \
  template void add_batch_norm<T>(ParameterSet<T>&, const std::string&, std::int64_t);                  \
  template Var batch_norm<T>(Context<T>&, Var, const std::string&);                                     \
  template void add_conv1x1_bn<T>(ParameterSet<T>&, const std::string&, std::int64_t, std::int64_t, const Rng&); \
  template Var conv1x1_bn<T>(Context<T>&, Var, const std::string&, bool);                               \
  template void add_conv1x1_bias<T>(ParameterSet<T>&, const std::string&, std::int64_t, std::int64_t,   \
                                    const Rng&);                                                        \
  template Var conv1x1_bias<T>(Context<T>&, Var, const std::string&);

RGA_INSTANTIATE_LAYERS(float)
RGA_INSTANTIATE_LAYERS(double)

}  // namespace rga::layers
