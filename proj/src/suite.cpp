#include "rga/suite.hpp"

#include <functional>

#include "rga/baselines.hpp"
#include "rga/losses.hpp"

namespace rga {

const std::vector<std::string>& suite_modules() {
  static const std::vector<std::string> m{"RGA-S", "RGA-C", "RGA-SC", "NL", "SNL", "SE", "CBAM", "model"};
  return m;
}

template <class T>
void randomize_batch_norm(ParameterSet<T>& ps, Rng rng) {
  for (auto& [name, e] : ps) {
    double lo, hi;
    if (name.ends_with(".running_mean")) {
      lo = -0.5, hi = 0.5;
    } else if (name.ends_with(".running_var")) {
      lo = 0.5, hi = 1.5;
    } else if (name.ends_with(".gamma")) {
      lo = 0.5, hi = 1.5;
    } else if (name.ends_with(".beta")) {
      lo = -0.2, hi = 0.2;
    } else {
      continue;
    }
    Rng r = rng.split(name);
    for (auto& v : e.value.data()) v = static_cast<T>(r.uniform(lo, hi));
  }
}

template void randomize_batch_norm<float>(ParameterSet<float>&, Rng);
template void randomize_batch_norm<double>(ParameterSet<double>&, Rng);

namespace {

constexpr std::int64_t kBatch = 2, kC = 16, kH = 4, kW = 4;

Tensor<double> random_tensor(Shape s, Rng rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

/// sum(out * P) for a fixed random P of out's shape.
Var project(Graph<double>& g, Var out, const Rng& rng) {
  return ops::sum(g, ops::mul(g, out, g.constant(random_tensor(g.value(out).shape(), rng))));
}

using Forward = std::function<Var(Context<double>&, Var)>;

ModuleCheck check(const std::string& name, ParameterSet<double>& ps, const Tensor<double>& input, const Forward& fwd,
                  const GradCheckOptions& opts) {
  LossFn fn = [&](Graph<double>& g, ParameterSet<double>& p) {
    Context<double> ctx{g, p, Mode::kEval};
    return fwd(ctx, g.constant(input));
  };
  return {name, grad_check(fn, ps, opts)};
}

}  // namespace

std::vector<ModuleCheck> gradcheck_suite(const AttentionConfig& attention, const BackboneConfig& model,
                                         const GradCheckOptions& options, std::uint64_t seed) {
  const Rng root = Rng(seed).split(Stream::kGradCheck);
  const Rng init = root.split(Stream::kInit);
  const Tensor<double> x = random_tensor(Shape{kBatch, kC, kH, kW}, root.split("input"));
  std::vector<ModuleCheck> out;

  auto run = [&](const std::string& name, auto&& build, const Forward& fwd) {
    ParameterSet<double> ps;
    build(ps);
    randomize_batch_norm(ps, root.split("bn").split(name));
    out.push_back(check(name, ps, x, fwd, options));
  };

  AttentionConfig sc = attention;
  sc.composition = Composition::kSC;
  const RgaSpatial rga_s("rga_s", kC, kH, kW, attention);
  const RgaChannel rga_c("rga_c", kC, kH, kW, attention);
  const AttentionBlock block("rga_sc", kC, kH, kW, sc);
  const NlBlock nl("nl", kC, kH, kW);
  const SnlBlock snl("snl", kC, kH, kW);
  const SeBlock se("se", kC, attention.s2);
  const Cbam cbam("cbam", kC, attention.s2);
  const Rng proj = root.split("projection");

  run("RGA-S", [&](auto& ps) { rga_s.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return ops::mean_all(ctx.graph, rga_s.attention(ctx, v)); });
  run("RGA-C", [&](auto& ps) { rga_c.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return ops::mean_all(ctx.graph, rga_c.attention(ctx, v)); });
  run("RGA-SC", [&](auto& ps) { block.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return project(ctx.graph, block.forward(ctx, v), proj); });
  run("NL", [&](auto& ps) { nl.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return project(ctx.graph, nl.forward(ctx, v).out, proj); });
  run("SNL", [&](auto& ps) { snl.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return project(ctx.graph, snl.forward(ctx, v).out, proj); });
  run("SE", [&](auto& ps) { se.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return project(ctx.graph, se.forward(ctx, v), proj); });
  run("CBAM", [&](auto& ps) { cbam.init(ps, init); },
      [&](Context<double>& ctx, Var v) { return project(ctx.graph, cbam.forward(ctx, v), proj); });

  const Backbone net(model);
  ParameterSet<double> ps;
  net.init(ps, init);
  randomize_batch_norm(ps, root.split("bn").split("model"));
  Rng img = root.split("images");
  Tensor<double> images(Shape{2, model.in_channels, model.height, model.width});
  for (auto& v : images.data()) v = img.uniform();
  const std::vector<int> labels{0, 1};
  out.push_back(check(
      "model", ps, images,
      [&](Context<double>& ctx, Var v) { return id_loss(ctx.graph, net.forward(ctx, v).logits, labels, 0.1); },
      options));
  return out;
}

}  // namespace rga
