#include "rga/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <memory>
#include <stdexcept>

#include "rga/baselines.hpp"

namespace rga {

const std::vector<std::string>& bench_modules() {
  static const std::vector<std::string> m{"RGA-S", "RGA-C", "NL", "SNL", "SE", "CBAM"};
  return m;
}

namespace {

AttentionConfig single(AttentionConfig cfg, Composition c) {
  cfg.composition = c;
  return cfg;
}

/// Builds the module's parameters and returns a forward closure.
std::function<void(Context<float>&, Var)> make_module(const std::string& name, std::int64_t c, std::int64_t h,
                                                      std::int64_t w, const AttentionConfig& cfg,
                                                      ParameterSet<float>& ps, const Rng& init) {
  if (name == "RGA-S") {
    auto m = std::make_shared<RgaSpatial>("m", c, h, w, cfg);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->attention(ctx, x); };
  }
  if (name == "RGA-C") {
    auto m = std::make_shared<RgaChannel>("m", c, h, w, cfg);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->attention(ctx, x); };
  }
  if (name == "NL") {
    auto m = std::make_shared<NlBlock>("m", c, h, w);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->forward(ctx, x); };
  }
  if (name == "SNL") {
    auto m = std::make_shared<SnlBlock>("m", c, h, w);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->forward(ctx, x); };
  }
  if (name == "SE") {
    auto m = std::make_shared<SeBlock>("m", c, cfg.s2);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->forward(ctx, x); };
  }
  if (name == "CBAM") {
    auto m = std::make_shared<Cbam>("m", c, cfg.s2);
    m->init(ps, init);
    return [m](Context<float>& ctx, Var x) { m->forward(ctx, x); };
  }
  throw std::invalid_argument("unknown bench module '" + name + "'");
}

}  // namespace

std::int64_t bench_param_count(const std::string& module, std::int64_t c, std::int64_t h, std::int64_t w,
                               const AttentionConfig& cfg) {
  if (module == "RGA-S") return RgaSpatial("m", c, h, w, cfg).param_count();
  if (module == "RGA-C") return RgaChannel("m", c, h, w, cfg).param_count();
  if (module == "NL") return NlBlock("m", c, h, w).param_count();
  if (module == "SNL") return SnlBlock("m", c, h, w).param_count();
  if (module == "SE") return SeBlock("m", c, cfg.s2).param_count();
  if (module == "CBAM") return Cbam("m", c, cfg.s2).param_count();
  throw std::invalid_argument("unknown bench module '" + module + "'");
}

std::vector<BenchRow> run_bench(const std::vector<std::int64_t>& channels, const std::vector<std::int64_t>& sides,
                                int runs, const AttentionConfig& cfg, std::uint64_t seed) {
  if (runs < 5) throw std::invalid_argument("bench needs at least 5 timed runs");
  std::vector<BenchRow> rows;
  const Rng root(seed);
  for (auto c : channels) {
    for (auto side : sides) {
      Rng data = root.split(Stream::kData).split(static_cast<std::uint64_t>(c * 100003 + side));
      Tensor<float> x(Shape{1, c, side, side});
      for (auto& v : x.data()) v = static_cast<float>(data.normal());
      for (const auto& name : bench_modules()) {
        ParameterSet<float> ps;
        auto fwd = make_module(name, c, side, side, single(cfg, Composition::kS), ps, root.split(Stream::kInit));
        auto once = [&] {
          Graph<float> g;
          g.set_recording(false);
          Context<float> ctx{g, ps, Mode::kEval};
          fwd(ctx, g.constant(x));
        };
        once();
        std::vector<double> ms;
        for (int r = 0; r < runs; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          once();
          const auto t1 = std::chrono::steady_clock::now();
          ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(ms.begin(), ms.end());
        const double median = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
        rows.push_back({c, side, side, name, median, ps.trainable_count()});
      }
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "size,channels,height,width,module,median_ms,param_count\n";
  for (const auto& r : rows) {
    os << "C" << r.channels << "xN" << r.height * r.width << ',' << r.channels << ',' << r.height << ',' << r.width
       << ',' << r.module << ',' << r.median_ms << ',' << r.param_count << '\n';
  }
}

}  // namespace rga
