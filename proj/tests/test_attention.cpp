#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rga/attention.hpp"
#include "rga/baselines.hpp"
#include "rga/suite.hpp"

using namespace rga;

namespace {

AttentionConfig config(std::int64_t s1, std::int64_t s2, EmbeddingMode mode = EmbeddingMode::kAsymmetric,
                       Composition comp = Composition::kSC) {
  AttentionConfig cfg;
  cfg.s1 = s1;
  cfg.s2 = s2;
  cfg.embedding_mode = mode;
  cfg.composition = comp;
  return cfg;
}

template <class Module>
ParameterSet<double> init_params(const Module& m, std::uint64_t seed) {
  ParameterSet<double> ps;
  const Rng root = Rng(seed).split(Stream::kTest);
  m.init(ps, root.split(Stream::kInit));
  randomize_batch_norm(ps, root.split("bn"));
  return ps;
}

void zero_head2(ParameterSet<double>& ps, const std::string& prefix) {
  ps.value(prefix + ".head2.weight").fill(0.0);
  ps.value(prefix + ".head2.bn.beta").fill(0.0);
  ps.value(prefix + ".head2.bn.running_mean").fill(0.0);
}

double max_diff(const std::vector<std::vector<double>>& a, const Tensor<double>& r, std::int64_t b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      m = std::max(m, std::abs(a[i][j] - r.at({b, static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)})));
    }
  }
  return m;
}

const EmbeddingMode kModes[] = {EmbeddingMode::kAsymmetric, EmbeddingMode::kSymmetric, EmbeddingMode::kNone};

}  // namespace

TEST_CASE("affinity hand cases without embeddings") {
  // Two channels over a 1x2 map: positions (1,2) and (3,4); channel maps (1,3) and (2,4).
  const Tensor<double> x(Shape{1, 2, 1, 2}, {1, 3, 2, 4});
  const auto cfg = config(1, 1, EmbeddingMode::kNone);
  ParameterSet<double> ps;
  const RgaSpatial s("s", 2, 1, 2, cfg);
  const RgaChannel c("c", 2, 1, 2, cfg);
  s.init(ps, Rng(1));
  c.init(ps, Rng(1));
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  CHECK(g.value(s.affinity(ctx, g.constant(x))) == Tensor<double>(Shape{1, 2, 2}, {5, 11, 11, 25}));
  CHECK(g.value(c.affinity(ctx, g.constant(x))) == Tensor<double>(Shape{1, 2, 2}, {10, 14, 14, 20}));
}

TEST_CASE("spatial and channel affinities match the pairwise oracle") {
  Rng rng = Rng(21).split(Stream::kTest);
  int trials = 0;
  for (int t = 0; t < 60; ++t) {
    const EmbeddingMode mode = kModes[t % 3];
    const std::int64_t s1 = rng.range(1, 3);
    const std::int64_t b = rng.range(1, 2);
    const std::int64_t c = s1 * rng.range(1, 4);
    std::int64_t h = rng.range(1, 5), w = rng.range(1, 5);
    while ((h * w) % s1 != 0) w += 1;
    const auto cfg = config(s1, 2, mode);
    const auto x = oracle::normal(rng, Shape{b, c, h, w});

    const RgaSpatial sp("s", c, h, w, cfg);
    const RgaChannel ch("c", c, h, w, cfg);
    ParameterSet<double> ps;
    sp.init(ps, rng.split(Stream::kInit));
    ch.init(ps, rng.split(Stream::kInit));
    randomize_batch_norm(ps, rng.split("bn"));

    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    const auto rs = g.value(sp.affinity(ctx, g.constant(x)));
    const auto rc = g.value(ch.affinity(ctx, g.constant(x)));
    CHECK(rs.shape() == Shape{b, h * w, h * w});
    CHECK(rc.shape() == Shape{b, c, c});
    for (std::int64_t i = 0; i < b; ++i) {
      CAPTURE(t);
      CHECK(max_diff(oracle::spatial_affinity(ps, "s", mode, x, i), rs, i) < 1e-10);
      CHECK(max_diff(oracle::channel_affinity(ps, "c", mode, x, i), rc, i) < 1e-10);
    }
    ++trials;
  }
  CHECK(trials >= 50);
}

TEST_CASE("shared embeddings give symmetric affinities") {
  Rng rng = Rng(22).split(Stream::kTest);
  for (EmbeddingMode mode : {EmbeddingMode::kSymmetric, EmbeddingMode::kNone}) {
    const auto cfg = config(2, 2, mode);
    const RgaSpatial sp("s", 4, 3, 2, cfg);
    const RgaChannel ch("c", 4, 3, 2, cfg);
    ParameterSet<double> ps;
    sp.init(ps, rng.split(Stream::kInit));
    ch.init(ps, rng.split(Stream::kInit));
    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    Var x = g.constant(oracle::normal(rng, Shape{2, 4, 3, 2}));
    for (Var r : {sp.affinity(ctx, x), ch.affinity(ctx, x)}) {
      const auto t = g.value(r);
      const auto k = t.dim(1);
      for (std::int64_t b = 0; b < 2; ++b) {
        for (std::int64_t i = 0; i < k; ++i) {
          for (std::int64_t j = 0; j < k; ++j) CHECK(t.at({b, i, j}) == t.at({b, j, i}));
        }
      }
    }
  }
}

TEST_CASE("relation stack places outgoing then incoming relations in each column") {
  const Tensor<double> r(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(relation_stack(r) == Tensor<double>(Shape{4, 2}, {1, 3, 2, 4, 1, 2, 3, 4}));
  CHECK_THROWS_AS(relation_stack(Tensor<double>(Shape{2, 3})), ShapeError);

  Rng rng = Rng(23).split(Stream::kTest);
  for (int t = 0; t < 10; ++t) {
    const auto k = rng.range(1, 12);
    const auto a = oracle::random(rng, Shape{k, k});
    const auto s = relation_stack(a);
    REQUIRE(s.shape() == Shape{2 * k, k});
    for (std::int64_t i = 0; i < k; ++i) {
      const auto v = oracle::relation_vector(a, i);
      for (std::int64_t j = 0; j < 2 * k; ++j) CHECK(s.at({j, i}) == v[j]);
    }
    Graph<double> g;
    const auto batched = g.value(relation_stack(g, g.constant(a.reshaped(Shape{1, k, k}))));
    CHECK(batched.reshaped(Shape{2 * k, k}) == s);
  }
}

TEST_CASE("attention maps have the documented shapes and lie strictly inside (0,1)") {
  Rng rng = Rng(24).split(Stream::kTest);
  for (int t = 0; t < 12; ++t) {
    const std::int64_t b = rng.range(1, 3), c = 4 * rng.range(1, 3), h = 2 * rng.range(1, 3), w = 2;
    const auto cfg = config(2, 2, kModes[t % 3]);
    const RgaSpatial sp("s", c, h, w, cfg);
    const RgaChannel ch("c", c, h, w, cfg);
    ParameterSet<double> ps;
    sp.init(ps, rng.split(Stream::kInit));
    ch.init(ps, rng.split(Stream::kInit));
    const double spread = t < 6 ? 1.0 : 1e4;
    const auto x = oracle::random(rng, Shape{b, c, h, w}, -spread, spread);
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      Graph<double> g;
      Context<double> ctx{g, ps, mode};
      ctx.update_running_stats = false;
      const auto as = g.value(sp.attention(ctx, g.constant(x)));
      const auto ac = g.value(ch.attention(ctx, g.constant(x)));
      CHECK(as.shape() == Shape{b, 1, h, w});
      CHECK(ac.shape() == Shape{b, c, 1, 1});
      for (double v : as.data()) CHECK((v > 0.0 && v < 1.0));
      for (double v : ac.data()) CHECK((v > 0.0 && v < 1.0));
    }
  }
  // Float maps stay inside the open interval as well.
  const auto cfg = config(2, 2);
  const RgaSpatial sp("s", 4, 2, 2, cfg);
  ParameterSet<float> psf;
  sp.init(psf, Rng(3));
  Graph<float> g;
  Context<float> ctx{g, psf, Mode::kTrain};
  const auto af = g.value(sp.attention(ctx, g.constant(oracle::random<float>(rng, Shape{2, 4, 2, 2}, -1e4, 1e4))));
  for (float v : af.data()) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("zeroed final head layer gives gates of exactly one half") {
  Rng rng = Rng(25).split(Stream::kTest);
  const auto cfg = config(2, 2);
  const RgaSpatial sp("s", 8, 4, 2, cfg);
  const RgaChannel ch("c", 8, 4, 2, cfg);
  ParameterSet<double> ps;
  sp.init(ps, rng.split(Stream::kInit));
  ch.init(ps, rng.split(Stream::kInit));
  randomize_batch_norm(ps, rng.split("bn"));
  zero_head2(ps, "s");
  zero_head2(ps, "c");
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  Var x = g.constant(oracle::normal(rng, Shape{2, 8, 4, 2}));
  for (double v : g.value(sp.attention(ctx, x)).data()) CHECK(v == 0.5);
  for (double v : g.value(ch.attention(ctx, x)).data()) CHECK(v == 0.5);

  const SeBlock se("se", 8, 2);
  ParameterSet<double> pse;
  se.init(pse, Rng(1));
  pse.value("se.fc2.weight").fill(0.0);
  pse.value("se.fc2.bias").fill(0.0);
  Graph<double> h;
  Context<double> hctx{h, pse, Mode::kEval};
  for (double v : h.value(se.attention(hctx, h.constant(oracle::normal(rng, Shape{2, 8, 3, 3})))).data()) {
    CHECK(v == 0.5);
  }
}

TEST_CASE("apply_attention gating identities") {
  Rng rng = Rng(26).split(Stream::kTest);
  const auto x = oracle::normal(rng, Shape{2, 3, 4, 5});
  Graph<double> g;
  Var xv = g.constant(x);
  CHECK(g.value(apply_attention(g, xv, g.constant(Tensor<double>(Shape{2, 1, 4, 5}, 1.0)))) == x);
  CHECK(g.value(apply_attention(g, xv, g.constant(Tensor<double>(Shape{2, 3, 1, 1}, 1.0)))) == x);
  for (double v : g.value(apply_attention(g, xv, g.constant(Tensor<double>(Shape{2, 1, 4, 5}, 0.0)))).data()) {
    CHECK(v == 0.0);
  }
  for (double v : g.value(apply_attention(g, xv, g.constant(Tensor<double>(Shape{2, 3, 1, 1}, 0.0)))).data()) {
    CHECK(v == 0.0);
  }

  const auto as = oracle::random(rng, Shape{2, 1, 4, 5}, 0, 1);
  const auto ac = oracle::random(rng, Shape{2, 3, 1, 1}, 0, 1);
  const auto ys = g.value(apply_attention(g, xv, g.constant(as)));
  const auto yc = g.value(apply_attention(g, xv, g.constant(ac)));
  for (int t = 0; t < 10; ++t) {
    const auto b = rng.range(0, 1), c = rng.range(0, 2), i = rng.range(0, 3), j = rng.range(0, 4);
    CHECK(ys.at({b, c, i, j}) == x.at({b, c, i, j}) * as.at({b, 0, i, j}));
    CHECK(yc.at({b, c, i, j}) == x.at({b, c, i, j}) * ac.at({b, c, 0, 0}));
  }
  CHECK_THROWS_AS(apply_attention(g, xv, g.constant(Tensor<double>(Shape{2, 3, 4, 1}))), ShapeError);
}

TEST_CASE("compositions combine the stages as specified") {
  Rng rng = Rng(27).split(Stream::kTest);
  const std::int64_t c = 8, h = 4, w = 2;
  const auto x = oracle::normal(rng, Shape{2, c, h, w});

  auto params_for = [&](const AttentionBlock& blk) {
    ParameterSet<double> ps;
    blk.init(ps, Rng(5).split(Stream::kInit));
    randomize_batch_norm(ps, Rng(5).split("bn"));
    return ps;
  };
  auto run = [&](const AttentionBlock& blk, ParameterSet<double>& ps, AttentionTrace* trace = nullptr,
                 bool bypass = false) {
    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    Var out = blk.forward(ctx, g.constant(x), trace, bypass);
    Tensor<double> o = g.value(out);
    return std::make_pair(o, trace ? std::make_pair(trace->spatial.valid() ? g.value(trace->spatial) : Tensor<double>(),
                                                    trace->channel.valid() ? g.value(trace->channel) : Tensor<double>())
                                   : std::make_pair(Tensor<double>(), Tensor<double>()));
  };

  const AttentionBlock s("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kS));
  const AttentionBlock cc("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kC));
  const AttentionBlock sc("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kSC));
  const AttentionBlock cs("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kCS));
  const AttentionBlock par("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kSParallelC));
  const AttentionBlock none("b", c, h, w, config(2, 2, EmbeddingMode::kAsymmetric, Composition::kNone));
  CHECK((s.has_spatial() && !s.has_channel()));
  CHECK((!cc.has_spatial() && cc.has_channel()));
  CHECK((sc.has_spatial() && sc.has_channel()));
  CHECK((!none.has_spatial() && !none.has_channel()));
  CHECK(none.param_count() == 0);

  auto ps = params_for(sc);
  SUBCASE("bypass and plain backbone are the identity") {
    CHECK(run(sc, ps, nullptr, true).first == x);
    ParameterSet<double> empty;
    CHECK(run(none, empty).first == x);
  }
  SUBCASE("SC with a neutral channel head halves the spatially gated features") {
    zero_head2(ps, "b.rga_c");
    const auto y_s = run(s, ps).first;
    const auto y_sc = run(sc, ps).first;
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y_sc[i] == 0.5 * y_s[i]);
  }
  SUBCASE("order matters") {
    CHECK(max_abs_diff(run(sc, ps).first, run(cs, ps).first) > 1e-6);
  }
  SUBCASE("parallel composition gates the input by both maps") {
    AttentionTrace ts, tc, tp;
    const auto s_maps = run(s, ps, &ts).second;
    const auto c_maps = run(cc, ps, &tc).second;
    const auto [y, p_maps] = run(par, ps, &tp);
    CHECK(p_maps.first == s_maps.first);
    CHECK(p_maps.second == c_maps.second);
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t k = 0; k < c; ++k) {
        for (std::int64_t i = 0; i < h; ++i) {
          for (std::int64_t j = 0; j < w; ++j) {
            const double expect = x.at({b, k, i, j}) * s_maps.first.at({b, 0, i, j}) * c_maps.second.at({b, k, 0, 0});
            CHECK(std::abs(y.at({b, k, i, j}) - expect) < 1e-15);
          }
        }
      }
    }
  }
  SUBCASE("SC computes the channel map on spatially gated features") {
    AttentionTrace t;
    const auto [y, maps] = run(sc, ps, &t);
    // Channel map from an explicit C stage on x * a_s.
    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    Var gated = apply_attention(g, g.constant(x), g.constant(maps.first));
    CHECK(g.value(cc.channel().attention(ctx, gated)) == maps.second);
  }
}

TEST_CASE("factored and explicit relation embeddings compute the same map") {
  Rng rng = Rng(28).split(Stream::kTest);
  for (int t = 0; t < 6; ++t) {
    auto cfg = config(2, 2, kModes[t % 3]);
    const std::int64_t c = 4 * rng.range(1, 2), h = 2 * rng.range(1, 3), w = 2;
    const auto x = oracle::normal(rng, Shape{2, c, h, w});
    cfg.factored_relation = true;
    const RgaSpatial fac("s", c, h, w, cfg);
    cfg.factored_relation = false;
    const RgaSpatial exp("s", c, h, w, cfg);
    CHECK(fac.param_count() == exp.param_count());
    ParameterSet<double> ps = init_params(fac, 100 + t);
    for (Mode mode : {Mode::kEval, Mode::kTrain}) {
      ParameterSet<double> p1 = ps, p2 = ps;
      Graph<double> g1, g2;
      Context<double> c1{g1, p1, mode}, c2{g2, p2, mode};
      Var a1 = fac.attention(c1, g1.constant(x));
      Var a2 = exp.attention(c2, g2.constant(x));
      CHECK(max_abs_diff(g1.value(a1), g2.value(a2)) < 1e-12);
      g1.backward(ops::sum(g1, a1));
      g2.backward(ops::sum(g2, a2));
      for (const auto& name : p1.names()) {
        if (!p1.entry(name).trainable) continue;
        CAPTURE(name);
        CHECK(max_abs_diff(p1.grad(name), p2.grad(name)) < 1e-10);
      }
      if (mode == Mode::kTrain) {
        CHECK(max_abs_diff(p1.value("s.relation.bn.running_mean"), p2.value("s.relation.bn.running_mean")) < 1e-12);
      }
    }
  }
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(config(0, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(config(2, 0).validate(), std::invalid_argument);
  auto cfg = config(2, 2);
  cfg.use_relation = false;
  cfg.use_original = false;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(RgaSpatial("s", 6, 2, 2, cfg), std::invalid_argument);
  CHECK_THROWS_AS(RgaSpatial("s", 6, 2, 2, config(4, 2)), std::invalid_argument);  // C not divisible
  CHECK_THROWS_AS(RgaSpatial("s", 8, 3, 1, config(2, 2)), std::invalid_argument);  // N not divisible
  CHECK_THROWS_AS(RgaChannel("c", 8, 3, 1, config(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(parse_composition("SCS"), std::invalid_argument);
  CHECK_THROWS_AS(parse_embedding_mode("weird"), std::invalid_argument);
  CHECK(parse_composition("S//C") == Composition::kSParallelC);
  CHECK(parse_composition("baseline") == Composition::kNone);
  for (Composition comp : {Composition::kNone, Composition::kS, Composition::kC, Composition::kSC, Composition::kCS,
                           Composition::kSParallelC}) {
    CHECK(parse_composition(to_string(comp)) == comp);
  }
  for (EmbeddingMode m : kModes) CHECK(parse_embedding_mode(to_string(m)) == m);

  const RgaSpatial sp("s", 8, 2, 2, config(2, 2));
  ParameterSet<double> ps;
  sp.init(ps, Rng(1));
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  CHECK_THROWS_AS(sp.attention(ctx, g.constant(Tensor<double>(Shape{1, 8, 2, 4}))), ShapeError);
}

TEST_CASE("original-feature-only heads keep the C/s1 embedding") {
  auto cfg = config(4, 2);
  cfg.use_relation = false;
  const RgaSpatial sp("s", 16, 4, 4, cfg);
  CHECK(sp.head_in() == 4);
  ParameterSet<double> ps;
  sp.init(ps, Rng(2));
  CHECK(ps.value("s.psi.weight").shape() == Shape{4, 16});
  CHECK_FALSE(ps.contains("s.theta.weight"));
  CHECK_FALSE(ps.contains("s.relation.weight"));
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  CHECK(g.value(sp.attention(ctx, g.constant(Tensor<double>(Shape{1, 16, 4, 4}, 0.3)))).shape() == Shape{1, 1, 4, 4});
  CHECK_THROWS_AS(sp.affinity(ctx, g.constant(Tensor<double>(Shape{1, 16, 4, 4}))), std::logic_error);

  cfg.use_relation = true;
  cfg.use_original = false;
  const RgaSpatial rel("s", 16, 4, 4, cfg);
  CHECK(rel.head_in() == 16 / 4);
  const RgaSpatial both("s", 16, 4, 4, config(4, 2));
  CHECK(both.head_in() == 16 / 4 + 1);
}

TEST_CASE("analytic parameter counts match the enumerated parameter set") {
  Rng rng = Rng(29).split(Stream::kTest);
  for (int t = 0; t < 20; ++t) {
    auto cfg = config(rng.range(1, 4), rng.range(1, 8), kModes[rng.below(3)]);
    cfg.use_relation = rng.bernoulli(0.8);
    cfg.use_original = !cfg.use_relation || rng.bernoulli(0.7);
    cfg.factored_relation = rng.bernoulli(0.5);
    cfg.composition = static_cast<Composition>(rng.below(6));
    const std::int64_t c = cfg.s1 * rng.range(1, 8), h = cfg.s1 * rng.range(1, 3), w = rng.range(1, 4);
    CAPTURE(t);
    const RgaSpatial sp("s", c, h, w, cfg);
    const RgaChannel ch("c", c, h, w, cfg);
    const AttentionBlock blk("b", c, h, w, cfg);
    ParameterSet<double> a, b, d;
    sp.init(a, Rng(t));
    ch.init(b, Rng(t));
    blk.init(d, Rng(t));
    CHECK(sp.param_count() == a.trainable_count());
    CHECK(ch.param_count() == b.trainable_count());
    CHECK(blk.param_count() == d.trainable_count());
  }
}

TEST_CASE("relation embeddings grow with the node count while SE does not") {
  const auto cfg = config(2, 2);
  const RgaSpatial small("s", 16, 4, 4, cfg);
  const RgaSpatial large("s", 16, 8, 4, cfg);
  CHECK(large.param_count() > small.param_count());
  const RgaChannel csmall("c", 16, 4, 4, cfg);
  const RgaChannel clarge("c", 32, 4, 4, cfg);
  CHECK(clarge.param_count() > csmall.param_count());
  CHECK(SeBlock("se", 16, 2).param_count() == layers::conv1x1_bias_count(16, 8) + layers::conv1x1_bias_count(8, 16));
}

TEST_CASE("relation vectors differ between target positions") {
  Rng rng = Rng(30).split(Stream::kTest);
  const RgaSpatial sp("s", 8, 4, 4, config(2, 2));
  ParameterSet<double> ps = init_params(sp, 7);
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  const auto r = g.value(sp.affinity(ctx, g.constant(oracle::normal(rng, Shape{1, 8, 4, 4}))))
                     .reshaped(Shape{16, 16});
  const auto st = relation_stack(r);
  double min_gap = 1e300;
  for (std::int64_t i = 0; i < 16; ++i) {
    for (std::int64_t j = i + 1; j < 16; ++j) {
      double gap = 0;
      for (std::int64_t k = 0; k < 32; ++k) gap = std::max(gap, std::abs(st.at({k, i}) - st.at({k, j})));
      min_gap = std::min(min_gap, gap);
    }
  }
  CHECK(min_gap > 1e-6);
}

TEST_CASE("attention modules pass gradient checks with batch statistics") {
  Rng rng = Rng(31).split(Stream::kTest);
  const auto x = oracle::normal(rng, Shape{2, 4, 2, 2});
  for (EmbeddingMode mode : kModes) {
    const auto cfg = config(2, 2, mode);
    const RgaSpatial sp("s", 4, 2, 2, cfg);
    const RgaChannel ch("c", 4, 2, 2, cfg);
    ParameterSet<double> ps;
    sp.init(ps, Rng(8));
    ch.init(ps, Rng(8));
    auto fn = [&](Graph<double>& g, ParameterSet<double>& p) {
      Context<double> ctx{g, p, Mode::kTrain};
      ctx.update_running_stats = false;
      Var xv = g.constant(x);
      return ops::add(g, ops::mean_all(g, sp.attention(ctx, xv)), ops::mean_all(g, ch.attention(ctx, xv)));
    };
    const auto report = grad_check(fn, ps);
    if (!report.pass()) MESSAGE(format_report(report));
    CHECK(report.pass());
  }
}
