#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rga/baselines.hpp"
#include "rga/suite.hpp"

using namespace rga;

namespace {

template <class Module>
ParameterSet<double> params_for(const Module& m, std::uint64_t seed) {
  ParameterSet<double> ps;
  m.init(ps, Rng(seed).split(Stream::kInit));
  return ps;
}

void set_identity(Tensor<double>& w) {
  w.fill(0.0);
  for (std::int64_t i = 0; i < std::min(w.dim(0), w.dim(1)); ++i) w.at({i, i}) = 1.0;
}

}  // namespace

TEST_CASE("simplified non-local adds the same context at every position") {
  Rng rng = Rng(41).split(Stream::kTest);
  for (int t = 0; t < 5; ++t) {
    const std::int64_t c = rng.range(2, 8), h = rng.range(2, 6), w = rng.range(2, 6);
    const SnlBlock snl("snl", c, h, w);
    auto ps = params_for(snl, t);
    const auto x = oracle::normal(rng, Shape{2, c, h, w});
    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    const auto out = snl.forward(ctx, g.constant(x));
    const auto y = g.value(out.out);
    CHECK(g.value(out.context).shape() == Shape{2, c, 1});
    double spread = 0;
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t k = 0; k < c; ++k) {
        const double ref = y.at({b, k, 0, 0}) - x.at({b, k, 0, 0});
        for (std::int64_t i = 0; i < h; ++i) {
          for (std::int64_t j = 0; j < w; ++j) {
            spread = std::max(spread, std::abs(y.at({b, k, i, j}) - x.at({b, k, i, j}) - ref));
          }
        }
      }
    }
    CHECK(spread < 1e-12);
    double total = 0;
    for (double v : g.value(out.weights).data()) total += v;
    CHECK(std::abs(total - 2.0) < 1e-12);
  }
}

TEST_CASE("non-local block weights and residual identity") {
  Rng rng = Rng(42).split(Stream::kTest);
  const NlBlock nl("nl", 8, 3, 4);
  auto ps = params_for(nl, 1);
  const auto x = oracle::normal(rng, Shape{2, 8, 3, 4});
  {
    Graph<double> g;
    Context<double> ctx{g, ps, Mode::kEval};
    const auto wts = g.value(nl.forward(ctx, g.constant(x)).weights);
    REQUIRE(wts.shape() == Shape{2, 12, 12});
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t i = 0; i < 12; ++i) {
        double s = 0;
        for (std::int64_t j = 0; j < 12; ++j) s += wts.at({b, i, j});
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  }
  ps.value("nl.out.weight").fill(0.0);
  ps.value("nl.out.bias").fill(0.0);
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  CHECK(g.value(nl.forward(ctx, g.constant(x)).out) == x);
  CHECK(nl.param_count() == ps.trainable_count());
  CHECK_THROWS_AS(NlBlock("nl", 7, 2, 2), std::invalid_argument);
}

TEST_CASE("squeeze-and-excitation gates") {
  Rng rng = Rng(43).split(Stream::kTest);
  const SeBlock se("se", 16, 8);
  auto ps = params_for(se, 2);
  CHECK(se.param_count() == ps.trainable_count());
  CHECK(ps.value("se.fc1.weight").shape() == Shape{2, 16});
  const auto x = oracle::normal(rng, Shape{2, 16, 3, 3});

  // Direct evaluation of sigmoid(W2 relu(W1 mean + b1) + b2).
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  const auto a = g.value(se.attention(ctx, g.constant(x)));
  const auto &w1 = ps.value("se.fc1.weight"), &b1 = ps.value("se.fc1.bias");
  const auto &w2 = ps.value("se.fc2.weight"), &b2 = ps.value("se.fc2.bias");
  for (std::int64_t b = 0; b < 2; ++b) {
    std::vector<double> m(16), hdn(2);
    for (std::int64_t c = 0; c < 16; ++c) {
      for (std::int64_t p = 0; p < 9; ++p) m[c] += x[static_cast<std::size_t>((b * 16 + c) * 9 + p)];
      m[c] /= 9;
    }
    for (std::int64_t j = 0; j < 2; ++j) {
      double s = b1[j];
      for (std::int64_t c = 0; c < 16; ++c) s += w1.at({j, c}) * m[c];
      hdn[j] = std::max(0.0, s);
    }
    for (std::int64_t c = 0; c < 16; ++c) {
      double s = b2[c];
      for (std::int64_t j = 0; j < 2; ++j) s += w2.at({c, j}) * hdn[j];
      CHECK(std::abs(a.at({b, c, 0, 0}) - 1.0 / (1.0 + std::exp(-s))) < 1e-12);
    }
  }
  CHECK_THROWS_AS(SeBlock("se", 4, 8), std::invalid_argument);
  CHECK_THROWS_AS(CbamChannel("cb", 4, 8), std::invalid_argument);
  CHECK_THROWS_AS(se.attention(ctx, g.constant(Tensor<double>(Shape{1, 8, 2, 2}))), ShapeError);
}

TEST_CASE("CBAM spatial gate is uniform away from the borders on a constant input") {
  const CbamSpatial sp("cs");
  auto ps = params_for(sp, 3);
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  const auto a = g.value(sp.attention(ctx, g.constant(Tensor<double>(Shape{1, 4, 12, 10}, 0.7))));
  REQUIRE(a.shape() == Shape{1, 1, 12, 10});
  const double ref = a.at({0, 0, 3, 3});
  for (std::int64_t i = 3; i < 12 - 3; ++i) {
    for (std::int64_t j = 3; j < 10 - 3; ++j) CHECK(std::abs(a.at({0, 0, i, j}) - ref) < 1e-6);
  }
  CHECK(std::abs(a.at({0, 0, 0, 0}) - ref) > 1e-6);
  CHECK(sp.param_count() == ps.trainable_count());
}

TEST_CASE("CBAM channel gate ranks the high-energy channel first") {
  Rng rng = Rng(44).split(Stream::kTest);
  Tensor<double> x = oracle::random(rng, Shape{1, 8, 4, 4}, 0.0, 1.0);
  for (std::int64_t p = 0; p < 16; ++p) x[static_cast<std::size_t>(p)] *= 10.0;

  // Per-channel pass-through MLP: gate(c) = sigmoid(mean_c + max_c).
  const CbamChannel ident("cc", 8, 1);
  auto ps = params_for(ident, 4);
  set_identity(ps.value("cc.fc1.weight"));
  set_identity(ps.value("cc.fc2.weight"));
  ps.value("cc.fc1.bias").fill(0.0);
  ps.value("cc.fc2.bias").fill(0.0);
  Graph<double> g;
  Context<double> ctx{g, ps, Mode::kEval};
  const auto a = g.value(ident.attention(ctx, g.constant(x)));
  for (std::int64_t c = 1; c < 8; ++c) CHECK(a.at({0, 0, 0, 0}) > a.at({0, c, 0, 0}));
  for (std::int64_t c = 0; c < 8; ++c) {
    double mean = 0, mx = -1e300;
    for (std::int64_t p = 0; p < 16; ++p) {
      const double v = x[static_cast<std::size_t>(c * 16 + p)];
      mean += v / 16;
      mx = std::max(mx, v);
    }
    CHECK(std::abs(a.at({0, c, 0, 0}) - 1.0 / (1.0 + std::exp(-(mean + mx)))) < 1e-12);
  }

  // Full CBAM: channel gate then spatial gate on the gated features.
  const Cbam cbam("cb", 8, 2);
  auto pc = params_for(cbam, 5);
  CHECK(cbam.param_count() == pc.trainable_count());
  Graph<double> h;
  Context<double> hctx{h, pc, Mode::kEval};
  const auto y = h.value(cbam.forward(hctx, h.constant(x)));
  const CbamChannel ch("cb.channel", 8, 2);
  const CbamSpatial sp("cb.spatial");
  Graph<double> k;
  Context<double> kctx{k, pc, Mode::kEval};
  CHECK(k.value(sp.forward(kctx, ch.forward(kctx, k.constant(x)))) == y);
}

TEST_CASE("baseline gradient checks") {
  AttentionConfig cfg;
  cfg.s1 = 2;
  cfg.s2 = 2;
  BackboneConfig model;
  model.widths = {4, 8};
  model.downsample = {true, true};
  model.insert = {false, true};
  model.height = 8;
  model.width = 8;
  model.embed_dim = 4;
  model.num_classes = 3;
  model.attention = cfg;
  GradCheckOptions opts;
  opts.max_elements_per_param = 12;
  for (const auto& m : gradcheck_suite(cfg, model, opts, 9)) {
    CAPTURE(m.module);
    if (!m.report.pass()) MESSAGE(format_report(m.report));
    CHECK(m.report.pass());
    CHECK_FALSE(m.report.params.empty());
  }
}
