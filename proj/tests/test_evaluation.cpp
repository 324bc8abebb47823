#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "rga/dataset.hpp"
#include "rga/metrics.hpp"

using namespace rga;

namespace {

std::array<float, 3> pixel(const Sample& s, std::int64_t y, std::int64_t x) {
  return {s.image.at({0, y, x}), s.image.at({1, y, x}), s.image.at({2, y, x})};
}

/// n points on the x axis at the given coordinates.
Tensor<double> line(const std::vector<double>& xs) {
  Tensor<double> t(Shape{static_cast<std::int64_t>(xs.size()), 2});
  for (std::size_t i = 0; i < xs.size(); ++i) t.at({static_cast<std::int64_t>(i), 0}) = xs[i];
  return t;
}

struct Instance {
  Tensor<double> q, g;
  std::vector<int> qids, gids;
};

Instance random_instance(Rng& rng, std::int64_t nq, std::int64_t ng, int num_ids, std::int64_t dim) {
  Instance in;
  in.q = oracle::normal(rng, Shape{nq, dim});
  in.g = oracle::normal(rng, Shape{ng, dim});
  for (std::int64_t j = 0; j < ng; ++j) in.gids.push_back(static_cast<int>(j < num_ids ? j : rng.below(num_ids)));
  for (std::int64_t i = 0; i < nq; ++i) in.qids.push_back(static_cast<int>(rng.below(num_ids)));
  return in;
}

}  // namespace

TEST_CASE("generated datasets are deterministic in the seed") {
  const Dataset a = gen_dataset(4, 5, 7), b = gen_dataset(4, 5, 7), c = gen_dataset(4, 5, 8);
  REQUIRE(a.samples.size() == 20);
  bool differs = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].mask == b.samples[i].mask);
    CHECK(a.samples[i].id == static_cast<int>(i / 5));
    differs = differs || !(a.samples[i].image == c.samples[i].image);
  }
  CHECK(differs);
  for (const auto& s : a.samples) {
    CHECK(s.image.shape() == Shape{3, 64, 32});
    CHECK(std::all_of(s.image.data().begin(), s.image.data().end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
  }
  CHECK_THROWS_AS(gen_dataset(1, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_dataset(3, 1, 1), std::invalid_argument);
}

TEST_CASE("samples of one identity share body colours at unoccluded pixels") {
  const Dataset d = gen_dataset(6, 10, 3);
  int occluded = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    const auto& ident = d.identities[s.id];
    occluded += s.occluded;
    int torso = 0, legs = 0;
    for (std::int64_t y = 0; y < 64; ++y) {
      for (std::int64_t x = 0; x < 32; ++x) {
        if (!s.mask[y * 32 + x]) continue;
        const auto p = pixel(s, y, x);
        torso += p == ident.torso;
        legs += p == ident.legs;
      }
    }
    CHECK(torso > 0);
    CHECK(legs > 0);
  }
  CHECK(occluded > 0);
  CHECK(occluded < 60);
  // Identity colours are separated.
  for (std::size_t a = 0; a < d.identities.size(); ++a) {
    for (std::size_t b = a + 1; b < d.identities.size(); ++b) {
      float gap = 0;
      for (int c = 0; c < 3; ++c) {
        gap = std::max({gap, std::abs(d.identities[a].torso[c] - d.identities[b].torso[c]),
                        std::abs(d.identities[a].legs[c] - d.identities[b].legs[c])});
      }
      CHECK(gap >= kMinColorGap);
    }
  }
}

TEST_CASE("body-colour summaries are closer within an identity than across identities") {
  const Dataset d = gen_dataset(8, 6, 4);
  // Mean colour over visible body pixels.
  std::vector<std::array<double, 3>> f;
  for (const auto& s : d.samples) {
    std::array<double, 3> m{};
    int n = 0;
    for (std::int64_t y = 0; y < 64; ++y) {
      for (std::int64_t x = 0; x < 32; ++x) {
        if (!s.mask[y * 32 + x]) continue;
        const auto p = pixel(s, y, x);
        for (int c = 0; c < 3; ++c) m[c] += p[c];
        ++n;
      }
    }
    for (auto& v : m) v /= n;
    f.push_back(m);
  }
  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (std::size_t a = 0; a < f.size(); ++a) {
    for (std::size_t b = a + 1; b < f.size(); ++b) {
      double dist = 0;
      for (int c = 0; c < 3; ++c) dist += (f[a][c] - f[b][c]) * (f[a][c] - f[b][c]);
      if (d.samples[a].id == d.samples[b].id) {
        intra += std::sqrt(dist);
        ++ni;
      } else {
        inter += std::sqrt(dist);
        ++ne;
      }
    }
  }
  CHECK(inter / ne > intra / ni);
}

TEST_CASE("flip and mask helpers") {
  const Dataset d = gen_dataset(2, 2, 1);
  const auto& img = d.samples[0].image;
  const auto f = flip_horizontal(img);
  CHECK(f.at({1, 5, 0}) == img.at({1, 5, 31}));
  CHECK(flip_horizontal(f) == img);
  const auto cells = downsample_mask(d.samples[0].mask, 8, 4);
  CHECK(cells.size() == 32);
  double total = 0;
  for (double v : cells) {
    CHECK((v >= 0.0 && v <= 1.0));
    total += v * 64;
  }
  CHECK(total == doctest::Approx(std::accumulate(d.samples[0].mask.begin(), d.samples[0].mask.end(), 0.0)));
  CHECK_THROWS_AS(downsample_mask(d.samples[0].mask, 7, 4), ShapeError);
  const auto batch = stack_images(d.samples, {3, 0});
  CHECK(batch.shape() == Shape{2, 3, 64, 32});
  CHECK(labels_of(d.samples, {3, 0}) == std::vector<int>{1, 0});
}

TEST_CASE("perfect retrieval") {
  Rng rng = Rng(51).split(Stream::kTest);
  const auto g = oracle::normal(rng, Shape{6, 4});
  const std::vector<int> ids{0, 1, 2, 3, 4, 5};
  const auto r = cmc_map(g, ids, g, ids);
  CHECK(r.map == 1.0);
  for (double c : r.cmc) CHECK(c == 1.0);
  CHECK(r.cmc.size() == 10);
  CHECK(r.num_query == 6);
  CHECK(r.num_gallery == 6);
}

TEST_CASE("average precision hand case") {
  // Relevant gallery items at ranks 1 and 3 of 5.
  const auto g = line({1, 2, 3, 4, 5});
  const auto r = cmc_map(line({0}), {7}, g, {7, 1, 7, 2, 3});
  CHECK(std::abs(r.map - (1.0 + 2.0 / 3.0) / 2.0) < 1e-9);
  CHECK(r.rank1() == 1.0);

  // First hit at rank 2.
  const auto s = cmc_map(line({0}), {7}, g, {1, 7, 2, 3, 4}, 3);
  CHECK(s.cmc == std::vector<double>{0.0, 1.0, 1.0});
  CHECK(std::abs(s.map - 0.5) < 1e-12);

  // Equal distances keep gallery order.
  const auto t = cmc_map(line({0}), {7}, line({1, 1}), {1, 7}, 1);
  CHECK(t.cmc == std::vector<double>{0.0});
  CHECK(std::abs(t.map - 0.5) < 1e-12);
}

TEST_CASE("metrics match the exhaustive ranking oracle") {
  Rng rng = Rng(52).split(Stream::kTest);
  for (int t = 0; t < 100; ++t) {
    const auto nq = t == 0 ? 20 : rng.range(1, 20);
    const auto ng = t == 0 ? 50 : rng.range(nq > 8 ? 8 : 2, 50);
    const int ids = static_cast<int>(std::min<std::int64_t>(ng, rng.range(2, 8)));
    auto in = random_instance(rng, nq, ng, ids, rng.range(1, 6));
    if (t % 4 == 0) {
      // Quantised embeddings provoke distance ties.
      for (auto& v : in.g.data()) v = std::round(v);
      for (auto& v : in.q.data()) v = std::round(v);
    }
    const auto r = cmc_map(in.q, in.qids, in.g, in.gids);
    const auto o = oracle::retrieval(in.q, in.qids, in.g, in.gids, 10);
    CAPTURE(t);
    CHECK(std::abs(r.map - o.map) < 1e-12);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(r.cmc[k] - o.cmc[k]) < 1e-12);
  }
}

TEST_CASE("metric invariances") {
  Rng rng = Rng(53).split(Stream::kTest);
  for (int t = 0; t < 10; ++t) {
    auto in = random_instance(rng, 8, 30, 6, 5);
    const auto base = cmc_map(in.q, in.qids, in.g, in.gids);
    for (std::size_t k = 1; k < base.cmc.size(); ++k) CHECK(base.cmc[k] >= base.cmc[k - 1]);
    CHECK((base.map > 0.0 && base.map <= 1.0));

    // Uniform scaling by a power of two preserves every distance comparison exactly.
    Tensor<double> q2 = in.q, g2 = in.g;
    for (auto& v : q2.data()) v *= 4.0;
    for (auto& v : g2.data()) v *= 4.0;
    CHECK(cmc_map(q2, in.qids, g2, in.gids) == base);

    // Reordering queries changes nothing.
    std::vector<std::int64_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor<double> qp(in.q.shape());
    std::vector<int> qidp;
    for (std::int64_t i = 0; i < 8; ++i) {
      for (std::int64_t k = 0; k < 5; ++k) qp.at({i, k}) = in.q.at({perm[i], k});
      qidp.push_back(in.qids[perm[i]]);
    }
    const auto p = cmc_map(qp, qidp, in.g, in.gids);
    CHECK(std::abs(p.map - base.map) < 1e-12);
    for (std::size_t k = 0; k < base.cmc.size(); ++k) CHECK(std::abs(p.cmc[k] - base.cmc[k]) < 1e-12);

    // Float embeddings agree with double ones.
    const auto f = cmc_map(in.q.cast<float>(), in.qids, in.g.cast<float>(), in.gids);
    CHECK(std::abs(f.map - base.map) < 1e-6);
  }
}

TEST_CASE("queries without a gallery match are rejected by id") {
  Rng rng = Rng(54).split(Stream::kTest);
  const auto q = oracle::normal(rng, Shape{2, 3});
  const auto g = oracle::normal(rng, Shape{3, 3});
  try {
    cmc_map(q, {0, 9}, g, {0, 1, 2});
    FAIL("expected a missing identity error");
  } catch (const MissingIdentityError& e) {
    CHECK(e.id() == 9);
    CHECK(std::string(e.what()).find("9") != std::string::npos);
  }
  CHECK_THROWS_AS(cmc_map(q, {0}, g, {0, 1, 2}), ShapeError);
  CHECK_THROWS_AS(cmc_map(q, {0, 1}, oracle::normal(rng, Shape{3, 4}), {0, 1, 2}), ShapeError);
  CHECK_THROWS_AS(cmc_map(q, {0, 1}, g, {0, 1, 2}, 0), std::invalid_argument);
}
