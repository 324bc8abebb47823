#include "rga/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "rga/rng.hpp"

namespace rga {

namespace {

constexpr std::int64_t kH = kImageHeight;
constexpr std::int64_t kW = kImageWidth;
constexpr int kJitter = 4;
constexpr double kOccluderProb = 0.3;
constexpr std::int64_t kNoiseCell = 16;
constexpr double kPixelNoise = 0.06;
constexpr std::array<float, 3> kSkin{0.85f, 0.70f, 0.55f};

float color_gap(const SyntheticIdentity& a, const SyntheticIdentity& b) {
  float gap = 0.f;
  for (int c = 0; c < 3; ++c) {
    gap = std::max(gap, std::abs(a.torso[c] - b.torso[c]));
    gap = std::max(gap, std::abs(a.legs[c] - b.legs[c]));
  }
  return gap;
}

std::vector<SyntheticIdentity> draw_identities(int n, Rng rng) {
  std::vector<SyntheticIdentity> ids;
  int attempts = 0;
  while (static_cast<int>(ids.size()) < n) {
    if (++attempts > 100000) throw std::runtime_error("could not place identities with the required colour gap");
    SyntheticIdentity cand;
    for (auto& v : cand.torso) v = static_cast<float>(rng.uniform());
    for (auto& v : cand.legs) v = static_cast<float>(rng.uniform());
    cand.width_frac = rng.uniform(0.35, 0.55);
    cand.height_frac = rng.uniform(0.72, 0.88);
    const bool ok = std::all_of(ids.begin(), ids.end(),
                                [&](const SyntheticIdentity& o) { return color_gap(cand, o) >= kMinColorGap; });
    if (ok) ids.push_back(cand);
  }
  return ids;
}

struct Rect {
  std::int64_t x0, y0, x1, y1;  // half-open
  bool contains(std::int64_t x, std::int64_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

Sample render(const SyntheticIdentity& ident, int id, Rng rng) {
  Sample s;
  s.id = id;
  s.image = Tensor<float>(Shape{3, kH, kW});
  s.mask.assign(static_cast<std::size_t>(kH * kW), 0);

  // Background: bilinear value noise on a coarse colour grid plus pixel noise.
  const std::int64_t gh = kH / kNoiseCell + 1, gw = kW / kNoiseCell + 1;
  std::vector<double> grid(static_cast<std::size_t>(3 * gh * gw));
  for (auto& v : grid) v = rng.uniform();
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < kH; ++y) {
      const double fy = static_cast<double>(y) / kNoiseCell;
      const auto gy = std::min<std::int64_t>(static_cast<std::int64_t>(fy), gh - 2);
      const double ty = fy - gy;
      for (std::int64_t x = 0; x < kW; ++x) {
        const double fx = static_cast<double>(x) / kNoiseCell;
        const auto gx = std::min<std::int64_t>(static_cast<std::int64_t>(fx), gw - 2);
        const double tx = fx - gx;
        auto at = [&](std::int64_t yy, std::int64_t xx) { return grid[(c * gh + yy) * gw + xx]; };
        const double v = (1 - ty) * ((1 - tx) * at(gy, gx) + tx * at(gy, gx + 1)) +
                         ty * ((1 - tx) * at(gy + 1, gx) + tx * at(gy + 1, gx + 1));
        const double noisy = v + rng.uniform(-kPixelNoise, kPixelNoise);
        s.image[(c * kH + y) * kW + x] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
      }
    }
  }

  // Body layout.
  const auto bw = static_cast<std::int64_t>(std::lround(ident.width_frac * kW));
  const auto bh = static_cast<std::int64_t>(std::lround(ident.height_frac * kH));
  const auto dx = static_cast<std::int64_t>(rng.range(-kJitter, kJitter));
  const auto dy = static_cast<std::int64_t>(rng.range(-kJitter, kJitter));
  const std::int64_t x0 = (kW - bw) / 2 + dx;
  const std::int64_t y0 = (kH - bh) / 2 + dy;
  const std::int64_t head_h = bh * 15 / 100, head_w = bw / 2;
  const std::int64_t torso_h = (bh - head_h) * 45 / 100;
  const std::int64_t leg_w = bw * 2 / 5;
  const Rect head{x0 + (bw - head_w) / 2, y0, x0 + (bw - head_w) / 2 + head_w, y0 + head_h};
  const Rect torso{x0, y0 + head_h, x0 + bw, y0 + head_h + torso_h};
  const Rect left_leg{x0, torso.y1, x0 + leg_w, y0 + bh};
  const Rect right_leg{x0 + bw - leg_w, torso.y1, x0 + bw, y0 + bh};

  std::optional<Rect> occluder;
  std::array<float, 3> occ_color{};
  if (rng.bernoulli(kOccluderProb)) {
    const auto ow = static_cast<std::int64_t>(rng.range(8, 16));
    const auto oh = static_cast<std::int64_t>(rng.range(10, 20));
    const auto ox = static_cast<std::int64_t>(rng.range(0, kW - ow));
    const auto oy = static_cast<std::int64_t>(rng.range(0, kH - oh));
    occluder = Rect{ox, oy, ox + ow, oy + oh};
    for (auto& v : occ_color) v = static_cast<float>(rng.uniform());
    s.occluded = true;
  }

  for (std::int64_t y = 0; y < kH; ++y) {
    for (std::int64_t x = 0; x < kW; ++x) {
      const std::array<float, 3>* color = nullptr;
      if (head.contains(x, y)) {
        color = &kSkin;
      } else if (torso.contains(x, y)) {
        color = &ident.torso;
      } else if (left_leg.contains(x, y) || right_leg.contains(x, y)) {
        color = &ident.legs;
      }
      bool body = color != nullptr;
      if (occluder && occluder->contains(x, y)) {
        color = &occ_color;
        body = false;
      }
      if (color) {
        for (std::int64_t c = 0; c < 3; ++c) s.image[(c * kH + y) * kW + x] = (*color)[c];
      }
      s.mask[y * kW + x] = body ? 1 : 0;
    }
  }
  return s;
}

}  // namespace

Dataset gen_dataset(int num_ids, int per_id, std::uint64_t seed) {
  if (num_ids < 2) throw std::invalid_argument("gen_dataset: num_ids must be at least 2");
  if (per_id < 2) throw std::invalid_argument("gen_dataset: per_id must be at least 2");
  const Rng root = Rng(seed).split(Stream::kData);
  Dataset ds;
  ds.identities = draw_identities(num_ids, root.split("identities"));
  const Rng samples = root.split("samples");
  ds.samples.reserve(static_cast<std::size_t>(num_ids * per_id));
  for (int id = 0; id < num_ids; ++id) {
    for (int k = 0; k < per_id; ++k) {
      const auto index = static_cast<std::uint64_t>(id) * static_cast<std::uint64_t>(per_id) + k;
      ds.samples.push_back(render(ds.identities[id], id, samples.split(index)));
    }
  }
  return ds;
}

Tensor<float> stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: no samples selected");
  const std::size_t per = static_cast<std::size_t>(kImageChannels * kH * kW);
  Tensor<float> out(Shape{static_cast<std::int64_t>(indices.size()), kImageChannels, kH, kW});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = samples.at(indices[i]).image;
    std::copy(img.data().begin(), img.data().end(), out.ptr() + i * per);
  }
  return out;
}

std::vector<int> labels_of(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples.at(i).id);
  return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& images) {
  if (images.rank() < 2) throw ShapeError("flip_horizontal: need at least (H, W), got " + shape_str(images.shape()));
  const std::int64_t w = images.dim(-1);
  const std::int64_t rows = static_cast<std::int64_t>(images.size()) / w;
  Tensor<float> out(images.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t x = 0; x < w; ++x) out[r * w + x] = images[r * w + (w - 1 - x)];
  }
  return out;
}

std::vector<double> downsample_mask(const std::vector<std::uint8_t>& mask, std::int64_t h, std::int64_t w) {
  if (static_cast<std::int64_t>(mask.size()) != kH * kW) throw ShapeError("downsample_mask: mask must be 64x32");
  if (h < 1 || w < 1 || kH % h || kW % w) {
    throw ShapeError("downsample_mask: grid " + std::to_string(h) + "x" + std::to_string(w) + " does not tile 64x32");
  }
  const std::int64_t sy = kH / h, sx = kW / w;
  std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t y = 0; y < kH; ++y) {
    for (std::int64_t x = 0; x < kW; ++x) out[(y / sy) * w + x / sx] += mask[y * kW + x];
  }
  for (auto& v : out) v /= static_cast<double>(sy * sx);
  return out;
}

}  // namespace rga
