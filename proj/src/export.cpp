#include "rga/export.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <memory>
#include <sstream>

#include "rga/baselines.hpp"

namespace rga {

std::string format_float(float v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void write_csv_grid(const std::filesystem::path& path, const Grid& grid) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (std::int64_t y = 0; y < grid.height; ++y) {
    for (std::int64_t x = 0; x < grid.width; ++x) {
      if (x) os << ',';
      os << format_float(grid.values[y * grid.width + x]);
    }
    os << '\n';
  }
}

Grid read_csv_grid(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  Grid g;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::int64_t cols = 0;
    std::string_view rest(line);
    while (true) {
      const auto c = rest.find(',');
      const auto cell = rest.substr(0, c);
      float v{};
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size()) {
        throw std::runtime_error("'" + path.string() + "': bad number '" + std::string(cell) + "'");
      }
      g.values.push_back(v);
      ++cols;
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (g.height == 0) g.width = cols;
    if (cols != g.width) throw std::runtime_error("'" + path.string() + "': ragged rows");
    ++g.height;
  }
  return g;
}

std::vector<std::uint8_t> pgm_pixels(const Grid& grid) {
  std::vector<std::uint8_t> px(grid.values.size(), 128);
  if (grid.values.empty()) return px;
  const auto [lo_it, hi_it] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi > lo) {
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double t = (grid.values[i] - lo) / (hi - lo);
      px[i] = static_cast<std::uint8_t>(std::clamp(std::lround(t * 255.0), 0L, 255L));
    }
  }
  return px;
}

void write_pgm(const std::filesystem::path& path, const Grid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
  const auto px = pgm_pixels(grid);
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

NoSpatialAttention::NoSpatialAttention(int block)
    : std::invalid_argument("block " + std::to_string(block) + " has no spatial attention stage") {}

namespace {

struct BlockRun {
  Graph<float> graph;
  Backbone::Output out;
};

void check_block(const Backbone& net, int block) {
  if (block < 0 || block >= static_cast<int>(net.num_blocks())) {
    throw std::invalid_argument("block " + std::to_string(block) + " out of range [0, " +
                                std::to_string(net.num_blocks()) + ")");
  }
  if (!net.attention(block).has_spatial()) throw NoSpatialAttention(block);
}

std::unique_ptr<BlockRun> run_single(const Backbone& net, ParameterSet<float>& params, const Tensor<float>& image) {
  auto run = std::make_unique<BlockRun>();
  run->graph.set_recording(false);
  Shape s = image.shape();
  if (s.size() == 3) s.insert(s.begin(), 1);
  Context<float> ctx{run->graph, params, Mode::kEval};
  run->out = net.forward(ctx, run->graph.constant(image.reshaped(s)));
  return run;
}

}  // namespace

Grid spatial_attention_map(const Backbone& net, ParameterSet<float>& params, const Tensor<float>& image, int block) {
  check_block(net, block);
  auto run = run_single(net, params, image);
  const auto& gm = net.geometry(block);
  const Tensor<float>& a = run->graph.value(run->out.traces[block].spatial);
  return Grid{gm.height, gm.width, std::vector<float>(a.data().begin(), a.data().begin() + gm.height * gm.width)};
}

RelationMaps relation_maps(const Backbone& net, ParameterSet<float>& params, const Tensor<float>& image, int block,
                           const std::vector<std::int64_t>& targets, std::uint64_t seed) {
  check_block(net, block);
  const auto& gm = net.geometry(block);
  const std::int64_t n = gm.height * gm.width;
  for (auto t : targets) {
    if (t < 0 || t >= n) {
      throw std::invalid_argument("target position " + std::to_string(t) + " out of range [0, " + std::to_string(n) +
                                  ") at block " + std::to_string(block));
    }
  }
  auto run = run_single(net, params, image);
  auto& g = run->graph;
  Context<float> ctx{g, params, Mode::kEval};
  const Var input = run->out.traces[block].spatial_input;
  const Tensor<float>& r = g.value(net.attention(block).spatial().affinity(ctx, input));

  RelationMaps maps;
  for (auto t : targets) {
    maps.targets.push_back(Grid{gm.height, gm.width, std::vector<float>(r.ptr() + t * n, r.ptr() + (t + 1) * n)});
  }

  const SnlBlock snl("snl", gm.channels, gm.height, gm.width);
  ParameterSet<float> snl_params;
  snl.init(snl_params, Rng(seed).split(Stream::kInit).split("snl"));
  Context<float> snl_ctx{g, snl_params, Mode::kEval};
  const Tensor<float>& w = g.value(snl.forward(snl_ctx, input).weights);
  maps.snl_weights = Grid{gm.height, gm.width, std::vector<float>(w.data().begin(), w.data().begin() + n)};
  return maps;
}

}  // namespace rga
