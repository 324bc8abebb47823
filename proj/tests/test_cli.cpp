#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "oracles.hpp"
#include "rga/bench.hpp"
#include "rga/checkpoint.hpp"
#include "rga/commands.hpp"
#include "rga/export.hpp"
#include "rga/run_config.hpp"
#include "rga/train.hpp"

using namespace rga;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rga_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::vector<std::string> kSmall{"--widths=8,16",       "--downsample=true,true", "--insert=true,true",
                                      "--s1=2",              "--s2=2",                 "--embed_dim=8",
                                      "--num_ids=4",         "--per_id=4",             "--eval_ids=4",
                                      "--eval_per_id=4",     "--epochs=1",             "--ids_per_batch=2",
                                      "--instances_per_id=2"};

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args, bool small = true) {
  if (small) args.insert(args.begin() + 1, kSmall.begin(), kSmall.end());
  std::vector<const char*> argv{"rga"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("run configuration parsing") {
  RunConfig cfg;
  apply_config_text(cfg, "# comment\nseed = 9\ncomposition=S//C\n\nwidths=8,16\ndownsample=true,false\n"
                         "insert=false,true\nlr=0.001\n");
  CHECK(cfg.seed == 9);
  CHECK(cfg.backbone.attention.composition == Composition::kSParallelC);
  CHECK(cfg.backbone.widths == std::vector<std::int64_t>{8, 16});
  CHECK(cfg.backbone.insert == std::vector<bool>{false, true});
  CHECK(cfg.train.lr == 0.001);
  CHECK_THROWS_AS(set_config_value(cfg, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "epochs", "many"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "flip", "maybe"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "composition", "XY"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(cfg, "seed 3\n"), ConfigError);

  // Text form round-trips.
  RunConfig back;
  apply_config_text(back, to_text(cfg));
  CHECK(to_text(back) == to_text(cfg));
  CHECK(config_keys().size() == lines(to_text(cfg)).size());

  RunConfig bad;
  bad.query_per_id = bad.eval_per_id;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  RunConfig defaults;
  CHECK_NOTHROW(defaults.validate());
  CHECK(defaults.model().num_classes == defaults.num_ids);
}

TEST_CASE("experiment data keeps train and evaluation identities apart") {
  RunConfig cfg;
  cfg.num_ids = 4;
  cfg.per_id = 5;
  cfg.eval_ids = 3;
  cfg.eval_per_id = 6;
  cfg.query_per_id = 2;
  const auto d = make_data(cfg);
  CHECK(d.train.samples.size() == 20);
  CHECK(d.eval.samples.size() == 18);
  CHECK(d.query.size() == 6);
  CHECK(d.gallery.size() == 12);
  for (const auto& a : d.train.identities) {
    for (const auto& b : d.eval.identities) CHECK_FALSE((a.torso == b.torso && a.legs == b.legs));
  }
  for (auto q : d.query) CHECK(q % 6 < 2);
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  const auto dir = scratch("ckpt");
  BackboneConfig model;
  model.widths = {8, 16};
  model.downsample = {true, true};
  model.insert = {true, true};
  model.attention.s1 = 2;
  model.attention.s2 = 2;
  const Backbone net(model);
  auto ps = init_params<float>(net, 4);
  ps.value("block0.bn.running_mean")[0] = 0.25f;
  save_checkpoint(dir / "a.rgaw", ps);
  const auto back = read_checkpoint(dir / "a.rgaw");
  CHECK(back.size() == ps.size());
  for (const auto& [name, e] : ps) {
    CHECK(back.value(name) == e.value);
    CHECK(back.entry(name).trainable == e.trainable);
  }
  auto fresh = init_params<float>(net, 5);
  load_checkpoint(dir / "a.rgaw", fresh);
  CHECK(fresh.value("block0.bn.running_mean")[0] == 0.25f);

  // Same tensors written twice give identical bytes.
  save_checkpoint(dir / "b.rgaw", back);
  std::ifstream fa(dir / "a.rgaw", std::ios::binary), fb(dir / "b.rgaw", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {}));

  model.attention.composition = Composition::kS;
  auto other = init_params<float>(Backbone(model), 4);
  try {
    load_checkpoint(dir / "a.rgaw", other);
    FAIL("expected a mismatch");
  } catch (const CheckpointMismatch& e) {
    CHECK(e.tensor().find("rga_c") != std::string::npos);
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.rgaw"), CheckpointError);
  std::ofstream(dir / "junk.rgaw") << "not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.rgaw"), CheckpointError);
  {
    std::ifstream in(dir / "a.rgaw", std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    std::ofstream(dir / "cut.rgaw", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "cut.rgaw"), CheckpointError);
}

TEST_CASE("CSV and PGM grids") {
  const auto dir = scratch("grid");
  Grid g{3, 4, {0.1f, 1.0f / 3.0f, -2.5f, 7e-8f, 1, 2, 3, 4, 5, 6, 7, 8.125f}};
  write_csv_grid(dir / "g.csv", g);
  const Grid back = read_csv_grid(dir / "g.csv");
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.values == g.values);
  CHECK(std::stof(format_float(1.0f / 3.0f)) == 1.0f / 3.0f);

  const auto px = pgm_pixels(g);
  CHECK(px.size() == 12);
  CHECK(px[2] == 0);
  CHECK(px[11] == 255);
  const auto flat = pgm_pixels(Grid{2, 2, {0.4f, 0.4f, 0.4f, 0.4f}});
  for (auto v : flat) CHECK(v == 128);

  write_pgm(dir / "g.pgm", g);
  std::ifstream in(dir / "g.pgm", std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(in), {});
  CHECK(bytes.starts_with("P5\n4 3\n255\n"));
  CHECK(bytes.size() == std::string("P5\n4 3\n255\n").size() + 12);

  std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
  CHECK_THROWS(read_csv_grid(dir / "ragged.csv"));
}

TEST_CASE("command line exit codes") {
  CHECK(run_cli({"train", "--no_such_key=1"}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}, false).code == cli::kExitUsage);
  CHECK(run_cli({}, false).code == cli::kExitUsage);
  CHECK(run_cli({"eval", "positional"}).code == cli::kExitUsage);
  CHECK(run_cli({"eval", "--s1=0"}).code == cli::kExitUsage);
  const auto missing = run_cli({"eval", "--checkpoint=/nonexistent/x.rgaw"});
  CHECK(missing.code == cli::kExitFailure);
  CHECK(missing.err.find("x.rgaw") != std::string::npos);

  const auto pc = run_cli({"param-count", "--composition=SC"});
  CHECK(pc.code == cli::kExitOk);
  CHECK(pc.out.find("# resolved config (seed=1)") != std::string::npos);
  CHECK(pc.out.find("composition=SC") != std::string::npos);
}

TEST_CASE("gradcheck verb passes and reports an injected error") {
  const auto ok = run_cli({"gradcheck", "--gradcheck_elements=2"});
  CHECK(ok.code == cli::kExitOk);
  CHECK(ok.out.find("gradcheck: all parameters pass") != std::string::npos);
  for (const char* m : {"# RGA-S PASS", "# RGA-C PASS", "# RGA-SC PASS", "# NL PASS", "# SNL PASS", "# SE PASS",
                        "# CBAM PASS", "# model PASS"}) {
    CHECK(ok.out.find(m) != std::string::npos);
  }
  const auto bad = run_cli({"gradcheck", "--gradcheck_elements=2", "--gradcheck_corrupt=1.01"});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("train, eval and export round trip through the command line") {
  const auto dir = scratch("run");
  const std::string ckpt = "--checkpoint=" + (dir / "m.rgaw").string();
  const std::string out = "--out_dir=" + dir.string();
  const auto tr = run_cli({"train", ckpt, out, "--epochs=2"});
  REQUIRE(tr.code == cli::kExitOk);
  CHECK(fs::exists(dir / "m.rgaw"));
  const auto trace = lines(std::string(std::istreambuf_iterator<char>(std::ifstream(dir / "loss_trace.csv").rdbuf()), {}));
  CHECK(trace.size() == 4);
  CHECK(trace[0] == "epoch,steps,id_loss,triplet_loss,total_loss,probe_loss");

  const auto ev = run_cli({"eval", ckpt, out});
  CHECK(ev.code == cli::kExitOk);
  CHECK(ev.out.find("mAP") != std::string::npos);
  CHECK(fs::exists(dir / "eval_report.csv"));
  const auto ev2 = run_cli({"eval", ckpt, out});
  CHECK(ev2.out == ev.out);

  CHECK(run_cli({"eval", ckpt, out, "--composition=C"}).code == cli::kExitFailure);

  const auto ea = run_cli({"export-attn", ckpt, out, "--block=1"});
  REQUIRE(ea.code == cli::kExitOk);
  const Grid map = read_csv_grid(dir / "attn_block1.csv");
  CHECK(map.height == 16);
  CHECK(map.width == 8);
  for (float v : map.values) CHECK((v > 0.0f && v < 1.0f));
  CHECK(fs::exists(dir / "attn_block1.pgm"));
  CHECK(run_cli({"export-attn", ckpt, out, "--block=5"}).code == cli::kExitUsage);
  CHECK(run_cli({"export-attn", ckpt, out, "--image=9999"}).code == cli::kExitUsage);

  const auto er = run_cli({"export-relations", ckpt, out, "--block=1", "--targets=0,5,100"});
  REQUIRE(er.code == cli::kExitOk);
  for (int t : {0, 5, 100}) {
    const Grid r = read_csv_grid(dir / ("relation_block1_target" + std::to_string(t) + ".csv"));
    CHECK(r.height == 16);
    CHECK(r.width == 8);
  }
  const Grid snl = read_csv_grid(dir / "snl_block1.csv");
  const auto er2 = run_cli({"export-relations", ckpt, out, "--block=1", "--targets=7"});
  CHECK(er2.code == cli::kExitOk);
  CHECK(read_csv_grid(dir / "snl_block1.csv").values == snl.values);
  CHECK(run_cli({"export-relations", ckpt, out, "--block=1", "--targets=128"}).code == cli::kExitFailure);

  // A checkpoint from a model without a spatial stage has nothing to export.
  const auto dc = scratch("run_c");
  const std::string ckc = "--checkpoint=" + (dc / "m.rgaw").string();
  REQUIRE(run_cli({"train", ckc, "--out_dir=" + dc.string(), "--composition=C"}).code == cli::kExitOk);
  const auto noexp = run_cli({"export-attn", ckc, "--out_dir=" + dc.string(), "--composition=C"});
  CHECK(noexp.code == cli::kExitFailure);
  CHECK(noexp.err.find("spatial") != std::string::npos);
}

TEST_CASE("bench output") {
  const auto dir = scratch("bench");
  const auto r = run_cli({"bench", "--out_dir=" + dir.string(), "--bench_channels=8,16", "--bench_sides=4,8"});
  REQUIRE(r.code == cli::kExitOk);
  const auto rows = lines(std::string(std::istreambuf_iterator<char>(std::ifstream(dir / "bench.csv").rdbuf()), {}));
  REQUIRE(rows.size() == 1 + 2 * 2 * bench_modules().size());
  CHECK(rows[0] == "size,channels,height,width,module,median_ms,param_count");
  AttentionConfig cfg;
  cfg.s1 = 2;
  cfg.s2 = 2;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> cells;
    std::istringstream is(rows[i]);
    for (std::string c; std::getline(is, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 7);
    const auto c = std::stoll(cells[1]), h = std::stoll(cells[2]), w = std::stoll(cells[3]);
    CHECK(std::stoll(cells[6]) == bench_param_count(cells[4], c, h, w, cfg));
    CHECK(std::stod(cells[5]) >= 0.0);
  }
  CHECK(run_cli({"bench", "--out_dir=" + dir.string(), "--bench_runs=2"}).code != cli::kExitOk);
  CHECK_THROWS_AS(bench_param_count("XL", 8, 4, 4, cfg), std::invalid_argument);
}
