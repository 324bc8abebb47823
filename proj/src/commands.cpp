#include "rga/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "rga/bench.hpp"
#include "rga/checkpoint.hpp"
#include "rga/export.hpp"
#include "rga/metrics.hpp"
#include "rga/run_config.hpp"
#include "rga/suite.hpp"

namespace rga::cli {

namespace {

namespace fs = std::filesystem;

std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

fs::path out_path(const RunConfig& cfg, const std::string& file) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / file;
}

const Sample& pick_image(const RunConfig& cfg, const ExperimentData& data) {
  if (cfg.image >= static_cast<int>(data.eval.samples.size())) {
    throw ConfigError("image index " + std::to_string(cfg.image) + " out of range for " +
                      std::to_string(data.eval.samples.size()) + " evaluation samples");
  }
  return data.eval.samples[cfg.image];
}

ParameterSet<float> load_model(const RunConfig& cfg, const Backbone& net) {
  auto params = init_params<float>(net, cfg.seed);
  load_checkpoint(cfg.checkpoint, params);
  return params;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  GradCheckOptions opts;
  opts.max_elements_per_param = cfg.gradcheck_elements;
  opts.corrupt_scale = cfg.gradcheck_corrupt;
  opts.seed = cfg.seed;
  bool pass = true;
  for (const auto& m : gradcheck_suite(cfg.backbone.attention, cfg.model(), opts, cfg.seed)) {
    out << "# " << m.module << (m.report.pass() ? " PASS" : " FAIL") << '\n';
    out << format_report(m.report);
    pass = pass && m.report.pass();
  }
  out << (pass ? "gradcheck: all parameters pass\n" : "gradcheck: FAILED\n");
  return pass ? kExitOk : kExitFailure;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Backbone net(cfg.model());
  const auto data = make_data(cfg);
  const auto res = train(net, cfg.train, data.train.samples, cfg.seed, [&](const EpochStats& s) {
    out << "epoch " << s.epoch << " steps=" << s.steps << " id=" << s.id_loss << " triplet=" << s.triplet_loss
        << " total=" << s.total_loss << " probe=" << s.probe_loss << '\n';
  });
  save_checkpoint(cfg.checkpoint, res.params);
  const auto trace = out_path(cfg, "loss_trace.csv");
  std::ofstream os(trace);
  os << "epoch,steps,id_loss,triplet_loss,total_loss,probe_loss\n";
  os << "0,0,,,," << full(res.initial_probe_loss) << '\n';
  for (const auto& s : res.trace) {
    os << s.epoch << ',' << s.steps << ',' << full(s.id_loss) << ',' << full(s.triplet_loss) << ','
       << full(s.total_loss) << ',' << full(s.probe_loss) << '\n';
  }
  out << "wrote " << cfg.checkpoint << " and " << trace.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Backbone net(cfg.model());
  auto params = load_model(cfg, net);
  const auto data = make_data(cfg);
  const auto q = embed(net, params, stack_images(data.eval.samples, data.query), labels_of(data.eval.samples, data.query));
  const auto g =
      embed(net, params, stack_images(data.eval.samples, data.gallery), labels_of(data.eval.samples, data.gallery));
  const EvalReport rep = cmc_map(q.embeddings, q.labels, g.embeddings, g.labels);

  std::ofstream csv(out_path(cfg, "eval_report.csv"));
  csv << "metric,value\n";
  for (std::size_t k = 0; k < rep.cmc.size(); ++k) csv << "rank" << k + 1 << ',' << full(rep.cmc[k]) << '\n';
  csv << "mAP," << full(rep.map) << "\nnum_query," << rep.num_query << "\nnum_gallery," << rep.num_gallery << '\n';

  std::ostringstream summary;
  summary << std::fixed << std::setprecision(2) << "composition " << to_string(cfg.backbone.attention.composition)
          << ": Rank-1 " << 100 * rep.rank1() << "%  Rank-5 " << 100 * rep.cmc[4] << "%  mAP " << 100 * rep.map
          << "%  (" << rep.num_query << " queries, " << rep.num_gallery << " gallery)\n";
  std::ofstream(out_path(cfg, "eval_summary.txt")) << summary.str();
  out << summary.str();
  return kExitOk;
}

int cmd_export_attn(const RunConfig& cfg, std::ostream& out) {
  const Backbone net(cfg.model());
  auto params = load_model(cfg, net);
  const auto data = make_data(cfg);
  const Grid map = spatial_attention_map(net, params, pick_image(cfg, data).image, cfg.block);
  const std::string stem = "attn_block" + std::to_string(cfg.block);
  write_csv_grid(out_path(cfg, stem + ".csv"), map);
  write_pgm(out_path(cfg, stem + ".pgm"), map);
  out << "wrote " << out_path(cfg, stem + ".csv").string() << " and " << out_path(cfg, stem + ".pgm").string() << " ("
      << map.width << "x" << map.height << ")\n";
  return kExitOk;
}

int cmd_export_relations(const RunConfig& cfg, std::ostream& out) {
  const Backbone net(cfg.model());
  auto params = load_model(cfg, net);
  const auto data = make_data(cfg);
  const auto maps = relation_maps(net, params, pick_image(cfg, data).image, cfg.block, cfg.targets, cfg.seed);
  const std::string b = std::to_string(cfg.block);
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
    const auto p = out_path(cfg, "relation_block" + b + "_target" + std::to_string(cfg.targets[i]) + ".csv");
    write_csv_grid(p, maps.targets[i]);
    out << "wrote " << p.string() << '\n';
  }
  const auto p = out_path(cfg, "snl_block" + b + ".csv");
  write_csv_grid(p, maps.snl_weights);
  out << "wrote " << p.string() << '\n';
  return kExitOk;
}

int cmd_param_count(const RunConfig& cfg, std::ostream& out) {
  const Backbone net(cfg.model());
  ParameterSet<float> ps = init_params<float>(net, cfg.seed);
  out << "module,composition,channels,height,width,analytic,enumerated\n";
  for (std::size_t i = 0; i < net.num_blocks(); ++i) {
    const auto& gm = net.geometry(i);
    const auto& att = net.attention(i);
    out << "block" << i << ".attention," << to_string(att.composition()) << ',' << gm.channels << ',' << gm.height
        << ',' << gm.width << ',' << att.param_count() << ','
        << ps.trainable_count("block" + std::to_string(i) + ".rga_") << '\n';
  }
  const std::int64_t analytic = net.param_count(), enumerated = ps.trainable_count();
  out << "model," << to_string(cfg.backbone.attention.composition) << ",,,," << analytic << ',' << enumerated << '\n';
  return analytic == enumerated ? kExitOk : kExitFailure;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  const auto rows = run_bench(cfg.bench_channels, cfg.bench_sides, cfg.bench_runs, cfg.backbone.attention, cfg.seed);
  std::ofstream csv(out_path(cfg, "bench.csv"));
  write_bench_csv(csv, rows);
  write_bench_csv(out, rows);
  return kExitOk;
}

struct Verb {
  const char* name;
  const char* help;
  int (*fn)(const RunConfig&, std::ostream&);
};

constexpr Verb kVerbs[] = {
    {"gradcheck", "finite-difference check of every module", cmd_gradcheck},
    {"train", "train the configured model and write a checkpoint and loss trace", cmd_train},
    {"eval", "evaluate a checkpoint with CMC and mAP", cmd_eval},
    {"export-attn", "write one spatial attention map as CSV and PGM", cmd_export_attn},
    {"export-relations", "write affinity rows for target positions and an SNL weight map", cmd_export_relations},
    {"param-count", "analytic and enumerated parameter counts", cmd_param_count},
    {"bench", "forward timings of the attention modules over a size sweep", cmd_bench},
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation-aware global attention toolkit"};
  app.require_subcommand(1);
  std::string config_file;
  std::vector<CLI::App*> subs;
  for (const auto& v : kVerbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("--config", config_file, "key=value config file");
    sub->allow_extras();
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    RunConfig cfg;
    try {
      if (!config_file.empty()) apply_config_file(cfg, config_file);
      for (const auto& arg : subs[i]->remaining()) {
        const auto eq = arg.find('=');
        if (!arg.starts_with("--") || eq == std::string::npos) {
          throw ConfigError("expected --key=value, got '" + arg + "'");
        }
        set_config_value(cfg, arg.substr(2, eq - 2), arg.substr(eq + 1));
      }
      cfg.validate();
    } catch (const ConfigError& e) {
      err << "usage error: " << e.what() << '\n';
      return kExitUsage;
    }
    out << "# command " << kVerbs[i].name << "\n# resolved config (seed=" << cfg.seed << ")\n" << to_text(cfg);
    try {
      return kVerbs[i].fn(cfg, out);
    } catch (const ConfigError& e) {
      err << "usage error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitFailure;
    }
  }
  return kExitUsage;
}

}  // namespace rga::cli
