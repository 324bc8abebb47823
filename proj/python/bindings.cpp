#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rga/attention.hpp"
#include "rga/backbone.hpp"
#include "rga/baselines.hpp"
#include "rga/commands.hpp"
#include "rga/dataset.hpp"
#include "rga/losses.hpp"
#include "rga/metrics.hpp"
#include "rga/run_config.hpp"
#include "rga/train.hpp"

namespace py = pybind11;
using namespace rga;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor<double>(s, std::vector<double>(a.data(), a.data() + a.size()));
}

template <class T>
py::array_t<T> to_array(const Tensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

AttentionConfig attention_config(std::int64_t s1, std::int64_t s2, const std::string& mode, bool use_relation,
                                 bool use_original) {
  AttentionConfig cfg;
  cfg.s1 = s1;
  cfg.s2 = s2;
  cfg.embedding_mode = parse_embedding_mode(mode);
  cfg.use_relation = use_relation;
  cfg.use_original = use_original;
  return cfg;
}

RunConfig run_config(const std::map<std::string, std::string>& values) {
  RunConfig cfg;
  for (const auto& [k, v] : values) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

/// Eval-mode attention map and affinity of a freshly initialised module.
template <class Module>
py::dict run_module(const Module& m, const Array& x, std::uint64_t seed) {
  ParameterSet<double> ps;
  m.init(ps, Rng(seed).split(Stream::kInit));
  Graph<double> g;
  g.set_recording(false);
  Context<double> ctx{g, ps, Mode::kEval};
  Var xv = g.constant(to_tensor(x));
  py::dict out;
  out["attention"] = to_array(g.value(m.attention(ctx, xv)));
  out["affinity"] = to_array(g.value(m.affinity(ctx, xv)));
  out["param_count"] = m.param_count();
  return out;
}

}  // namespace

PYBIND11_MODULE(_rga, m) {
  m.doc() = "Relation-aware global attention toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingIdentityError>(m, "MissingIdentityError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def(
      "gen_dataset",
      [](int num_ids, int per_id, std::uint64_t seed) {
        const Dataset d = gen_dataset(num_ids, per_id, seed);
        py::list out;
        for (const auto& s : d.samples) {
          py::array_t<std::uint8_t> mask({kImageHeight, kImageWidth});
          std::copy(s.mask.begin(), s.mask.end(), mask.mutable_data());
          out.append(py::dict(py::arg("image") = to_array(s.image), py::arg("id") = s.id,
                              py::arg("mask") = mask, py::arg("occluded") = s.occluded));
        }
        return out;
      },
      py::arg("num_ids"), py::arg("per_id"), py::arg("seed"));

  m.def(
      "cmc_map",
      [](const Array& query, const std::vector<int>& qids, const Array& gallery, const std::vector<int>& gids,
         int max_rank) {
        const EvalReport r = cmc_map(to_tensor(query), qids, to_tensor(gallery), gids, max_rank);
        return py::dict(py::arg("cmc") = r.cmc, py::arg("map") = r.map, py::arg("rank1") = r.rank1(),
                        py::arg("num_query") = r.num_query, py::arg("num_gallery") = r.num_gallery);
      },
      py::arg("query"), py::arg("query_ids"), py::arg("gallery"), py::arg("gallery_ids"), py::arg("max_rank") = 10);

  m.def(
      "id_loss",
      [](const Array& logits, const std::vector<int>& labels, double epsilon) {
        Graph<double> g;
        return g.value(id_loss(g, g.constant(to_tensor(logits)), labels, epsilon)).item();
      },
      py::arg("logits"), py::arg("labels"), py::arg("epsilon") = 0.1);

  m.def(
      "triplet_batch_hard",
      [](const Array& embeddings, const std::vector<int>& labels, double margin) {
        Graph<double> g;
        return g.value(triplet_batch_hard(g, g.constant(to_tensor(embeddings)), labels, margin)).item();
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.3);

  m.def(
      "rga_spatial",
      [](const Array& x, std::int64_t s1, std::int64_t s2, const std::string& mode, bool use_relation,
         bool use_original, std::uint64_t seed) {
        if (x.ndim() != 4) throw ShapeError("rga_spatial: expected (B,C,H,W)");
        const RgaSpatial s("rga_s", x.shape(1), x.shape(2), x.shape(3),
                           attention_config(s1, s2, mode, use_relation, use_original));
        return run_module(s, x, seed);
      },
      py::arg("x"), py::arg("s1") = 8, py::arg("s2") = 8, py::arg("embedding_mode") = "asymmetric",
      py::arg("use_relation") = true, py::arg("use_original") = true, py::arg("seed") = 1);

  m.def(
      "rga_channel",
      [](const Array& x, std::int64_t s1, std::int64_t s2, const std::string& mode, bool use_relation,
         bool use_original, std::uint64_t seed) {
        if (x.ndim() != 4) throw ShapeError("rga_channel: expected (B,C,H,W)");
        const RgaChannel c("rga_c", x.shape(1), x.shape(2), x.shape(3),
                           attention_config(s1, s2, mode, use_relation, use_original));
        return run_module(c, x, seed);
      },
      py::arg("x"), py::arg("s1") = 8, py::arg("s2") = 8, py::arg("embedding_mode") = "asymmetric",
      py::arg("use_relation") = true, py::arg("use_original") = true, py::arg("seed") = 1);

  m.def(
      "snl_context",
      [](const Array& x, std::uint64_t seed) {
        if (x.ndim() != 4) throw ShapeError("snl_context: expected (B,C,H,W)");
        const SnlBlock snl("snl", x.shape(1), x.shape(2), x.shape(3));
        ParameterSet<double> ps;
        snl.init(ps, Rng(seed).split(Stream::kInit));
        Graph<double> g;
        Context<double> ctx{g, ps, Mode::kEval};
        const auto out = snl.forward(ctx, g.constant(to_tensor(x)));
        return py::dict(py::arg("out") = to_array(g.value(out.out)), py::arg("weights") = to_array(g.value(out.weights)),
                        py::arg("context") = to_array(g.value(out.context)));
      },
      py::arg("x"), py::arg("seed") = 1);

  m.def(
      "param_count",
      [](const std::map<std::string, std::string>& config) {
        const RunConfig cfg = run_config(config);
        const Backbone net(cfg.model());
        return py::make_tuple(net.param_count(), init_params<float>(net, cfg.seed).trainable_count());
      },
      py::arg("config") = std::map<std::string, std::string>{},
      "Analytic and enumerated trainable parameter counts of the configured model.");

  m.def(
      "resolved_config",
      [](const std::map<std::string, std::string>& config) { return to_text(run_config(config)); },
      py::arg("config") = std::map<std::string, std::string>{});

  m.def("config_keys", &config_keys);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"rga"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI invocation in-process; returns (exit_code, stdout, stderr).");
}
