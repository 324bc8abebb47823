#include "rga/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace rga {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const std::string& expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "': expected " +
                    expected);
}

template <class I>
I parse_int(std::string_view key, std::string_view v) {
  I out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto c = v.find(',');
    out.push_back(trim(v.substr(0, c)));
    if (c == std::string_view::npos) break;
    v.remove_prefix(c + 1);
  }
  return out;
}

std::vector<std::int64_t> parse_int_list(std::string_view key, std::string_view v) {
  std::vector<std::int64_t> out;
  for (auto item : split_list(v)) out.push_back(parse_int<std::int64_t>(key, item));
  if (out.empty()) bad_value(key, v, "a comma-separated list of integers");
  return out;
}

std::vector<bool> parse_bool_list(std::string_view key, std::string_view v) {
  std::vector<bool> out;
  for (auto item : split_list(v)) out.push_back(parse_bool(key, item));
  if (out.empty()) bad_value(key, v, "a comma-separated list of booleans");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class V>
std::string fmt_list(const std::vector<V>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<V, bool>) {
      out += fmt(static_cast<bool>(xs[i]));
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
};

#define RGA_INT_KEY(name, field)                                                                              \
  Key {                                                                                                       \
    name, [](const RunConfig& c) { return std::to_string(c.field); },                                         \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_int<decltype(c.field)>(k, v); } \
  }
#define RGA_DOUBLE_KEY(name, field)                                                                      \
  Key {                                                                                                  \
    name, [](const RunConfig& c) { return fmt(c.field); },                                               \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_double(k, v); }      \
  }
#define RGA_BOOL_KEY(name, field)                                                                        \
  Key {                                                                                                  \
    name, [](const RunConfig& c) { return fmt(c.field); },                                               \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_bool(k, v); }        \
  }
#define RGA_STRING_KEY(name, field)                                                                      \
  Key {                                                                                                  \
    name, [](const RunConfig& c) { return c.field; },                                                    \
        [](RunConfig& c, std::string_view, std::string_view v) { c.field = std::string(v); }            \
  }
#define RGA_INT_LIST_KEY(name, field)                                                                    \
  Key {                                                                                                  \
    name, [](const RunConfig& c) { return fmt_list(c.field); },                                          \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_int_list(k, v); }    \
  }
#define RGA_BOOL_LIST_KEY(name, field)                                                                   \
  Key {                                                                                                  \
    name, [](const RunConfig& c) { return fmt_list(c.field); },                                          \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_bool_list(k, v); }   \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      RGA_INT_KEY("seed", seed),
      Key{"composition", [](const RunConfig& c) { return to_string(c.backbone.attention.composition); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              c.backbone.attention.composition = parse_composition(v);
            } catch (const std::invalid_argument&) {
              bad_value(k, v, "baseline, S, C, SC, CS or S-parallel-C");
            }
          }},
      Key{"embedding_mode", [](const RunConfig& c) { return to_string(c.backbone.attention.embedding_mode); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              c.backbone.attention.embedding_mode = parse_embedding_mode(v);
            } catch (const std::invalid_argument&) {
              bad_value(k, v, "asymmetric, symmetric or none");
            }
          }},
      RGA_INT_KEY("s1", backbone.attention.s1),
      RGA_INT_KEY("s2", backbone.attention.s2),
      RGA_BOOL_KEY("use_relation", backbone.attention.use_relation),
      RGA_BOOL_KEY("use_original", backbone.attention.use_original),
      RGA_BOOL_KEY("factored_relation", backbone.attention.factored_relation),
      RGA_INT_LIST_KEY("widths", backbone.widths),
      RGA_BOOL_LIST_KEY("downsample", backbone.downsample),
      RGA_BOOL_LIST_KEY("insert", backbone.insert),
      RGA_INT_KEY("embed_dim", backbone.embed_dim),
      RGA_INT_KEY("num_ids", num_ids),
      RGA_INT_KEY("per_id", per_id),
      RGA_INT_KEY("eval_ids", eval_ids),
      RGA_INT_KEY("eval_per_id", eval_per_id),
      RGA_INT_KEY("query_per_id", query_per_id),
      RGA_INT_KEY("epochs", train.epochs),
      RGA_DOUBLE_KEY("lr", train.lr),
      RGA_DOUBLE_KEY("weight_decay", train.weight_decay),
      RGA_DOUBLE_KEY("beta1", train.beta1),
      RGA_DOUBLE_KEY("beta2", train.beta2),
      RGA_DOUBLE_KEY("adam_eps", train.adam_eps),
      RGA_INT_KEY("ids_per_batch", train.ids_per_batch),
      RGA_INT_KEY("instances_per_id", train.instances_per_id),
      RGA_DOUBLE_KEY("label_smoothing", train.label_smoothing),
      RGA_DOUBLE_KEY("margin", train.margin),
      RGA_BOOL_KEY("flip", train.flip),
      RGA_STRING_KEY("checkpoint", checkpoint),
      RGA_STRING_KEY("out_dir", out_dir),
      RGA_INT_KEY("block", block),
      RGA_INT_KEY("image", image),
      RGA_INT_LIST_KEY("targets", targets),
      RGA_INT_LIST_KEY("bench_channels", bench_channels),
      RGA_INT_LIST_KEY("bench_sides", bench_sides),
      RGA_INT_KEY("bench_runs", bench_runs),
      RGA_INT_KEY("gradcheck_elements", gradcheck_elements),
      RGA_DOUBLE_KEY("gradcheck_corrupt", gradcheck_corrupt),
  };
  return table;
}

}  // namespace

BackboneConfig RunConfig::model() const {
  BackboneConfig b = backbone;
  b.num_classes = num_ids;
  return b;
}

void RunConfig::validate() const {
  try {
    model().validate();
    train.validate();
    const Backbone net(model());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (num_ids < 2 || per_id < 2) throw ConfigError("num_ids and per_id must be at least 2");
  if (eval_ids < 2 || eval_per_id < 2) throw ConfigError("eval_ids and eval_per_id must be at least 2");
  if (query_per_id < 1 || query_per_id >= eval_per_id) {
    throw ConfigError("query_per_id must be in [1, eval_per_id)");
  }
  if (block < 0 || block >= static_cast<int>(backbone.widths.size())) {
    throw ConfigError("block " + std::to_string(block) + " out of range");
  }
  if (image < 0) throw ConfigError("image index must be nonnegative");
  if (bench_runs < 5) throw ConfigError("bench_runs must be at least 5");
  for (auto c : bench_channels) {
    if (c < 8) throw ConfigError("bench_channels entries must be at least 8");
  }
  for (auto s : bench_sides) {
    if (s < 1) throw ConfigError("bench_sides entries must be positive");
  }
  if (gradcheck_corrupt <= 0) throw ConfigError("gradcheck_corrupt must be positive");
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  apply_config_text(cfg, ss.str());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + "=" + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

ExperimentData make_data(const RunConfig& cfg) {
  ExperimentData d;
  d.train = gen_dataset(cfg.num_ids, cfg.per_id, cfg.seed);
  const std::uint64_t eval_seed = Rng(cfg.seed).split(Stream::kEvalData).next_u64();
  d.eval = gen_dataset(cfg.eval_ids, cfg.eval_per_id, eval_seed);
  for (std::size_t i = 0; i < d.eval.samples.size(); ++i) {
    const bool is_query = static_cast<int>(i % static_cast<std::size_t>(cfg.eval_per_id)) < cfg.query_per_id;
    (is_query ? d.query : d.gallery).push_back(i);
  }
  return d;
}

}  // namespace rga
