#include "lim/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lim/confidence.hpp"
#include "lim/error.hpp"

namespace lim {
namespace {

using nlohmann::json;

[[noreturn]] void fail_key(const std::string& key, const std::string& what) {
  throw ConfigError("config key " + key + ": " + what);
}

// --- typed conversions --------------------------------------------------------

std::uint64_t u64_from_json(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  fail_key(key, "expected a non-negative integer");
}

int int_from_json(const json& v, const std::string& key) {
  if (!v.is_number_integer()) fail_key(key, "expected an integer");
  const auto wide = v.get<std::int64_t>();
  if (wide < std::numeric_limits<int>::min() ||
      wide > std::numeric_limits<int>::max()) {
    fail_key(key, "integer out of range");
  }
  return static_cast<int>(wide);
}

double double_from_json(const json& v, const std::string& key) {
  if (!v.is_number()) fail_key(key, "expected a number");
  return v.get<double>();
}

bool bool_from_json(const json& v, const std::string& key) {
  if (!v.is_boolean()) fail_key(key, "expected true or false");
  return v.get<bool>();
}

std::string string_from_json(const json& v, const std::string& key) {
  if (!v.is_string()) fail_key(key, "expected a string");
  return v.get<std::string>();
}

std::uint64_t u64_from_text(const std::string& s, const std::string& key) {
  if (s.empty() || s.find('-') != std::string::npos) {
    fail_key(key, "expected a non-negative integer, got \"" + s + "\"");
  }
  try {
    std::size_t used = 0;
    const std::uint64_t value = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return value;
  } catch (const std::exception&) {
    fail_key(key, "expected a non-negative integer, got \"" + s + "\"");
  }
}

int int_from_text(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long value = std::stoll(s, &used);
    if (used != s.size() || value < std::numeric_limits<int>::min() ||
        value > std::numeric_limits<int>::max()) {
      throw std::invalid_argument(s);
    }
    return static_cast<int>(value);
  } catch (const std::exception&) {
    fail_key(key, "expected an integer, got \"" + s + "\"");
  }
}

double double_from_text(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double value = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return value;
  } catch (const std::exception&) {
    fail_key(key, "expected a number, got \"" + s + "\"");
  }
}

bool bool_from_text(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail_key(key, "expected true or false, got \"" + s + "\"");
}

// --- key table ----------------------------------------------------------------

struct Entry {
  std::string path;
  std::function<void(RunConfig&, const json&)> set_json;
  std::function<json(const RunConfig&)> get_json;
  std::function<void(RunConfig&, const std::string&)> set_text;
};

template <typename Accessor>
Entry entry_for(std::string path, Accessor member) {
  using Field = std::remove_reference_t<decltype(member(std::declval<RunConfig&>()))>;
  Entry e;
  e.path = path;
  if constexpr (std::is_same_v<Field, std::uint64_t>) {
    e.set_json = [member, path](RunConfig& c, const json& v) { member(c) = u64_from_json(v, path); };
    e.set_text = [member, path](RunConfig& c, const std::string& s) { member(c) = u64_from_text(s, path); };
  } else if constexpr (std::is_same_v<Field, int>) {
    e.set_json = [member, path](RunConfig& c, const json& v) { member(c) = int_from_json(v, path); };
    e.set_text = [member, path](RunConfig& c, const std::string& s) { member(c) = int_from_text(s, path); };
  } else if constexpr (std::is_same_v<Field, double>) {
    e.set_json = [member, path](RunConfig& c, const json& v) { member(c) = double_from_json(v, path); };
    e.set_text = [member, path](RunConfig& c, const std::string& s) { member(c) = double_from_text(s, path); };
  } else if constexpr (std::is_same_v<Field, bool>) {
    e.set_json = [member, path](RunConfig& c, const json& v) { member(c) = bool_from_json(v, path); };
    e.set_text = [member, path](RunConfig& c, const std::string& s) { member(c) = bool_from_text(s, path); };
  } else {
    static_assert(std::is_same_v<Field, std::string>);
    e.set_json = [member, path](RunConfig& c, const json& v) { member(c) = string_from_json(v, path); };
    e.set_text = [member, path](RunConfig& c, const std::string& s) { member(c) = s; };
  }
  e.get_json = [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); };
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    auto add = [&t](const char* path, auto member) {
      t.push_back(entry_for<decltype(member)>(path, member));
    };
    add("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    add("temporal_window", [](RunConfig& c) -> int& { return c.temporal_window; });
    add("model.vision_width", [](RunConfig& c) -> int& { return c.model.vision_width; });
    add("model.text_width", [](RunConfig& c) -> int& { return c.model.text_width; });
    add("model.proj_dim", [](RunConfig& c) -> int& { return c.model.proj_dim; });
    add("model.depth", [](RunConfig& c) -> int& { return c.model.depth; });
    add("model.frame_width", [](RunConfig& c) -> int& { return c.model.frame_width; });
    add("model.patch_count", [](RunConfig& c) -> int& { return c.model.patch_count; });
    add("model.vocab", [](RunConfig& c) -> int& { return c.model.vocab; });
    add("model.init_tau", [](RunConfig& c) -> double& { return c.model.init_tau; });
    add("lora.rank", [](RunConfig& c) -> int& { return c.lora.rank; });
    add("lora.alpha", [](RunConfig& c) -> double& { return c.lora.alpha; });
    add("optim.base_lr", [](RunConfig& c) -> double& { return c.optim.base_lr; });
    add("optim.head_lr_multiplier", [](RunConfig& c) -> double& { return c.optim.head_lr_multiplier; });
    add("optim.epochs", [](RunConfig& c) -> int& { return c.optim.epochs; });
    add("optim.batch_size", [](RunConfig& c) -> int& { return c.optim.batch_size; });
    add("optim.weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; });
    add("confidence.enabled", [](RunConfig& c) -> bool& { return c.confidence.enabled; });
    add("confidence.rescale", [](RunConfig& c) -> std::string& { return c.confidence.rescale; });
    add("confidence.floor", [](RunConfig& c) -> double& { return c.confidence.floor; });
    add("pipeline.window_s", [](RunConfig& c) -> double& { return c.pipeline.window_s; });
    add("pipeline.stride_s", [](RunConfig& c) -> double& { return c.pipeline.stride_s; });
    add("pipeline.min_shot_s", [](RunConfig& c) -> double& { return c.pipeline.min_shot_s; });
    add("pipeline.sharpness_threshold", [](RunConfig& c) -> double& { return c.pipeline.sharpness_threshold; });
    add("pipeline.target_w", [](RunConfig& c) -> int& { return c.pipeline.target_w; });
    add("pipeline.target_h", [](RunConfig& c) -> int& { return c.pipeline.target_h; });
    add("probe.lr", [](RunConfig& c) -> double& { return c.probe.lr; });
    add("probe.epochs", [](RunConfig& c) -> int& { return c.probe.epochs; });
    add("probe.train_fraction", [](RunConfig& c) -> double& { return c.probe.train_fraction; });
    add("synth.classes", [](RunConfig& c) -> int& { return c.synth.classes; });
    add("synth.clips_per_class", [](RunConfig& c) -> int& { return c.synth.clips_per_class; });
    add("synth.noise_sigma", [](RunConfig& c) -> double& { return c.synth.noise_sigma; });
    add("synth.corruption_rate", [](RunConfig& c) -> double& { return c.synth.corruption_rate; });
    add("synth.frame_w", [](RunConfig& c) -> int& { return c.synth.frame_w; });
    add("synth.frame_h", [](RunConfig& c) -> int& { return c.synth.frame_h; });
    add("paths.data_dir", [](RunConfig& c) -> std::string& { return c.paths.data_dir; });
    add("paths.sources_dir", [](RunConfig& c) -> std::string& { return c.paths.sources_dir; });
    add("paths.model_prefix", [](RunConfig& c) -> std::string& { return c.paths.model_prefix; });
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  static const std::unordered_map<std::string, const Entry*> index = [] {
    std::unordered_map<std::string, const Entry*> m;
    for (const Entry& e : entries()) m.emplace(e.path, &e);
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key: " + key);
  return *it->second;
}

void assign_leaves(RunConfig& config, const json& node, const std::string& prefix) {
  for (const auto& item : node.items()) {
    const std::string path = prefix.empty() ? item.key() : prefix + "." + item.key();
    if (item.value().is_object()) {
      assign_leaves(config, item.value(), path);
    } else {
      find_entry(path).set_json(config, item.value());
    }
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  keys.reserve(entries().size());
  for (const Entry& e : entries()) keys.push_back(e.path);
  return keys;
}

std::string config_to_json(const RunConfig& config) {
  json root = json::object();
  for (const Entry& e : entries()) {
    std::string pointer = "/" + e.path;
    for (char& c : pointer) {
      if (c == '.') c = '/';
    }
    root[json::json_pointer(pointer)] = e.get_json(config);
  }
  return root.dump(2) + "\n";
}

RunConfig parse_config_json(const std::string& text) {
  const json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!parsed.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig config;
  assign_leaves(config, parsed, "");
  validate_config(config);
  return config;
}

RunConfig read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_json(text.str());
}

void write_config_file(const std::string& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config file: " + path);
  out << config_to_json(config);
  if (!out) throw IoError("failed while writing config file: " + path);
}

void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value) {
  find_entry(key).set_text(config, value);
}

std::string lookup_value(const RunConfig& config, const std::string& key) {
  const json value = find_entry(key).get_json(config);
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

void validate_config(const RunConfig& config) {
  const auto check = [](bool ok, const char* key, const char* what) {
    if (!ok) fail_key(key, what);
  };
  const RunConfig::Model& m = config.model;
  check(m.vision_width >= 2, "model.vision_width", "must be at least 2");
  check(m.text_width >= 2, "model.text_width", "must be at least 2");
  check(m.proj_dim >= 2, "model.proj_dim", "must be at least 2");
  check(m.depth >= 1, "model.depth", "must be at least 1");
  check(m.frame_width >= 1, "model.frame_width", "must be positive");
  check(m.patch_count >= 1, "model.patch_count", "must be positive");
  check(m.patch_count <= m.frame_width && m.frame_width % m.patch_count == 0,
        "model.patch_count", "must divide model.frame_width");
  check(m.vocab >= 3, "model.vocab", "must be at least 3");
  check(m.init_tau >= kTauMin && m.init_tau <= kTauMax, "model.init_tau",
        "must lie within [0.01, 1]");

  check(config.lora.rank >= 1, "lora.rank", "must be at least 1");
  check(std::isfinite(config.lora.alpha) && config.lora.alpha > 0.0,
        "lora.alpha", "must be positive");

  const RunConfig::Optim& o = config.optim;
  check(std::isfinite(o.base_lr) && o.base_lr >= 0.0, "optim.base_lr",
        "must be non-negative");
  check(std::isfinite(o.head_lr_multiplier) && o.head_lr_multiplier > 0.0,
        "optim.head_lr_multiplier", "must be positive");
  check(o.epochs >= 1, "optim.epochs", "must be at least 1");
  check(o.batch_size >= 2, "optim.batch_size", "must be at least 2");
  check(std::isfinite(o.weight_decay) && o.weight_decay >= 0.0,
        "optim.weight_decay", "must be non-negative");

  check(config.temporal_window >= 1, "temporal_window", "must be at least 1");

  const RunConfig::Confidence& conf = config.confidence;
  check(conf.rescale == "none" || conf.rescale == "batch-mean",
        "confidence.rescale", "must be \"none\" or \"batch-mean\"");
  check(std::isfinite(conf.floor) && conf.floor > 0.0 && conf.floor <= 1.0,
        "confidence.floor", "must lie within (0, 1]");

  const RunConfig::Pipeline& p = config.pipeline;
  check(std::isfinite(p.window_s) && p.window_s > 0.0, "pipeline.window_s",
        "must be positive");
  check(std::isfinite(p.stride_s) && p.stride_s > 0.0, "pipeline.stride_s",
        "must be positive");
  check(std::isfinite(p.min_shot_s) && p.min_shot_s >= p.window_s,
        "pipeline.min_shot_s", "must be at least pipeline.window_s");
  check(std::isfinite(p.sharpness_threshold) && p.sharpness_threshold >= 0.0,
        "pipeline.sharpness_threshold", "must be non-negative");
  check(p.target_w >= 3, "pipeline.target_w", "must be at least 3");
  check(p.target_h >= 3, "pipeline.target_h", "must be at least 3");

  const RunConfig::Probe& pr = config.probe;
  check(std::isfinite(pr.lr) && pr.lr >= 0.0, "probe.lr", "must be non-negative");
  check(pr.epochs >= 0, "probe.epochs", "must be non-negative");
  check(std::isfinite(pr.train_fraction) && pr.train_fraction > 0.0 &&
            pr.train_fraction < 1.0,
        "probe.train_fraction", "must lie strictly within (0, 1)");

  const RunConfig::Synth& s = config.synth;
  check(s.classes >= 2, "synth.classes", "must be at least 2");
  check(s.clips_per_class >= 1, "synth.clips_per_class", "must be positive");
  check(std::isfinite(s.noise_sigma) && s.noise_sigma >= 0.0,
        "synth.noise_sigma", "must be non-negative");
  check(std::isfinite(s.corruption_rate) && s.corruption_rate >= 0.0 &&
            s.corruption_rate <= 1.0,
        "synth.corruption_rate", "must lie within [0, 1]");
  check(s.frame_w >= 3, "synth.frame_w", "must be at least 3");
  check(s.frame_h >= 3, "synth.frame_h", "must be at least 3");
  check(s.frame_w * s.frame_h == m.frame_width, "synth.frame_w",
        "synth.frame_w * synth.frame_h must equal model.frame_width");
}

AlignmentConfig alignment_config(const RunConfig& config) {
  AlignmentConfig a;
  a.vision_width = config.model.vision_width;
  a.text_width = config.model.text_width;
  a.proj_dim = config.model.proj_dim;
  a.depth = config.model.depth;
  a.lora_rank = config.lora.rank;
  a.lora_alpha = config.lora.alpha;
  a.frame_width = config.model.frame_width;
  a.patch_count = config.model.patch_count;
  a.vocab = config.model.vocab;
  a.init_tau = config.model.init_tau;
  return a;
}

AdamWConfig adamw_config(const RunConfig& config) {
  AdamWConfig a;
  a.base_lr = config.optim.base_lr;
  a.head_lr_multiplier = config.optim.head_lr_multiplier;
  a.weight_decay = config.optim.weight_decay;
  return a;
}

TrainLoopOptions train_loop_options(const RunConfig& config) {
  TrainLoopOptions options;
  options.epochs = config.optim.epochs;
  options.batch_size = config.optim.batch_size;
  options.optim = adamw_config(config);
  options.use_confidence = config.confidence.enabled;
  options.rescale = parse_rescale_mode(config.confidence.rescale);
  options.shuffle_seed = config.seed;
  return options;
}

PipelineConfig pipeline_config(const RunConfig& config) {
  PipelineConfig p;
  p.target_w = config.pipeline.target_w;
  p.target_h = config.pipeline.target_h;
  p.window_s = config.pipeline.window_s;
  p.stride_s = config.pipeline.stride_s;
  p.min_shot_s = config.pipeline.min_shot_s;
  p.sharpness_threshold = config.pipeline.sharpness_threshold;
  return p;
}

}  // namespace lim
