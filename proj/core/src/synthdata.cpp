#include "lim/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "lim/confidence.hpp"
#include "lim/error.hpp"
#include "lim/rng.hpp"

namespace lim {
namespace {

constexpr std::size_t kGibberishPoolSize = 64;
constexpr std::size_t kGibberishSearchBudget = 100000;

void validate_spec(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw DomainError("synthetic data needs at least 2 classes");
  if (spec.clips_per_class < 1) throw DomainError("clips_per_class must be positive");
  if (spec.frames_per_clip < 1) throw DomainError("frames_per_clip must be positive");
  if (spec.frame_w < 3 || spec.frame_h < 3) {
    throw DomainError("synthetic frames must be at least 3x3 for sharpness scoring");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw DomainError("noise_sigma must be finite and non-negative");
  }
  if (!(spec.corruption_rate >= 0.0 && spec.corruption_rate <= 1.0)) {
    throw DomainError("corruption_rate must lie within [0, 1]");
  }
  if (!(spec.window_s > 0.0) || !std::isfinite(spec.window_s)) {
    throw DomainError("window_s must be positive");
  }
  if (spec.vocab < 3) throw DomainError("vocabulary must be at least 3");
}

std::set<int> clean_token_ids(const SyntheticSpec& spec) {
  std::set<int> ids;
  for (int k = 0; k < spec.classes; ++k) {
    const TokenSequence tokens = tokenize(synth_class_caption(k), spec.vocab);
    for (int id : tokens.content()) ids.insert(id);
  }
  return ids;
}

std::uint8_t quantize_level(double value) {
  const long long rounded = std::llround(value);
  return static_cast<std::uint8_t>(std::clamp<long long>(rounded, 0, 255));
}

}  // namespace

std::string synth_class_name(int k) { return "stage" + std::to_string(k); }

std::string synth_class_caption(int k) {
  const std::string n = std::to_string(k);
  return "the clip shows stage" + n + " tool" + n + "a tool" + n + "b site" + n;
}

std::vector<std::string> gibberish_vocabulary(const SyntheticSpec& spec) {
  validate_spec(spec);
  const std::set<int> reserved = clean_token_ids(spec);
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < kGibberishSearchBudget && pool.size() < kGibberishPoolSize; ++i) {
    std::string word = "zx" + std::to_string(i);
    if (reserved.count(hash_word(word, spec.vocab)) == 0) pool.push_back(std::move(word));
  }
  if (pool.empty()) {
    throw DomainError("vocabulary too crowded to build a disjoint gibberish pool");
  }
  return pool;
}

SynthDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                        std::uint64_t seed) {
  validate_spec(spec);
  const std::size_t pixels =
      static_cast<std::size_t>(spec.frame_w) * static_cast<std::size_t>(spec.frame_h);
  const std::vector<std::string> gibberish = gibberish_vocabulary(spec);
  const Rng root(seed);

  // Latent class prototypes: mid-range pixels so jitter rarely clips.
  Rng proto_rng = root.fork(0);
  std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(spec.classes));
  for (auto& proto : prototypes) {
    proto.resize(pixels);
    for (double& level : proto) {
      level = 40.0 + static_cast<double>(proto_rng.integer(176));
    }
  }

  SynthDataset dataset;
  for (int k = 0; k < spec.classes; ++k) {
    dataset.labels.classes.push_back(synth_class_name(k));
    dataset.prompts.emplace_back(synth_class_name(k),
                                 std::vector<std::string>{synth_class_caption(k)});
  }

  const double fps = static_cast<double>(spec.frames_per_clip) / spec.window_s;
  for (int k = 0; k < spec.classes; ++k) {
    for (int i = 0; i < spec.clips_per_class; ++i) {
      const std::uint64_t ordinal =
          static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(spec.clips_per_class) +
          static_cast<std::uint64_t>(i);
      Rng rng = root.fork(1 + ordinal);

      SynthClip clip;
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_c%05d", i);
      clip.clip_id = synth_class_name(k) + suffix;
      clip.label = k;
      clip.video.fps = fps;
      for (int t = 0; t < spec.frames_per_clip; ++t) {
        Frame frame(static_cast<std::size_t>(spec.frame_w),
                    static_cast<std::size_t>(spec.frame_h), 1);
        for (std::size_t p = 0; p < pixels; ++p) {
          frame.pixels[p] =
              quantize_level(prototypes[static_cast<std::size_t>(k)][p] +
                             rng.normal(0.0, spec.noise_sigma));
        }
        clip.video.frames.push_back(std::move(frame));
      }

      const std::string clean = synth_class_caption(k);
      clip.corrupted = rng.bernoulli(spec.corruption_rate);
      std::string caption = clean;
      if (clip.corrupted) {
        const std::size_t words = split_words(clean).size();
        std::string scrambled;
        for (std::size_t w = 0; w < words; ++w) {
          if (w > 0) scrambled += ' ';
          scrambled += gibberish[rng.integer(gibberish.size())];
        }
        caption = scrambled;
        ++dataset.corrupted_count;
      }

      ManifestRecord record;
      record.clip_id = clip.clip_id;
      record.source_id = synth_class_name(k);
      record.start_s = 0.0;
      record.end_s = spec.window_s;
      record.sharpness = clip_sharpness(clip.video);
      record.caption = caption;
      record.confidence = 1.0;

      dataset.labels.labels.emplace(clip.clip_id, k);
      dataset.corrupted.emplace(clip.clip_id, clip.corrupted);
      dataset.clean_captions.push_back(clean);
      dataset.manifest.push_back(std::move(record));
      dataset.clips.push_back(std::move(clip));
    }
  }
  return dataset;
}

void write_synthetic_dataset(const SynthDataset& dataset, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "clips");
  for (const SynthClip& clip : dataset.clips) {
    write_limf_file((root / "clips" / (clip.clip_id + ".limf")).string(), clip.video);
  }
  write_manifest_file((root / "manifest.jsonl").string(), dataset.manifest);
  write_labels_file((root / "labels.json").string(), dataset.labels);
  write_prompt_file((root / "prompts.json").string(), dataset.prompts);
  write_corruption_file((root / "corruption.json").string(), dataset.corrupted);

  std::ofstream corpus(root / "clean_corpus.txt", std::ios::binary | std::ios::trunc);
  if (!corpus) throw IoError("cannot write clean corpus under: " + out_dir);
  for (const std::string& line : dataset.clean_captions) corpus << line << "\n";
  if (!corpus) throw IoError("failed while writing clean corpus under: " + out_dir);
}

void write_labels_file(const std::string& path, const LabelsFile& labels) {
  nlohmann::json j;
  j["classes"] = labels.classes;
  nlohmann::json map = nlohmann::json::object();
  for (const auto& [clip_id, label] : labels.labels) map[clip_id] = label;
  j["labels"] = map;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write labels file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed while writing labels file: " + path);
}

LabelsFile read_labels_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read labels file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  const nlohmann::json j = nlohmann::json::parse(text.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("classes") ||
      !j.contains("labels") || j.size() != 2) {
    throw ContractError("labels file must be {\"classes\": [...], \"labels\": {...}}: " + path);
  }
  LabelsFile labels;
  if (!j["classes"].is_array() || j["classes"].size() < 2) {
    throw ContractError("labels file needs at least 2 classes: " + path);
  }
  std::set<std::string> seen;
  for (const auto& name : j["classes"]) {
    if (!name.is_string() || name.get<std::string>().empty()) {
      throw ContractError("class names must be non-empty strings: " + path);
    }
    if (!seen.insert(name.get<std::string>()).second) {
      throw ContractError("duplicate class name in labels file: " + path);
    }
    labels.classes.push_back(name.get<std::string>());
  }
  if (!j["labels"].is_object()) {
    throw ContractError("labels must map clip ids to class indices: " + path);
  }
  const int num_classes = static_cast<int>(labels.classes.size());
  for (const auto& item : j["labels"].items()) {
    if (!item.value().is_number_integer()) {
      throw ContractError("label for " + item.key() + " must be an integer: " + path);
    }
    const int label = item.value().get<int>();
    if (label < 0 || label >= num_classes) {
      throw ContractError("label for " + item.key() + " is out of range: " + path);
    }
    labels.labels.emplace(item.key(), label);
  }
  return labels;
}

void write_corruption_file(const std::string& path,
                           const std::map<std::string, bool>& corrupted) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [clip_id, flag] : corrupted) j[clip_id] = flag;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corruption file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed while writing corruption file: " + path);
}

std::map<std::string, bool> read_corruption_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corruption file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  const nlohmann::json j = nlohmann::json::parse(text.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ContractError("corruption file must be a JSON object: " + path);
  }
  std::map<std::string, bool> corrupted;
  for (const auto& item : j.items()) {
    if (!item.value().is_boolean()) {
      throw ContractError("corruption flag for " + item.key() + " must be a boolean: " + path);
    }
    corrupted.emplace(item.key(), item.value().get<bool>());
  }
  return corrupted;
}

}  // namespace lim
