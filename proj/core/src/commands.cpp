#include "lim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "lim/confidence.hpp"
#include "lim/error.hpp"
#include "lim/rng.hpp"
#include "lim/tape.hpp"

namespace lim {
namespace fs = std::filesystem;

namespace {

void require_data_dir(const RunConfig& config) {
  if (config.paths.data_dir.empty()) {
    throw ConfigError("config key paths.data_dir: must name a dataset directory");
  }
}

AlignmentModel load_model_or_fresh(const RunConfig& config) {
  if (config.paths.model_prefix.empty()) {
    return make_alignment_model(alignment_config(config), config.seed);
  }
  return load_model(config.paths.model_prefix);
}

std::vector<SourceVideo> load_sources(const std::string& sources_dir) {
  const fs::path root(sources_dir);
  const fs::path index = root / "sources.json";
  std::ifstream in(index, std::ios::binary);
  if (!in) throw IoError("cannot read source index: " + index.string());
  std::ostringstream text;
  text << in.rdbuf();
  const nlohmann::json j = nlohmann::json::parse(text.str(), nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw ContractError("source index must be a JSON array: " + index.string());
  }

  std::vector<SourceVideo> sources;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("source_id") || !item.contains("file") ||
        !item.contains("title")) {
      throw ContractError("each source needs source_id, file, and title: " +
                          index.string());
    }
    for (const auto& field : item.items()) {
      if (field.key() != "source_id" && field.key() != "file" &&
          field.key() != "title" && field.key() != "surgery_type") {
        throw ContractError("unknown source field \"" + field.key() +
                            "\": " + index.string());
      }
      if (!field.value().is_string() || field.value().get<std::string>().empty()) {
        throw ContractError("source field \"" + field.key() +
                            "\" must be a non-empty string: " + index.string());
      }
    }
    SourceVideo source;
    source.source_id = item["source_id"].get<std::string>();
    source.metadata.title = item["title"].get<std::string>();
    if (item.contains("surgery_type")) {
      source.metadata.surgery_type = item["surgery_type"].get<std::string>();
    }
    source.video = read_limf_file((root / item["file"].get<std::string>()).string());
    sources.push_back(std::move(source));
  }
  return sources;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path.string());
  for (const std::string& line : lines) out << line << "\n";
  if (!out) throw IoError("failed while writing: " + path.string());
}

std::vector<Tensor> snapshot_params(AlignmentModel& model) {
  std::vector<Tensor> params;
  for (const NamedTensor& p : trainable_params(model)) params.push_back(*p.tensor);
  return params;
}

}  // namespace

// --- dataset loading ------------------------------------------------------------

Tensor clip_frames(const FrameSequence& clip, int temporal_window, int frame_width) {
  if (temporal_window < 1) throw DomainError("temporal window must be positive");
  if (frame_width < 1) throw DomainError("frame width must be positive");
  if (clip.frames.empty()) throw ContractError("clip holds no frames");
  if (clip.channels() != 1) {
    throw ContractError("training clips must be single-channel");
  }
  const std::size_t pixels = clip.width() * clip.height();
  if (pixels != static_cast<std::size_t>(frame_width)) {
    throw ContractError("clip frames hold " + std::to_string(pixels) +
                        " pixels where the model expects " +
                        std::to_string(frame_width));
  }

  const std::size_t count = clip.frames.size();
  const std::size_t rows = static_cast<std::size_t>(temporal_window);
  Tensor frames({rows, static_cast<std::size_t>(frame_width)});
  for (std::size_t t = 0; t < rows; ++t) {
    const double position =
        rows == 1 ? (static_cast<double>(count) - 1.0) / 2.0
                  : static_cast<double>(t) * (static_cast<double>(count) - 1.0) /
                        (static_cast<double>(rows) - 1.0);
    const std::size_t idx = static_cast<std::size_t>(std::llround(position));
    const Frame& frame = clip.frames[idx];
    for (std::size_t p = 0; p < pixels; ++p) {
      frames.at(t, p) = static_cast<double>(frame.pixels[p]) / 255.0;
    }
  }
  return frames;
}

std::vector<TrainSample> load_training_set(const RunConfig& config,
                                           const std::string& data_dir) {
  const fs::path root(data_dir);
  const std::vector<ManifestRecord> manifest =
      read_manifest_file((root / "manifest.jsonl").string());

  std::vector<TrainSample> samples;
  samples.reserve(manifest.size());
  for (const ManifestRecord& record : manifest) {
    const FrameSequence clip =
        read_limf_file((root / "clips" / (record.clip_id + ".limf")).string());
    TrainSample sample;
    sample.clip_id = record.clip_id;
    sample.frames =
        clip_frames(clip, config.temporal_window, config.model.frame_width);
    sample.tokens = tokenize(record.caption, config.model.vocab);
    if (sample.tokens.length() == 0) {
      throw ContractError("caption for " + record.clip_id + " has no tokens");
    }
    sample.confidence = record.confidence;
    samples.push_back(std::move(sample));
  }
  return samples;
}

EvalSet load_eval_set(const RunConfig& config, const std::string& data_dir) {
  EvalSet set;
  set.samples = load_training_set(config, data_dir);
  set.labels = read_labels_file((fs::path(data_dir) / "labels.json").string());
  for (TrainSample& sample : set.samples) {
    const auto it = set.labels.labels.find(sample.clip_id);
    if (it == set.labels.labels.end()) {
      throw ContractError("clip " + sample.clip_id + " is missing from labels.json");
    }
    sample.label = it->second;
  }
  return set;
}

// --- commands -------------------------------------------------------------------

SynthSummary cmd_synth(const RunConfig& config, const std::string& out_dir) {
  validate_config(config);
  SyntheticSpec spec;
  spec.classes = config.synth.classes;
  spec.clips_per_class = config.synth.clips_per_class;
  spec.frames_per_clip = config.temporal_window;
  spec.frame_w = config.synth.frame_w;
  spec.frame_h = config.synth.frame_h;
  spec.noise_sigma = config.synth.noise_sigma;
  spec.corruption_rate = config.synth.corruption_rate;
  spec.window_s = config.pipeline.window_s;
  spec.vocab = config.model.vocab;

  const SynthDataset dataset = generate_synthetic_dataset(spec, config.seed);
  write_synthetic_dataset(dataset, out_dir);
  write_config_file((fs::path(out_dir) / "config.json").string(), config);

  SynthSummary summary;
  summary.clips = dataset.clips.size();
  summary.corrupted = dataset.corrupted_count;
  summary.data_dir = out_dir;
  return summary;
}

PrepSummary cmd_prep(const RunConfig& config, const std::string& out_dir) {
  validate_config(config);
  if (config.paths.sources_dir.empty()) {
    throw ConfigError("config key paths.sources_dir: must name the raw source directory");
  }
  const std::vector<SourceVideo> sources = load_sources(config.paths.sources_dir);
  HistogramShotProvider shots;
  MockCaptionProvider captions;
  const PipelineResult result =
      run_pipeline(sources, shots, captions, pipeline_config(config));

  const fs::path root(out_dir);
  fs::create_directories(root / "clips");
  write_manifest_file((root / "manifest.jsonl").string(), result.manifest);
  write_lines(root / "pipeline_log.txt", result.log);
  write_config_file((root / "config.json").string(), config);

  // Export each accepted window as the standardized grayscale clip the
  // training loader consumes, reproducing the pipeline's own transform.
  for (const SourceVideo& source : sources) {
    std::vector<const ManifestRecord*> records;
    for (const ManifestRecord& r : result.manifest) {
      if (r.source_id == source.source_id) records.push_back(&r);
    }
    if (records.empty()) continue;
    FrameSequence standardized;
    standardized.fps = source.video.fps;
    for (const Frame& frame : source.video.frames) {
      standardized.frames.push_back(to_grayscale(
          standardize_frame(frame, config.pipeline.target_w, config.pipeline.target_h)));
    }
    for (const ManifestRecord* record : records) {
      const FrameSequence window =
          slice_clip(standardized, record->start_s, record->end_s);
      write_limf_file((root / "clips" / (record->clip_id + ".limf")).string(), window);
    }
  }

  PrepSummary summary;
  summary.records = result.manifest.size();
  summary.clips_considered = result.clips_considered;
  summary.pruned_blurred = result.pruned_blurred;
  summary.caption_failures = result.caption_failures;
  summary.manifest_path = (root / "manifest.jsonl").string();
  return summary;
}

ConfidenceSummary cmd_confidence(const RunConfig& config, const std::string& data_dir) {
  validate_config(config);
  const fs::path root(data_dir);
  std::vector<ManifestRecord> records =
      read_manifest_file((root / "manifest.jsonl").string());

  std::ifstream corpus_in(root / "clean_corpus.txt", std::ios::binary);
  if (!corpus_in) {
    throw IoError("cannot read clean corpus: " + (root / "clean_corpus.txt").string());
  }
  std::vector<TokenSequence> corpus;
  std::string line;
  while (std::getline(corpus_in, line)) {
    TokenSequence tokens = tokenize(line, config.model.vocab);
    if (tokens.length() > 0) corpus.push_back(std::move(tokens));
  }
  const ToyCountScorer scorer = fit_toy_scorer(corpus, config.model.vocab);

  std::vector<ConfidenceRecord> report;
  double total = 0.0;
  for (ManifestRecord& record : records) {
    const TokenSequence tokens = tokenize(record.caption, config.model.vocab);
    if (tokens.length() == 0) {
      throw ContractError("caption for " + record.clip_id + " has no tokens");
    }
    const double scored = confidence_score(tokens, scorer);
    record.confidence = std::max(scored, config.confidence.floor);
    total += record.confidence;
    report.push_back({record.clip_id, tokens.length(), record.confidence});
  }

  write_manifest_file((root / "manifest.jsonl").string(), records);
  std::ofstream report_out(root / "confidence.jsonl", std::ios::binary | std::ios::trunc);
  if (!report_out) {
    throw IoError("cannot write confidence report: " + (root / "confidence.jsonl").string());
  }
  write_confidence_report(report_out, report);

  ConfidenceSummary summary;
  summary.scored = records.size();
  summary.mean_confidence = records.empty() ? 0.0 : total / static_cast<double>(records.size());
  return summary;
}

TrainSummary cmd_train(const RunConfig& config, const std::string& out_dir) {
  validate_config(config);
  require_data_dir(config);
  const std::vector<TrainSample> samples =
      load_training_set(config, config.paths.data_dir);
  if (samples.size() < 2) {
    throw DegenerateInputError("training needs at least 2 clips, got " +
                               std::to_string(samples.size()));
  }

  const fs::path root(out_dir);
  fs::create_directories(root);
  AlignmentModel model = make_alignment_model(alignment_config(config), config.seed);
  TrainSummary summary;
  summary.result = train_model(model, samples, train_loop_options(config));
  summary.model_prefix = (root / "model").string();

  save_model(summary.model_prefix, model);
  std::ofstream csv(root / "loss.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write loss log: " + (root / "loss.csv").string());
  write_loss_csv(csv, summary.result.log);
  write_config_file((root / "config.json").string(), config);
  return summary;
}

EvalReport cmd_eval_zeroshot(const RunConfig& config, const std::string& out_dir) {
  validate_config(config);
  require_data_dir(config);
  const EvalSet set = load_eval_set(config, config.paths.data_dir);
  const AlignmentModel model = load_model_or_fresh(config);

  const ClassPrompts stored =
      read_prompt_file((fs::path(config.paths.data_dir) / "prompts.json").string());
  ClassPrompts ordered;
  for (const std::string& name : set.labels.classes) {
    const auto it = std::find_if(stored.begin(), stored.end(),
                                 [&name](const auto& entry) { return entry.first == name; });
    if (it == stored.end()) {
      throw ContractError("prompts.json has no prompts for class " + name);
    }
    ordered.push_back(*it);
  }
  const PhasePromptSet prompts = build_prompt_set(model, ordered);

  const EvalReport report = evaluate_zero_shot(model, set.samples, prompts);
  const fs::path root(out_dir);
  fs::create_directories(root);
  write_results_file((root / "results_zeroshot.json").string(), report);
  write_config_file((root / "config.json").string(), config);
  return report;
}

EvalReport cmd_eval_linear(const RunConfig& config, const std::string& out_dir) {
  validate_config(config);
  require_data_dir(config);
  const EvalSet set = load_eval_set(config, config.paths.data_dir);
  const AlignmentModel model = load_model_or_fresh(config);
  const int num_classes = static_cast<int>(set.labels.classes.size());

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    by_class[static_cast<std::size_t>(set.samples[i].label)].push_back(i);
  }

  const Rng root_rng(config.seed);
  std::vector<TrainSample> train;
  std::vector<TrainSample> test;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    std::vector<std::size_t>& members = by_class[k];
    if (members.size() < 2) {
      throw DegenerateInputError("class " + set.labels.classes[k] +
                                 " needs at least 2 clips for a probe split");
    }
    Rng rng = root_rng.fork(1000 + k);
    rng.shuffle(members);
    const auto count = static_cast<std::size_t>(std::clamp<long long>(
        std::llround(config.probe.train_fraction * static_cast<double>(members.size())),
        1, static_cast<long long>(members.size()) - 1));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < count ? train : test).push_back(set.samples[members[i]]);
    }
  }

  const EvalReport report = evaluate_linear_probe(model, train, test, num_classes,
                                                  config.probe.epochs, config.probe.lr);
  const fs::path root(out_dir);
  fs::create_directories(root);
  write_results_file((root / "results_linear.json").string(), report);
  write_config_file((root / "config.json").string(), config);
  return report;
}

GradCheckSummary cmd_gradcheck(const RunConfig& config) {
  validate_config(config);
  AlignmentConfig cfg;
  cfg.vision_width = 16;
  cfg.text_width = 16;
  cfg.proj_dim = 16;
  cfg.depth = 2;
  cfg.lora_rank = 4;
  cfg.lora_alpha = 8.0;
  cfg.frame_width = 16;
  cfg.patch_count = 4;
  cfg.vocab = 64;
  constexpr int kClips = 3;
  constexpr std::size_t kFrames = 4;

  Rng rng(config.seed);
  std::vector<TrainSample> samples;
  std::vector<double> weights;
  for (int b = 0; b < kClips; ++b) {
    TrainSample sample;
    sample.clip_id = "probe_" + std::to_string(b);
    Tensor frames({kFrames, static_cast<std::size_t>(cfg.frame_width)});
    for (double& v : frames.data()) v = rng.normal();
    sample.frames = std::move(frames);
    std::vector<int> content;
    const std::size_t len = 3 + rng.integer(4);
    for (std::size_t i = 0; i < len; ++i) {
      content.push_back(kFirstWordTokenId +
                        static_cast<int>(rng.integer(
                            static_cast<std::uint64_t>(cfg.vocab - kFirstWordTokenId))));
    }
    sample.tokens = TokenSequence::from_content(std::move(content));
    sample.confidence = 0.05 + 0.95 * rng.uniform();
    weights.push_back(sample.confidence);
    samples.push_back(std::move(sample));
  }
  std::vector<const TrainSample*> batch;
  for (const TrainSample& s : samples) batch.push_back(&s);

  const std::uint64_t model_seed = config.seed;
  const ScalarComputation computation = [&cfg, &batch, &weights, model_seed](
                                            const std::vector<Tensor>& params,
                                            std::vector<Tensor>* grads) {
    AlignmentModel probe = make_alignment_model(cfg, model_seed);
    std::vector<NamedTensor> named = trainable_params(probe);
    if (named.size() != params.size()) {
      throw ContractError("gradient audit parameter count changed mid-run");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *named[i].tensor = params[i];
    Tape tape;
    TapeBindings reg;
    const ValueId loss = build_batch_loss(tape, reg, probe, batch, weights);
    const double value = tape.value(loss).at(0, 0);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const NamedTensor& p : named) grads->push_back(tape.grad(reg.find(p.name)));
    }
    return value;
  };

  AlignmentModel model = make_alignment_model(cfg, model_seed);
  GradCheckSummary summary;
  summary.report = grad_check(computation, snapshot_params(model), 1e-5);
  summary.passed = summary.report.max_rel_error < summary.threshold;
  return summary;
}

int error_exit_code(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) != nullptr) return 2;
  if (dynamic_cast<const IoError*>(&error) != nullptr) return 3;
  if (dynamic_cast<const NumericError*>(&error) != nullptr) return 5;
  return 4;
}

}  // namespace lim
