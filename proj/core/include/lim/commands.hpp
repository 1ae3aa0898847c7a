#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lim/alignment.hpp"
#include "lim/config.hpp"
#include "lim/datapipe.hpp"
#include "lim/evalkit.hpp"
#include "lim/grad_check.hpp"
#include "lim/synthdata.hpp"

namespace lim {

// Orchestration layer behind the command-line tool. Every command is a pure
// function of (config, input files, seed): it reads inputs named by
// config.paths, writes its artifacts under an explicit output directory, and
// derives all randomness from config.seed. Commands that create a run
// directory drop a resolved config.json snapshot into it; re-running from
// that snapshot reproduces the outputs byte for byte.
//
// Error taxonomy (mapped to process exit codes by the binary):
//   ConfigError   -> 2   unusable configuration
//   IoError       -> 3   missing or unreadable/unwritable files
//   other Error   -> 4   inputs that break a data contract
//   NumericError  -> 5   divergence or a failed numeric check

// --- dataset loading ------------------------------------------------------------

// Evenly spaced temporal sampling: row t of the result is frame
// llround(t*(F-1)/(T-1)) of the clip (the middle frame when T == 1), with
// pixels scaled by 1/255. Clips must be single-channel with exactly
// frame_width pixels per frame.
Tensor clip_frames(const FrameSequence& clip, int temporal_window, int frame_width);

// Materializes manifest.jsonl + clips/*.limf into model-ready samples, in
// manifest order. Labels stay -1; confidences come from the manifest.
std::vector<TrainSample> load_training_set(const RunConfig& config,
                                           const std::string& data_dir);

struct EvalSet {
  std::vector<TrainSample> samples;  // labels filled from labels.json
  LabelsFile labels;
};

// Training set plus ground-truth labels; every manifest clip must be labeled.
EvalSet load_eval_set(const RunConfig& config, const std::string& data_dir);

// --- commands -------------------------------------------------------------------

struct SynthSummary {
  std::size_t clips = 0;
  std::size_t corrupted = 0;
  std::string data_dir;
};

// Generates the synthetic dataset described by config.synth under out_dir.
SynthSummary cmd_synth(const RunConfig& config, const std::string& out_dir);

struct PrepSummary {
  std::size_t records = 0;
  std::size_t clips_considered = 0;
  std::size_t pruned_blurred = 0;
  std::size_t caption_failures = 0;
  std::string manifest_path;
};

// Runs the curation pipeline over config.paths.sources_dir (sources.json plus
// the LIMF files it names) and writes manifest.jsonl, clips/*.limf (the
// standardized grayscale windows), pipeline_log.txt, and config.json.
PrepSummary cmd_prep(const RunConfig& config, const std::string& out_dir);

struct ConfidenceSummary {
  std::size_t scored = 0;
  double mean_confidence = 0.0;
};

// Fits the unigram scorer on <data_dir>/clean_corpus.txt, scores every
// manifest caption, clamps to config.confidence.floor, and rewrites
// <data_dir>/manifest.jsonl in place (plus a confidence.jsonl report). The
// rewrite is deterministic, so re-running changes nothing.
ConfidenceSummary cmd_confidence(const RunConfig& config, const std::string& data_dir);

struct TrainSummary {
  TrainResult result;
  std::string model_prefix;  // pass as paths.model_prefix to the evals
};

// Trains on config.paths.data_dir and writes model checkpoints (prefix
// <out_dir>/model), loss.csv, and config.json under out_dir.
TrainSummary cmd_train(const RunConfig& config, const std::string& out_dir);

// Zero-shot evaluation of paths.model_prefix (or, when empty, of a freshly
// initialized model) on paths.data_dir, against the dataset's prompts.json
// ordered by labels.json classes. Writes results_zeroshot.json + config.json.
EvalReport cmd_eval_zeroshot(const RunConfig& config, const std::string& out_dir);

// Linear-probe evaluation on a deterministic per-class split of
// paths.data_dir (config.probe.train_fraction of each class trains the
// probe). Writes results_linear.json + config.json.
EvalReport cmd_eval_linear(const RunConfig& config, const std::string& out_dir);

struct GradCheckSummary {
  GradCheckReport report;
  double threshold = 1e-4;
  bool passed = false;
};

// Central-difference audit (h = 1e-5) of the full training gradient — LoRA
// factors, pooler, both projection heads, log temperature — on a fixed toy
// geometry (3 clips, 4 frames, width 16) with the batch drawn from
// config.seed. Does not throw on failure; the caller inspects `passed`.
GradCheckSummary cmd_gradcheck(const RunConfig& config);

// Process exit code for an error escaping a command: ConfigError 2,
// IoError 3, NumericError 5, anything else 4. (1 is reserved for flag
// parsing, 0 for success.)
int error_exit_code(const std::exception& error);

}  // namespace lim
