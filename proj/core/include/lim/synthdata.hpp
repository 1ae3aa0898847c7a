#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lim/datapipe.hpp"
#include "lim/evalkit.hpp"

namespace lim {

// Synthetic clip/caption generator for desk-scale experiments. Each class k
// gets a latent prototype frame; a clip is that prototype plus per-pixel
// Gaussian jitter repeated over T frames, and its caption is a fixed
// class-specific token pattern. With probability `corruption_rate` the whole
// caption is replaced by tokens drawn from a gibberish vocabulary whose
// hashed ids are disjoint from every clean caption token, so a scorer fitted
// on clean text sees corrupted captions as out-of-distribution.
struct SyntheticSpec {
  int classes = 4;
  int clips_per_class = 50;
  int frames_per_clip = 8;
  int frame_w = 8;
  int frame_h = 4;
  double noise_sigma = 8.0;      // pixel jitter stddev, in intensity levels
  double corruption_rate = 0.0;  // probability a clip's caption is gibberish
  double window_s = 5.0;         // nominal clip duration recorded on disk
  int vocab = 256;               // hashed token vocabulary
};

// Ground-truth class assignment for a dataset, stored as labels.json:
// {"classes": [...], "labels": {"<clip_id>": index}}.
struct LabelsFile {
  std::vector<std::string> classes;
  std::map<std::string, int> labels;
};

struct SynthClip {
  std::string clip_id;
  int label = 0;
  bool corrupted = false;
  FrameSequence video;
};

struct SynthDataset {
  std::vector<SynthClip> clips;            // class-major, then clip index
  std::vector<ManifestRecord> manifest;    // parallel to `clips`
  LabelsFile labels;
  ClassPrompts prompts;                    // one clean pattern per class
  std::vector<std::string> clean_captions; // pre-corruption caption per clip
  std::map<std::string, bool> corrupted;   // clip_id -> caption was replaced
  std::size_t corrupted_count = 0;
};

std::string synth_class_name(int k);     // "stage<k>"
std::string synth_class_caption(int k);  // the clean caption pattern

// Words whose hashed token ids avoid every id used by the clean captions.
// Raises DomainError when the vocabulary is too crowded to stay disjoint.
std::vector<std::string> gibberish_vocabulary(const SyntheticSpec& spec);

// Deterministic in seed: equal (spec, seed) pairs yield identical datasets,
// down to every pixel and caption. Raises DomainError on an invalid spec.
SynthDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                        std::uint64_t seed);

// Writes clips/<clip_id>.limf, manifest.jsonl, labels.json, prompts.json,
// corruption.json, and clean_corpus.txt under `out_dir` (created if needed).
void write_synthetic_dataset(const SynthDataset& dataset,
                             const std::string& out_dir);

void write_labels_file(const std::string& path, const LabelsFile& labels);
LabelsFile read_labels_file(const std::string& path);

void write_corruption_file(const std::string& path,
                           const std::map<std::string, bool>& corrupted);
std::map<std::string, bool> read_corruption_file(const std::string& path);

}  // namespace lim
