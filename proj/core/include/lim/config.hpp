#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lim/alignment.hpp"
#include "lim/datapipe.hpp"

namespace lim {

// Run-level configuration for the command-line tools. One JSON file (or the
// built-in defaults) fully determines a run: every tool is a pure function of
// (config, input files, seed), and each run directory receives a resolved
// snapshot that reproduces the run bit-identically.
//
// Keys are addressed by dotted paths ("optim.base_lr"); the same paths work
// as command-line overrides, and flags win over the file.
struct RunConfig {
  struct Model {
    int vision_width = 32;   // frozen vision tower width
    int text_width = 32;     // frozen text tower width
    int proj_dim = 32;       // shared embedding dimension
    int depth = 2;           // attention blocks per tower
    int frame_width = 32;    // pixels per frame row fed to the vision tower
    int patch_count = 4;     // frame_width must divide evenly into patches
    int vocab = 256;         // hashed token vocabulary (ids 2..vocab-1)
    double init_tau = 0.07;  // initial temperature, within [0.01, 1]
  };

  struct Lora {
    int rank = 16;
    double alpha = 32.0;
  };

  struct Optim {
    double base_lr = 2e-4;
    double head_lr_multiplier = 10.0;
    int epochs = 10;
    int batch_size = 16;
    double weight_decay = 0.01;
  };

  struct Confidence {
    bool enabled = true;          // false => every training weight is 1
    std::string rescale = "none"; // "none" | "batch-mean"
    double floor = 1e-6;          // lowest confidence a scored caption keeps
  };

  struct Pipeline {
    double window_s = 5.0;
    double stride_s = 2.0;
    double min_shot_s = 5.0;
    double sharpness_threshold = 100.0;
    int target_w = 832;
    int target_h = 480;
  };

  struct Probe {
    double lr = 0.1;
    int epochs = 500;
    double train_fraction = 0.8;  // per-class share of clips used for fitting
  };

  struct Synth {
    int classes = 4;
    int clips_per_class = 50;
    double noise_sigma = 8.0;      // per-pixel Gaussian jitter, in levels
    double corruption_rate = 0.0;  // probability a caption turns to gibberish
    int frame_w = 8;               // frame_w * frame_h must equal
    int frame_h = 4;               //   model.frame_width
  };

  struct Paths {
    std::string data_dir;      // dataset directory produced by synth/prep
    std::string sources_dir;   // raw sources consumed by prep
    std::string model_prefix;  // checkpoint prefix consumed by the evals
  };

  std::uint64_t seed = 42;
  int temporal_window = 8;  // frames sampled per clip
  Model model;
  Lora lora;
  Optim optim;
  Confidence confidence;
  Pipeline pipeline;
  Probe probe;
  Synth synth;
  Paths paths;
};

// All dotted key paths, in a fixed documented order.
std::vector<std::string> config_keys();

// Resolved snapshot as pretty-printed JSON. Parsing it back yields an equal
// config; numbers are written so that they round-trip exactly.
std::string config_to_json(const RunConfig& config);

// Parses a (possibly partial) config: absent keys keep their defaults,
// unknown keys or wrong value types raise ConfigError. The result is
// validated before it is returned.
RunConfig parse_config_json(const std::string& text);

RunConfig read_config_file(const std::string& path);  // IoError if unreadable
void write_config_file(const std::string& path, const RunConfig& config);

// Sets one key from its text form ("optim.base_lr" <- "5e-4"). Unknown keys
// and unparseable values raise ConfigError. Validation is the caller's step
// once all overrides are applied.
void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value);

// Current value of one key, rendered as the same text apply_override accepts.
std::string lookup_value(const RunConfig& config, const std::string& key);

// Cross-field sanity: positivity, ranges, divisibility, and that synthetic
// frames match the model's frame width. Raises ConfigError naming the key.
void validate_config(const RunConfig& config);

// Projections onto the module-level option structs.
AlignmentConfig alignment_config(const RunConfig& config);
AdamWConfig adamw_config(const RunConfig& config);
TrainLoopOptions train_loop_options(const RunConfig& config);
PipelineConfig pipeline_config(const RunConfig& config);

}  // namespace lim
