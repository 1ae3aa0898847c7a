#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lim/adapters.hpp"
#include "lim/confidence.hpp"
#include "lim/pooling.hpp"
#include "lim/tape.hpp"
#include "lim/tensor.hpp"

namespace lim {

// --- projection heads -----------------------------------------------------------

// Two affine layers with a layer normalization and GELU between them; output
// rows are projected onto the unit sphere by the callers below.
struct ProjectionHead {
  Tensor w1;  // [hidden x in]
  Tensor b1;  // [1 x hidden]
  Tensor w2;  // [out x hidden]
  Tensor b2;  // [1 x out]
};

// Weights ~ N(0, 1/fan_in), biases zero. hidden and out must be >= 2.
ProjectionHead make_projection_head(int in, int hidden, int out, std::uint64_t seed);

struct BoundProjection {
  ValueId w1_t, b1, w2_t, b2;
};

BoundProjection bind_projection(Tape& tape, const ProjectionHead& head, TapeBindings* reg,
                                const std::string& prefix);

// Rows of x through the head, each row normalized to unit length:
// z = l2_normalize(W2 gelu(LN(W1 x + b1)) + b2).
ValueId project_rows(Tape& tape, const BoundProjection& head, ValueId x);

// Eager convenience for a feature batch [n x in]; rows come back unit-norm.
Tensor project_and_normalize(const ProjectionHead& head, const Tensor& features);

void collect_projection_params(ProjectionHead& head, const std::string& prefix,
                               std::vector<NamedTensor>& out);

// --- the alignment model -----------------------------------------------------------

struct AlignmentConfig {
  int vision_width = 32;
  int text_width = 32;
  int proj_dim = 32;
  int depth = 2;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  int frame_width = 32;
  int patch_count = 4;
  int vocab = 256;
  double init_tau = 0.07;
};

inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 1.0;

// Dual-encoder model: frozen toy encoders with LoRA adapters, a temporal
// attention pooler on the vision side, one projection head per modality, and
// a learnable log-temperature.
struct AlignmentModel {
  AlignmentConfig cfg;
  std::uint64_t seed = 0;
  ToyEncoder vision;
  ToyEncoder text;
  TemporalPooler pooler;
  ProjectionHead proj_v;
  ProjectionHead proj_t;
  Tensor log_tau;  // [1 x 1], kept within [ln kTauMin, ln kTauMax]
};

AlignmentModel make_alignment_model(const AlignmentConfig& cfg, std::uint64_t seed);

// exp(log_tau) clamped into [kTauMin, kTauMax].
double temperature(const AlignmentModel& model);

// Trainable tensors with their canonical names: vision/text adapter factors,
// pooler weights, both projection heads, and log_tau.
std::vector<NamedTensor> trainable_params(AlignmentModel& model);

// Unit-norm clip embedding [1 x proj_dim] for frames [T x frame_width].
Tensor embed_clip(const AlignmentModel& model, const Tensor& frames);
// Unit-norm sentence embedding [1 x proj_dim].
Tensor embed_text(const AlignmentModel& model, const TokenSequence& tokens);
// Frame-level vision features [T x vision_width], before pooling.
Tensor frame_features(const AlignmentModel& model, const Tensor& frames);

// Checkpoint IO under <prefix>.limt/<prefix>.json: every tensor (frozen and
// trainable) plus the configuration, so loading reproduces the model exactly.
void save_model(const std::string& prefix, const AlignmentModel& model);
AlignmentModel load_model(const std::string& prefix);

// --- contrastive objective ---------------------------------------------------------

// Confidence-weighted bidirectional InfoNCE between unit-row batches
// zv, zt: [B x D]. For each pair the positive sits on the diagonal; both
// softmax directions are averaged and scaled by the pair's weight:
//   total = (1/2B) sum_i c_i * (lse(row_i) + lse(col_i) - 2 sim_ii / tau)
// computed in log-sum-exp form. tau is a [1 x 1] tape value in
// [kTauMin, kTauMax]; c_i must lie in (0,1].
ValueId contrastive_loss(Tape& tape, ValueId zv, ValueId zt, const std::vector<double>& c,
                         ValueId tau);

// Eager evaluation for fixed embeddings and temperature.
double contrastive_loss_value(const Tensor& zv, const Tensor& zt, const std::vector<double>& c,
                              double tau);

// --- optimizer ------------------------------------------------------------------

struct AdamWConfig {
  double base_lr = 2e-4;
  double head_lr_multiplier = 10.0;  // pooler + projection heads
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; log_tau is exempt
};

// Adaptive-moment optimizer with decoupled weight decay and two rate groups:
// freshly initialized heads (pooler, projections) run at base_lr times the
// multiplier, adapter factors and log_tau at base_lr.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::vector<NamedTensor> params);

  // grads must align one-to-one with the construction-time params. lr_scale
  // multiplies every group's rate (schedules pass the decay factor here).
  void step(const std::vector<Tensor>& grads, double lr_scale);

  const std::vector<NamedTensor>& params() const { return params_; }
  std::int64_t steps_taken() const { return steps_; }

 private:
  AdamWConfig cfg_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> rate_;
  std::vector<bool> decay_;
  std::int64_t steps_ = 0;
};

// --- training -------------------------------------------------------------------

struct TrainSample {
  std::string clip_id;
  Tensor frames;  // [T x frame_width]
  TokenSequence tokens;
  double confidence = 1.0;
  int label = -1;  // evaluation only
};

struct TrainStepOptions {
  double lr_scale = 1.0;
  bool use_confidence = true;             // false: every weight is 1
  RescaleMode rescale = RescaleMode::kNone;
};

// Full forward pass for a batch on one tape: encode both modalities, pool,
// project, and return the weighted contrastive loss node. All trainable
// tensors are registered in `reg` under their canonical names.
ValueId build_batch_loss(Tape& tape, TapeBindings& reg, const AlignmentModel& model,
                         const std::vector<const TrainSample*>& batch,
                         const std::vector<double>& weights);

// One optimizer step over a batch (pointers into caller-owned samples; B >= 2).
// Returns the pre-update loss. A non-finite loss or gradient aborts with
// NumericError before any state changes; log_tau is re-clamped afterwards.
double train_step(AlignmentModel& model, const std::vector<const TrainSample*>& batch,
                  AdamW& optimizer, const TrainStepOptions& options);

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double tau = 0.0;
  double lr = 0.0;  // base-group rate after scheduling
};

struct TrainLoopOptions {
  int epochs = 10;
  int batch_size = 16;
  AdamWConfig optim;
  bool use_confidence = true;
  RescaleMode rescale = RescaleMode::kNone;
  std::uint64_t shuffle_seed = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  int steps = 0;
};

// Epoch loop with per-epoch reshuffling and cosine rate decay
// 0.5 (1 + cos(pi t / T)) over all scheduled steps. Trailing chunks of size 1
// are skipped (the loss needs at least one negative).
TrainResult train_model(AlignmentModel& model, const std::vector<TrainSample>& samples,
                        const TrainLoopOptions& options);

// CSV with header "step,loss,tau,lr", one row per step, full double precision.
void write_loss_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

}  // namespace lim
