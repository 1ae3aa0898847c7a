#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lim/rng.hpp"
#include "lim/tape.hpp"
#include "lim/tensor.hpp"

namespace lim {

// --- token sequences --------------------------------------------------------

inline constexpr int kSummaryTokenId = 0;  // position 0 of every sequence
inline constexpr int kOovTokenId = 1;      // reserved bucket for unknown ids
inline constexpr int kFirstWordTokenId = 2;

// Token ids with the summary token at position 0. Content tokens follow.
struct TokenSequence {
  std::vector<int> ids;

  static TokenSequence from_content(std::vector<int> content);
  std::size_t length() const;               // content length, excludes summary
  std::span<const int> content() const;
};

// --- low-rank adapted linear layers ------------------------------------------

struct LoraAdapter {
  Tensor a;      // [rank x in]
  Tensor b;      // [out x rank], zero-initialized
  int rank = 0;
  double alpha = 0.0;
  double scaling() const { return alpha / static_cast<double>(rank); }
};

// Frozen dense map with an optional low-rank residual. The frozen weight never
// changes after construction; training touches only the adapter factors.
struct LoraLinear {
  Tensor w;  // [out x in], frozen
  std::optional<LoraAdapter> adapter;

  std::size_t out_features() const { return w.rows(); }
  std::size_t in_features() const { return w.cols(); }
};

// w ~ N(0, 1/in), a ~ N(0, 0.02^2), b = 0.
LoraLinear make_lora_linear(std::size_t out, std::size_t in, int rank, double alpha, Rng rng,
                            bool with_adapter);

// y = x w^T + scaling * (x a^T) b^T for row-major activations x: [n x in].
Tensor lora_forward(const LoraLinear& layer, const Tensor& x);

// Dense weights with the adapter folded in: w + scaling * b a.
Tensor lora_merge(const LoraLinear& layer);

// --- tape bindings ------------------------------------------------------------

// Records which tape leaf carries which named parameter so a trainer can pair
// gradients back to the model's tensors after backward().
class TapeBindings {
 public:
  struct Entry {
    std::string name;
    ValueId id;
  };
  ValueId bind(Tape& tape, std::string name, const Tensor& value);
  const std::vector<Entry>& entries() const { return entries_; }
  ValueId find(const std::string& name) const;  // invalid id when absent

 private:
  std::vector<Entry> entries_;
};

struct BoundLora {
  ValueId w_t;  // transposed frozen weight
  bool has_adapter = false;
  ValueId a_t, b_t;
  double scaling = 0.0;
};

// Places the layer's tensors on the tape. Adapter factors are registered under
// `name` + ".a"/".b" when reg is non-null; the frozen weight never is.
BoundLora bind_lora(Tape& tape, const LoraLinear& layer, TapeBindings* reg,
                    const std::string& name);
ValueId lora_apply(Tape& tape, const BoundLora& layer, ValueId x);

// --- toy encoders ---------------------------------------------------------------

enum class Modality { kVision, kText };

struct AttentionBlock {
  LoraLinear q, k, v;
};

struct ToyEncoderConfig {
  Modality modality = Modality::kVision;
  int width = 32;        // d_v or d_t
  int depth = 2;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  // vision only
  int frame_width = 32;  // flattened per-frame input width
  int patch_count = 4;   // tokens per frame; frame_width must divide evenly
  // text only
  int vocab = 256;
};

// Depth-2-by-default stack of single-head self-attention blocks over a frozen
// input embedding. Vision adapts Q, K and V; text adapts Q and V with K kept
// fully frozen. Frozen weights are a pure function of the seed.
struct ToyEncoder {
  ToyEncoderConfig cfg;
  std::uint64_t seed = 0;
  Tensor embed;  // vision: [width x patch_dim]; text: [vocab x width]
  std::vector<AttentionBlock> blocks;

  int patch_dim() const { return cfg.frame_width / cfg.patch_count; }
};

ToyEncoder make_toy_encoder(const ToyEncoderConfig& cfg, std::uint64_t seed);

struct BoundBlock {
  BoundLora q, k, v;
};

struct BoundEncoder {
  const ToyEncoder* encoder = nullptr;
  std::vector<BoundBlock> blocks;
};

BoundEncoder bind_encoder(Tape& tape, const ToyEncoder& enc, TapeBindings* reg,
                          const std::string& prefix);

// Frame-level embeddings for one clip; frames is [T x frame_width], the result
// is [T x width]. Frame t's row depends on frame t alone.
ValueId encode_video_frames(Tape& tape, const BoundEncoder& enc, const Tensor& frames);
Tensor encode_video_frames(const ToyEncoder& enc, const Tensor& frames);

// Sentence embedding read from the summary position; result is [1 x width].
ValueId encode_text(Tape& tape, const BoundEncoder& enc, const TokenSequence& tokens);
Tensor encode_text(const ToyEncoder& enc, const TokenSequence& tokens);

// Copy of the encoder with every adapter folded into the frozen weights and
// fresh zero adapters of the same rank attached.
ToyEncoder merge_encoder(const ToyEncoder& enc);

// Trainable adapter factors, named "<prefix>.block<i>.<q|k|v>.<a|b>".
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};
void collect_adapter_params(ToyEncoder& enc, const std::string& prefix,
                            std::vector<NamedTensor>& out);

}  // namespace lim
