#include "lim/adapters.hpp"

#include <algorithm>
#include <cmath>

#include "lim/error.hpp"

namespace lim {

// --- token sequences -----------------------------------------------------------

TokenSequence TokenSequence::from_content(std::vector<int> content) {
  TokenSequence seq;
  seq.ids.reserve(content.size() + 1);
  seq.ids.push_back(kSummaryTokenId);
  seq.ids.insert(seq.ids.end(), content.begin(), content.end());
  return seq;
}

std::size_t TokenSequence::length() const { return ids.empty() ? 0 : ids.size() - 1; }

std::span<const int> TokenSequence::content() const {
  if (ids.empty()) return {};
  return {ids.data() + 1, ids.size() - 1};
}

// --- lora layers -----------------------------------------------------------------

LoraLinear make_lora_linear(std::size_t out, std::size_t in, int rank, double alpha, Rng rng,
                            bool with_adapter) {
  if (out == 0 || in == 0) throw DomainError("lora layer extents must be positive");
  LoraLinear layer;
  layer.w = Tensor({out, in});
  const double wstd = 1.0 / std::sqrt(static_cast<double>(in));
  Rng wrng = rng.fork(1);
  for (auto& v : layer.w.data()) v = wrng.normal(0.0, wstd);
  if (with_adapter) {
    if (rank <= 0) throw DomainError("lora rank must be positive");
    if (!(alpha > 0.0)) throw DomainError("lora alpha must be positive");
    LoraAdapter ad;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.a = Tensor({static_cast<std::size_t>(rank), in});
    Rng arng = rng.fork(2);
    for (auto& v : ad.a.data()) v = arng.normal(0.0, 0.02);
    ad.b = Tensor({out, static_cast<std::size_t>(rank)});  // zeros: adapted == frozen at start
    layer.adapter = std::move(ad);
  }
  return layer;
}

Tensor lora_forward(const LoraLinear& layer, const Tensor& x) {
  if (!x.defined() || x.rank() != 2) {
    throw ShapeError("lora_forward expects rank-2 input");
  }
  if (x.cols() != layer.in_features()) {
    throw ShapeError("lora_forward: input " + shape_to_string(x.shape()) +
                     " does not match weight " + shape_to_string(layer.w.shape()));
  }
  Tape tape;
  BoundLora bound = bind_lora(tape, layer, nullptr, "layer");
  return tape.value(lora_apply(tape, bound, tape.leaf(x)));
}

Tensor lora_merge(const LoraLinear& layer) {
  if (!layer.adapter) return layer.w;
  const LoraAdapter& ad = *layer.adapter;
  Tensor delta = matmul(ad.b, ad.a);  // [out x in]
  Tensor merged(layer.w.shape());
  const double s = ad.scaling();
  for (std::size_t i = 0; i < merged.size(); ++i) {
    merged.data()[i] = layer.w.data()[i] + s * delta.data()[i];
  }
  return merged;
}

// --- tape bindings -----------------------------------------------------------------

ValueId TapeBindings::bind(Tape& tape, std::string name, const Tensor& value) {
  for (const Entry& e : entries_) {
    if (e.name == name) throw Error("tape bindings: duplicate name " + name);
  }
  ValueId id = tape.leaf(value);
  entries_.push_back({std::move(name), id});
  return id;
}

ValueId TapeBindings::find(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return e.id;
  }
  return ValueId{};
}

BoundLora bind_lora(Tape& tape, const LoraLinear& layer, TapeBindings* reg,
                    const std::string& name) {
  BoundLora bound;
  bound.w_t = tape.transpose(tape.leaf(layer.w));
  if (layer.adapter) {
    const LoraAdapter& ad = *layer.adapter;
    ValueId a = reg ? reg->bind(tape, name + ".a", ad.a) : tape.leaf(ad.a);
    ValueId b = reg ? reg->bind(tape, name + ".b", ad.b) : tape.leaf(ad.b);
    bound.has_adapter = true;
    bound.a_t = tape.transpose(a);
    bound.b_t = tape.transpose(b);
    bound.scaling = ad.scaling();
  }
  return bound;
}

ValueId lora_apply(Tape& tape, const BoundLora& layer, ValueId x) {
  ValueId y = tape.matmul(x, layer.w_t);
  if (layer.has_adapter) {
    ValueId low = tape.matmul(tape.matmul(x, layer.a_t), layer.b_t);
    y = tape.add(y, tape.scale(low, layer.scaling));
  }
  return y;
}

// --- toy encoders ---------------------------------------------------------------------

namespace {

void validate_config(const ToyEncoderConfig& cfg) {
  if (cfg.width < 2) throw DomainError("encoder width must be at least 2");
  if (cfg.depth < 1) throw DomainError("encoder depth must be at least 1");
  if (cfg.modality == Modality::kVision) {
    if (cfg.patch_count < 1 || cfg.frame_width < 1 || cfg.frame_width % cfg.patch_count != 0) {
      throw DomainError("frame_width " + std::to_string(cfg.frame_width) +
                        " must be a positive multiple of patch_count " +
                        std::to_string(cfg.patch_count));
    }
  } else {
    if (cfg.vocab < kFirstWordTokenId + 1) {
      throw DomainError("vocab must exceed the reserved token ids");
    }
  }
}

// Attention over one bound block: y = x + softmax(q k^T / sqrt(d)) v.
ValueId block_apply(Tape& tape, const BoundBlock& block, ValueId x, double inv_sqrt_d) {
  ValueId q = lora_apply(tape, block.q, x);
  ValueId k = lora_apply(tape, block.k, x);
  ValueId v = lora_apply(tape, block.v, x);
  ValueId scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d);
  ValueId attn = tape.matmul(tape.softmax_rows(scores), v);
  return tape.add(x, attn);
}

ValueId encoder_stack(Tape& tape, const BoundEncoder& enc, ValueId x) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(enc.encoder->cfg.width));
  for (const BoundBlock& block : enc.blocks) {
    x = block_apply(tape, block, x, inv_sqrt_d);
  }
  return x;
}

}  // namespace

ToyEncoder make_toy_encoder(const ToyEncoderConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  ToyEncoder enc;
  enc.cfg = cfg;
  enc.seed = seed;
  Rng root(seed);

  const std::size_t d = static_cast<std::size_t>(cfg.width);
  if (cfg.modality == Modality::kVision) {
    const std::size_t p = static_cast<std::size_t>(enc.patch_dim());
    enc.embed = Tensor({d, p});
    Rng erng = root.fork(1);
    const double estd = 1.0 / std::sqrt(static_cast<double>(p));
    for (auto& v : enc.embed.data()) v = erng.normal(0.0, estd);
  } else {
    enc.embed = Tensor({static_cast<std::size_t>(cfg.vocab), d});
    Rng erng = root.fork(1);
    for (auto& v : enc.embed.data()) v = erng.normal(0.0, 1.0);
  }

  const bool adapt_k = cfg.modality == Modality::kVision;
  for (int i = 0; i < cfg.depth; ++i) {
    AttentionBlock block;
    block.q = make_lora_linear(d, d, cfg.lora_rank, cfg.lora_alpha,
                               root.fork(100 + 8 * static_cast<std::uint64_t>(i)), true);
    block.k = make_lora_linear(d, d, cfg.lora_rank, cfg.lora_alpha,
                               root.fork(101 + 8 * static_cast<std::uint64_t>(i)), adapt_k);
    block.v = make_lora_linear(d, d, cfg.lora_rank, cfg.lora_alpha,
                               root.fork(102 + 8 * static_cast<std::uint64_t>(i)), true);
    enc.blocks.push_back(std::move(block));
  }
  return enc;
}

BoundEncoder bind_encoder(Tape& tape, const ToyEncoder& enc, TapeBindings* reg,
                          const std::string& prefix) {
  BoundEncoder bound;
  bound.encoder = &enc;
  for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
    const std::string base = prefix + ".block" + std::to_string(i);
    BoundBlock bb;
    bb.q = bind_lora(tape, enc.blocks[i].q, reg, base + ".q");
    bb.k = bind_lora(tape, enc.blocks[i].k, reg, base + ".k");
    bb.v = bind_lora(tape, enc.blocks[i].v, reg, base + ".v");
    bound.blocks.push_back(bb);
  }
  return bound;
}

ValueId encode_video_frames(Tape& tape, const BoundEncoder& enc, const Tensor& frames) {
  const ToyEncoder& e = *enc.encoder;
  if (e.cfg.modality != Modality::kVision) throw DomainError("encoder is not a vision encoder");
  if (!frames.defined()) throw DomainError("encode_video_frames: empty clip");
  if (frames.rank() != 2 || frames.cols() != static_cast<std::size_t>(e.cfg.frame_width)) {
    throw ShapeError("encode_video_frames: frames " + shape_to_string(frames.shape()) +
                     " do not match frame_width " + std::to_string(e.cfg.frame_width));
  }
  const std::size_t T = frames.rows();
  const std::size_t P = static_cast<std::size_t>(e.cfg.patch_count);
  const std::size_t p = static_cast<std::size_t>(e.patch_dim());

  std::vector<ValueId> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    // Chunk the frame vector into patch tokens and embed them; the embedding
    // is frozen so it can run eagerly, off the tape.
    Tensor patches({P, p});
    std::copy_n(frames.row_span(t).begin(), P * p, patches.data().begin());
    Tensor x0 = matmul(patches, transpose(e.embed));  // [P x width]
    ValueId x = encoder_stack(tape, enc, tape.leaf(std::move(x0)));
    rows.push_back(tape.mean_rows(x));
  }
  return tape.concat_rows(rows);
}

Tensor encode_video_frames(const ToyEncoder& enc, const Tensor& frames) {
  Tape tape;
  BoundEncoder bound = bind_encoder(tape, enc, nullptr, "vision");
  return tape.value(encode_video_frames(tape, bound, frames));
}

ValueId encode_text(Tape& tape, const BoundEncoder& enc, const TokenSequence& tokens) {
  const ToyEncoder& e = *enc.encoder;
  if (e.cfg.modality != Modality::kText) throw DomainError("encoder is not a text encoder");
  if (tokens.length() < 1) throw DomainError("encode_text: sequence has no content tokens");
  if (tokens.ids[0] != kSummaryTokenId) {
    throw ContractError("encode_text: position 0 must be the summary token");
  }
  for (int id : tokens.ids) {
    if (id < 0 || id >= e.cfg.vocab) {
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(e.cfg.vocab));
    }
  }
  const std::size_t n = tokens.ids.size();
  const std::size_t d = static_cast<std::size_t>(e.cfg.width);
  Tensor x0({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = e.embed.row_span(static_cast<std::size_t>(tokens.ids[i]));
    std::copy(row.begin(), row.end(), x0.row_span(i).begin());
  }
  ValueId x = encoder_stack(tape, enc, tape.leaf(std::move(x0)));
  return tape.slice_row(x, 0);
}

Tensor encode_text(const ToyEncoder& enc, const TokenSequence& tokens) {
  Tape tape;
  BoundEncoder bound = bind_encoder(tape, enc, nullptr, "text");
  return tape.value(encode_text(tape, bound, tokens));
}

ToyEncoder merge_encoder(const ToyEncoder& enc) {
  ToyEncoder merged = enc;
  for (AttentionBlock& block : merged.blocks) {
    for (LoraLinear* layer : {&block.q, &block.k, &block.v}) {
      if (!layer->adapter) continue;
      layer->w = lora_merge(*layer);
      LoraAdapter& ad = *layer->adapter;
      std::fill(ad.b.data().begin(), ad.b.data().end(), 0.0);
    }
  }
  return merged;
}

void collect_adapter_params(ToyEncoder& enc, const std::string& prefix,
                            std::vector<NamedTensor>& out) {
  for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
    const std::string base = prefix + ".block" + std::to_string(i);
    auto add = [&](const char* tag, LoraLinear& layer) {
      if (!layer.adapter) return;
      out.push_back({base + "." + tag + ".a", &layer.adapter->a});
      out.push_back({base + "." + tag + ".b", &layer.adapter->b});
    };
    add("q", enc.blocks[i].q);
    add("k", enc.blocks[i].k);
    add("v", enc.blocks[i].v);
  }
}

}  // namespace lim
