#include "lim/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>

#include "lim/checkpoint.hpp"
#include "lim/error.hpp"
#include "lim/rng.hpp"

namespace lim {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_finite_or_throw(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError(what + " is not finite; step aborted");
}

}  // namespace

// --- projection heads -----------------------------------------------------------

ProjectionHead make_projection_head(int in, int hidden, int out, std::uint64_t seed) {
  if (in < 1 || hidden < 2 || out < 1) {
    throw DomainError("projection head needs in >= 1, hidden >= 2, out >= 1");
  }
  const auto ins = static_cast<std::size_t>(in);
  const auto hid = static_cast<std::size_t>(hidden);
  const auto outs = static_cast<std::size_t>(out);
  Rng root(seed);
  Rng r1 = root.fork(1);
  Rng r2 = root.fork(2);
  ProjectionHead head;
  head.w1 = Tensor({hid, ins});
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : head.w1.data()) v = r1.normal(0.0, s1);
  head.b1 = Tensor::filled({1, hid}, 0.0);
  head.w2 = Tensor({outs, hid});
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& v : head.w2.data()) v = r2.normal(0.0, s2);
  head.b2 = Tensor::filled({1, outs}, 0.0);
  return head;
}

BoundProjection bind_projection(Tape& tape, const ProjectionHead& head, TapeBindings* reg,
                                const std::string& prefix) {
  auto put = [&](const std::string& name, const Tensor& value) {
    return reg ? reg->bind(tape, prefix + "." + name, value) : tape.leaf(value);
  };
  BoundProjection bound;
  bound.w1_t = tape.transpose(put("w1", head.w1));
  bound.b1 = put("b1", head.b1);
  bound.w2_t = tape.transpose(put("w2", head.w2));
  bound.b2 = put("b2", head.b2);
  return bound;
}

ValueId project_rows(Tape& tape, const BoundProjection& head, ValueId x) {
  ValueId pre = tape.add_row_broadcast(tape.matmul(x, head.w1_t), head.b1);
  ValueId hidden = tape.gelu(tape.layer_norm_rows(pre));
  ValueId out = tape.add_row_broadcast(tape.matmul(hidden, head.w2_t), head.b2);
  return tape.l2_normalize_rows(out);
}

Tensor project_and_normalize(const ProjectionHead& head, const Tensor& features) {
  Tape tape;
  BoundProjection bound = bind_projection(tape, head, nullptr, "proj");
  return tape.value(project_rows(tape, bound, tape.leaf(features)));
}

void collect_projection_params(ProjectionHead& head, const std::string& prefix,
                               std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".w1", &head.w1});
  out.push_back({prefix + ".b1", &head.b1});
  out.push_back({prefix + ".w2", &head.w2});
  out.push_back({prefix + ".b2", &head.b2});
}

// --- model ---------------------------------------------------------------------

namespace {

void validate_alignment_config(const AlignmentConfig& cfg) {
  if (cfg.vision_width < 2 || cfg.text_width < 2 || cfg.proj_dim < 2) {
    throw DomainError("model widths must be at least 2");
  }
  if (!(cfg.init_tau >= kTauMin && cfg.init_tau <= kTauMax)) {
    throw DomainError("initial temperature " + format_double(cfg.init_tau) +
                      " outside [" + format_double(kTauMin) + ", " + format_double(kTauMax) + "]");
  }
}

ToyEncoderConfig vision_encoder_config(const AlignmentConfig& cfg) {
  ToyEncoderConfig e;
  e.modality = Modality::kVision;
  e.width = cfg.vision_width;
  e.depth = cfg.depth;
  e.lora_rank = cfg.lora_rank;
  e.lora_alpha = cfg.lora_alpha;
  e.frame_width = cfg.frame_width;
  e.patch_count = cfg.patch_count;
  return e;
}

ToyEncoderConfig text_encoder_config(const AlignmentConfig& cfg) {
  ToyEncoderConfig e;
  e.modality = Modality::kText;
  e.width = cfg.text_width;
  e.depth = cfg.depth;
  e.lora_rank = cfg.lora_rank;
  e.lora_alpha = cfg.lora_alpha;
  e.vocab = cfg.vocab;
  return e;
}

// Every tensor in the model under its canonical name, frozen ones included;
// used by the checkpoint writer so a load is an exact reconstruction.
std::vector<NamedTensor> all_tensors(AlignmentModel& model) {
  std::vector<NamedTensor> out;
  auto add_encoder = [&out](ToyEncoder& enc, const std::string& prefix) {
    out.push_back({prefix + ".embed", &enc.embed});
    for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
      const std::string base = prefix + ".block" + std::to_string(i);
      auto add_layer = [&out, &base](const char* tag, LoraLinear& layer) {
        out.push_back({base + "." + tag + ".w", &layer.w});
        if (layer.adapter) {
          out.push_back({base + "." + tag + ".a", &layer.adapter->a});
          out.push_back({base + "." + tag + ".b", &layer.adapter->b});
        }
      };
      add_layer("q", enc.blocks[i].q);
      add_layer("k", enc.blocks[i].k);
      add_layer("v", enc.blocks[i].v);
    }
  };
  add_encoder(model.vision, "vision");
  add_encoder(model.text, "text");
  collect_pooler_params(model.pooler, "pooler", out);
  collect_projection_params(model.proj_v, "proj_v", out);
  collect_projection_params(model.proj_t, "proj_t", out);
  out.push_back({"log_tau", &model.log_tau});
  return out;
}

}  // namespace

AlignmentModel make_alignment_model(const AlignmentConfig& cfg, std::uint64_t seed) {
  validate_alignment_config(cfg);
  Rng root(seed);
  AlignmentModel model;
  model.cfg = cfg;
  model.seed = seed;
  model.vision = make_toy_encoder(vision_encoder_config(cfg), root.fork(1).seed());
  model.text = make_toy_encoder(text_encoder_config(cfg), root.fork(2).seed());
  model.pooler = make_temporal_pooler(cfg.vision_width, root.fork(3).seed());
  model.proj_v =
      make_projection_head(cfg.vision_width, cfg.vision_width, cfg.proj_dim, root.fork(4).seed());
  model.proj_t =
      make_projection_head(cfg.text_width, cfg.text_width, cfg.proj_dim, root.fork(5).seed());
  model.log_tau = Tensor::filled({1, 1}, std::log(cfg.init_tau));
  return model;
}

double temperature(const AlignmentModel& model) {
  return std::clamp(std::exp(model.log_tau.at(0, 0)), kTauMin, kTauMax);
}

std::vector<NamedTensor> trainable_params(AlignmentModel& model) {
  std::vector<NamedTensor> out;
  collect_adapter_params(model.vision, "vision", out);
  collect_adapter_params(model.text, "text", out);
  collect_pooler_params(model.pooler, "pooler", out);
  collect_projection_params(model.proj_v, "proj_v", out);
  collect_projection_params(model.proj_t, "proj_t", out);
  out.push_back({"log_tau", &model.log_tau});
  return out;
}

Tensor embed_clip(const AlignmentModel& model, const Tensor& frames) {
  Tape tape;
  BoundEncoder enc = bind_encoder(tape, model.vision, nullptr, "vision");
  ValueId features = encode_video_frames(tape, enc, frames);
  BoundPooler pooler = bind_pooler(tape, model.pooler, nullptr, "pooler");
  ValueId pooled = pool(tape, pooler, features).pooled;
  BoundProjection proj = bind_projection(tape, model.proj_v, nullptr, "proj_v");
  return tape.value(project_rows(tape, proj, pooled));
}

Tensor embed_text(const AlignmentModel& model, const TokenSequence& tokens) {
  Tape tape;
  BoundEncoder enc = bind_encoder(tape, model.text, nullptr, "text");
  ValueId summary = encode_text(tape, enc, tokens);
  BoundProjection proj = bind_projection(tape, model.proj_t, nullptr, "proj_t");
  return tape.value(project_rows(tape, proj, summary));
}

Tensor frame_features(const AlignmentModel& model, const Tensor& frames) {
  return encode_video_frames(model.vision, frames);
}

void save_model(const std::string& prefix, const AlignmentModel& model) {
  CheckpointContents contents;
  contents.meta["format"] = "alignment-model";
  contents.meta["vision_width"] = std::to_string(model.cfg.vision_width);
  contents.meta["text_width"] = std::to_string(model.cfg.text_width);
  contents.meta["proj_dim"] = std::to_string(model.cfg.proj_dim);
  contents.meta["depth"] = std::to_string(model.cfg.depth);
  contents.meta["lora_rank"] = std::to_string(model.cfg.lora_rank);
  contents.meta["lora_alpha"] = format_double(model.cfg.lora_alpha);
  contents.meta["frame_width"] = std::to_string(model.cfg.frame_width);
  contents.meta["patch_count"] = std::to_string(model.cfg.patch_count);
  contents.meta["vocab"] = std::to_string(model.cfg.vocab);
  contents.meta["init_tau"] = format_double(model.cfg.init_tau);
  contents.meta["seed"] = std::to_string(model.seed);
  // all_tensors wants mutable access for the trainer's sake; this path only
  // reads through the pointers.
  AlignmentModel& mutable_model = const_cast<AlignmentModel&>(model);
  for (const NamedTensor& named : all_tensors(mutable_model)) {
    contents.params.emplace_back(named.name, *named.tensor);
  }
  save_checkpoint(prefix, contents);
}

AlignmentModel load_model(const std::string& prefix) {
  CheckpointContents contents = load_checkpoint(prefix);
  auto meta = [&contents](const std::string& key) -> const std::string& {
    auto it = contents.meta.find(key);
    if (it == contents.meta.end()) {
      throw ContractError("model checkpoint is missing meta key " + key);
    }
    return it->second;
  };
  if (meta("format") != "alignment-model") {
    throw ContractError("checkpoint format \"" + meta("format") + "\" is not alignment-model");
  }
  AlignmentConfig cfg;
  std::uint64_t seed = 0;
  try {
    cfg.vision_width = std::stoi(meta("vision_width"));
    cfg.text_width = std::stoi(meta("text_width"));
    cfg.proj_dim = std::stoi(meta("proj_dim"));
    cfg.depth = std::stoi(meta("depth"));
    cfg.lora_rank = std::stoi(meta("lora_rank"));
    cfg.lora_alpha = std::stod(meta("lora_alpha"));
    cfg.frame_width = std::stoi(meta("frame_width"));
    cfg.patch_count = std::stoi(meta("patch_count"));
    cfg.vocab = std::stoi(meta("vocab"));
    cfg.init_tau = std::stod(meta("init_tau"));
    seed = std::stoull(meta("seed"));
  } catch (const std::exception& e) {
    throw ContractError(std::string("model checkpoint meta is malformed: ") + e.what());
  }

  AlignmentModel model = make_alignment_model(cfg, seed);
  for (const NamedTensor& named : all_tensors(model)) {
    const Tensor& stored = checkpoint_param(contents, named.name);
    if (!stored.same_shape(*named.tensor)) {
      throw ContractError("checkpoint tensor " + named.name + " has shape " +
                          shape_to_string(stored.shape()) + ", expected " +
                          shape_to_string(named.tensor->shape()));
    }
    *named.tensor = stored;
  }
  return model;
}

// --- contrastive objective ---------------------------------------------------------

ValueId contrastive_loss(Tape& tape, ValueId zv, ValueId zt, const std::vector<double>& c,
                         ValueId tau) {
  const Tensor& v = tape.value(zv);
  const Tensor& t = tape.value(zt);
  if (v.rank() != 2 || !v.same_shape(t)) {
    throw ShapeError("contrastive_loss: embedding batches must share one [B x D] shape, got " +
                     shape_to_string(v.shape()) + " and " + shape_to_string(t.shape()));
  }
  const std::size_t B = v.rows();
  if (c.size() != B) {
    throw ContractError("contrastive_loss: " + std::to_string(c.size()) + " weights for " +
                        std::to_string(B) + " pairs");
  }
  for (double w : c) {
    if (!(w > 0.0 && w <= 1.0)) {
      throw ContractError("contrastive_loss: weight " + format_double(w) + " outside (0,1]");
    }
  }
  auto check_unit_rows = [](const Tensor& z, const char* which) {
    for (std::size_t r = 0; r < z.rows(); ++r) {
      double norm = 0.0;
      for (double x : z.row_span(r)) norm += x * x;
      norm = std::sqrt(norm);
      if (std::fabs(norm - 1.0) > 1e-6) {
        throw ContractError(std::string("contrastive_loss: ") + which + " row " +
                            std::to_string(r) + " has norm " + format_double(norm) +
                            ", expected unit length");
      }
    }
  };
  check_unit_rows(v, "zv");
  check_unit_rows(t, "zt");

  const Tensor& tau_value = tape.value(tau);
  if (tau_value.size() != 1) throw ShapeError("contrastive_loss: tau must be a scalar");
  const double tv = tau_value.at(0, 0);
  if (!(tv >= kTauMin - 1e-9 && tv <= kTauMax + 1e-9)) {
    throw ContractError("contrastive_loss: temperature " + format_double(tv) + " outside [" +
                        format_double(kTauMin) + ", " + format_double(kTauMax) + "]");
  }

  ValueId logits = tape.mul_scalar(tape.matmul(zv, tape.transpose(zt)), tape.reciprocal(tau));
  ValueId row_lse = tape.logsumexp_rows(logits);
  ValueId col_lse = tape.logsumexp_rows(tape.transpose(logits));
  ValueId positives = tape.diag(logits);
  ValueId per_pair = tape.add(tape.add(row_lse, col_lse), tape.scale(positives, -2.0));
  return tape.scale(tape.weighted_sum(per_pair, c), 1.0 / (2.0 * static_cast<double>(B)));
}

double contrastive_loss_value(const Tensor& zv, const Tensor& zt, const std::vector<double>& c,
                              double tau) {
  Tape tape;
  ValueId loss = contrastive_loss(tape, tape.leaf(zv), tape.leaf(zt), c,
                                  tape.leaf(Tensor::filled({1, 1}, tau)));
  return tape.value(loss).at(0, 0);
}

// --- optimizer ------------------------------------------------------------------

namespace {

bool is_head_param(const std::string& name) {
  return name.rfind("pooler.", 0) == 0 || name.rfind("proj_", 0) == 0;
}

}  // namespace

AdamW::AdamW(AdamWConfig cfg, std::vector<NamedTensor> params)
    : cfg_(cfg), params_(std::move(params)) {
  if (!(cfg_.base_lr >= 0.0)) throw DomainError("learning rate must be nonnegative");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw DomainError("adam betas must lie in [0, 1)");
  }
  for (const NamedTensor& p : params_) {
    if (p.tensor == nullptr || !p.tensor->defined()) {
      throw ContractError("optimizer parameter " + p.name + " is undefined");
    }
    m_.emplace_back(p.tensor->size(), 0.0);
    v_.emplace_back(p.tensor->size(), 0.0);
    rate_.push_back(cfg_.base_lr * (is_head_param(p.name) ? cfg_.head_lr_multiplier : 1.0));
    decay_.push_back(p.name != "log_tau");
  }
}

void AdamW::step(const std::vector<Tensor>& grads, double lr_scale) {
  if (grads.size() != params_.size()) {
    throw ContractError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params_[i].tensor)) {
      throw ContractError("gradient shape mismatch for " + params_[i].name);
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const double lr = rate_[i] * lr_scale;
    auto data = params_[i].tensor->data();
    const auto& gdata = grads[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = gdata[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      const double decay = decay_[i] ? cfg_.weight_decay * data[j] : 0.0;
      data[j] -= lr * (update + decay);
    }
  }
}

// --- training -------------------------------------------------------------------

ValueId build_batch_loss(Tape& tape, TapeBindings& reg, const AlignmentModel& model,
                         const std::vector<const TrainSample*>& batch,
                         const std::vector<double>& weights) {
  const std::size_t B = batch.size();
  if (B < 2) throw DomainError("training needs at least 2 pairs per batch");
  for (const TrainSample* s : batch) {
    if (s == nullptr) throw ContractError("null sample in batch");
  }

  BoundEncoder vision = bind_encoder(tape, model.vision, &reg, "vision");
  BoundEncoder text = bind_encoder(tape, model.text, &reg, "text");
  BoundPooler pooler = bind_pooler(tape, model.pooler, &reg, "pooler");
  BoundProjection proj_v = bind_projection(tape, model.proj_v, &reg, "proj_v");
  BoundProjection proj_t = bind_projection(tape, model.proj_t, &reg, "proj_t");
  ValueId log_tau = reg.bind(tape, "log_tau", model.log_tau);

  std::vector<ValueId> pooled_rows, text_rows;
  pooled_rows.reserve(B);
  text_rows.reserve(B);
  for (const TrainSample* s : batch) {
    ValueId features = encode_video_frames(tape, vision, s->frames);
    pooled_rows.push_back(pool(tape, pooler, features).pooled);
    text_rows.push_back(encode_text(tape, text, s->tokens));
  }
  ValueId zv = project_rows(tape, proj_v, tape.concat_rows(pooled_rows));
  ValueId zt = project_rows(tape, proj_t, tape.concat_rows(text_rows));
  ValueId tau = tape.exp(log_tau);
  return contrastive_loss(tape, zv, zt, weights, tau);
}

double train_step(AlignmentModel& model, const std::vector<const TrainSample*>& batch,
                  AdamW& optimizer, const TrainStepOptions& options) {
  const std::size_t B = batch.size();
  if (B < 2) throw DomainError("training needs at least 2 pairs per batch");

  std::vector<double> weights(B, 1.0);
  if (options.use_confidence) {
    std::vector<double> c(B);
    for (std::size_t i = 0; i < B; ++i) {
      if (batch[i] == nullptr) throw ContractError("null sample in batch");
      c[i] = batch[i]->confidence;
    }
    weights = rescale_weights(c, options.rescale);
  }

  // Divergence shows up first as parameters going non-finite; refuse to build
  // a graph on top of them so the step aborts with the model untouched.
  for (const NamedTensor& p : optimizer.params()) {
    check_finite_or_throw(*p.tensor, "parameter " + p.name);
  }

  Tape tape;
  TapeBindings reg;
  ValueId loss = build_batch_loss(tape, reg, model, batch, weights);

  const double loss_value = tape.value(loss).at(0, 0);
  if (!std::isfinite(loss_value)) {
    throw NumericError("training loss is not finite; step aborted");
  }
  tape.backward(loss);

  std::vector<Tensor> grads;
  grads.reserve(optimizer.params().size());
  for (const NamedTensor& p : optimizer.params()) {
    ValueId id = reg.find(p.name);
    if (!id.valid()) {
      throw ContractError("optimizer parameter " + p.name + " is not part of the training graph");
    }
    Tensor g = tape.grad(id);
    check_finite_or_throw(g, "gradient of " + p.name);
    grads.push_back(std::move(g));
  }
  optimizer.step(grads, options.lr_scale);

  double& lt = model.log_tau.at(0, 0);
  lt = std::clamp(lt, std::log(kTauMin), std::log(kTauMax));
  return loss_value;
}

TrainResult train_model(AlignmentModel& model, const std::vector<TrainSample>& samples,
                        const TrainLoopOptions& options) {
  if (samples.size() < 2) throw DomainError("training needs at least 2 samples");
  if (options.batch_size < 2) throw DomainError("batch size must be at least 2");
  if (options.epochs < 1) throw DomainError("epochs must be at least 1");

  const std::size_t N = samples.size();
  const std::size_t B = static_cast<std::size_t>(options.batch_size);
  const std::size_t full = N / B;
  const std::size_t rem = N % B;
  const std::size_t per_epoch = full + (rem >= 2 ? 1 : 0);
  const std::size_t total_steps = per_epoch * static_cast<std::size_t>(options.epochs);

  AdamW optimizer(options.optim, trainable_params(model));
  Rng shuffle_root(options.shuffle_seed);

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng epoch_rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);

    for (std::size_t start = 0; start < N; start += B) {
      const std::size_t size = std::min(B, N - start);
      if (size < 2) continue;  // a single pair has no negatives
      std::vector<const TrainSample*> batch;
      batch.reserve(size);
      for (std::size_t i = 0; i < size; ++i) batch.push_back(&samples[order[start + i]]);

      const double lr_scale =
          0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                static_cast<double>(total_steps)));
      TrainStepOptions step_options;
      step_options.lr_scale = lr_scale;
      step_options.use_confidence = options.use_confidence;
      step_options.rescale = options.rescale;

      const double tau_used = temperature(model);
      const double loss = train_step(model, batch, optimizer, step_options);
      result.log.push_back({step, loss, tau_used, options.optim.base_lr * lr_scale});
      ++step;
    }
  }
  result.steps = step;
  return result;
}

void write_loss_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "step,loss,tau,lr\n";
  for (const TrainLogRow& row : log) {
    out << row.step << ',' << format_double(row.loss) << ',' << format_double(row.tau) << ','
        << format_double(row.lr) << "\n";
  }
  if (!out) throw IoError("write_loss_csv: stream write failed");
}

}  // namespace lim
