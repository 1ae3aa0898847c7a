#include "lim/evalkit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lim/confidence.hpp"
#include "lim/error.hpp"
#include "lim/pooling.hpp"

namespace lim {
namespace {

void check_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double norm = 0.0;
    for (double v : t.row_span(r)) norm += v * v;
    if (std::fabs(std::sqrt(norm) - 1.0) > 1e-6) {
      throw ContractError(std::string(what) + " row " + std::to_string(r) +
                          " is not unit-norm");
    }
  }
}

// Argmax with the lowest index winning ties.
int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i) {
    if (row[static_cast<std::size_t>(i)] > row[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

void check_labels(const std::vector<int>& labels, int num_classes, const char* what) {
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw ContractError(std::string(what) + " label " + std::to_string(label) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

// --- prompt sets -----------------------------------------------------------------

PhasePromptSet build_prompt_set(const AlignmentModel& model, const ClassPrompts& classes) {
  if (classes.size() < 2) throw DomainError("a prompt set needs at least 2 classes");

  PhasePromptSet set;
  set.embeddings = Tensor({classes.size(), static_cast<std::size_t>(model.cfg.proj_dim)});
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& [name, texts] = classes[k];
    if (name.empty()) throw DomainError("class names must be nonempty");
    if (texts.empty()) {
      throw DomainError("class " + name + " has no prompts");
    }
    Tensor mean({static_cast<std::size_t>(model.cfg.proj_dim)});
    for (const std::string& text : texts) {
      const TokenSequence tokens = tokenize(text, model.cfg.vocab);
      if (tokens.content().empty()) {
        throw DomainError("prompt for class " + name + " has no words: \"" + text + "\"");
      }
      const Tensor z = embed_text(model, tokens);
      for (std::size_t j = 0; j < mean.size(); ++j) mean.data()[j] += z.at(0, j);
    }
    for (double& v : mean.data()) v /= static_cast<double>(texts.size());
    const Tensor unit = l2_normalize(mean);
    std::copy(unit.data().begin(), unit.data().end(),
              set.embeddings.row_span(k).begin());
    set.class_names.push_back(name);
    set.prompts.push_back(texts);
  }
  return set;
}

void write_prompt_file(const std::string& path, const ClassPrompts& classes) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, texts] : classes) j[name] = texts;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

ClassPrompts read_prompt_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(buffer.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ContractError("prompt file " + path + " is not a JSON object");
  }
  ClassPrompts classes;  // nlohmann objects iterate by sorted key: stable indices
  for (const auto& [name, value] : j.items()) {
    if (!value.is_array()) {
      throw ContractError("prompt file class " + name + " must map to an array");
    }
    std::vector<std::string> texts;
    for (const auto& entry : value) {
      if (!entry.is_string()) {
        throw ContractError("prompt file class " + name + " holds a non-string prompt");
      }
      texts.push_back(entry.get<std::string>());
    }
    classes.emplace_back(name, std::move(texts));
  }
  return classes;
}

// --- zero-shot -------------------------------------------------------------------

int zero_shot_classify(const Tensor& clip_embedding, const PhasePromptSet& prompts) {
  if (!clip_embedding.defined() || clip_embedding.rows() != 1) {
    throw ShapeError("zero-shot expects one [1 x D] clip embedding");
  }
  if (prompts.embeddings.rows() < 2) throw DomainError("a prompt set needs at least 2 classes");
  if (prompts.embeddings.cols() != clip_embedding.cols()) {
    throw ShapeError("clip embedding width " + std::to_string(clip_embedding.cols()) +
                     " does not match prompt width " +
                     std::to_string(prompts.embeddings.cols()));
  }
  check_unit_rows(clip_embedding, "clip embedding");
  check_unit_rows(prompts.embeddings, "prompt embedding");

  std::vector<double> scores(prompts.embeddings.rows(), 0.0);
  for (std::size_t k = 0; k < prompts.embeddings.rows(); ++k) {
    for (std::size_t j = 0; j < clip_embedding.cols(); ++j) {
      scores[k] += clip_embedding.at(0, j) * prompts.embeddings.at(k, j);
    }
  }
  return argmax_row(scores);
}

// --- linear probe ----------------------------------------------------------------

namespace {
// X * W^T + b, one logit row per feature row.
Tensor probe_logits(const LinearClassifier& classifier, const Tensor& features) {
  Tensor logits = matmul(features, transpose(classifier.weights));
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t c = 0; c < logits.cols(); ++c) logits.at(i, c) += classifier.bias.at(0, c);
  }
  return logits;
}

// Row-wise stable softmax probabilities of the logits.
Tensor probe_probabilities(const LinearClassifier& classifier, const Tensor& features) {
  Tensor probs = probe_logits(classifier, features);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double lse = detail::logsumexp_span(probs.row_span(i));
    for (double& v : probs.row_span(i)) v = std::exp(v - lse);
  }
  return probs;
}

void validate_feature_set(const LabeledFeatureSet& data, int num_classes) {
  if (!data.features.defined()) throw DomainError("feature set is undefined");
  if (data.features.rows() != data.labels.size()) {
    throw ShapeError("feature rows " + std::to_string(data.features.rows()) +
                     " do not match " + std::to_string(data.labels.size()) + " labels");
  }
  check_labels(data.labels, num_classes, "feature set");
}
}  // namespace

LinearClassifier linear_probe_fit(const LabeledFeatureSet& train, int num_classes,
                                  int epochs, double lr) {
  if (num_classes < 2) throw DomainError("probe needs at least 2 classes");
  if (epochs < 0 || !(lr >= 0.0)) throw DomainError("probe epochs and lr must be nonnegative");
  validate_feature_set(train, num_classes);
  const std::size_t n = train.features.rows();
  const std::size_t d = train.features.cols();
  const auto k = static_cast<std::size_t>(num_classes);
  if (n < k) throw DomainError("probe needs at least one sample per class");

  std::vector<bool> seen(k, false);
  for (int label : train.labels) seen[static_cast<std::size_t>(label)] = true;
  for (std::size_t c = 0; c < k; ++c) {
    if (!seen[c]) {
      throw DegenerateInputError("class " + std::to_string(c) +
                                 " is absent from the training labels");
    }
  }

  LinearClassifier classifier{Tensor({k, d}), Tensor({1, k})};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Tensor probs = probe_probabilities(classifier, train.features);
    // Cross-entropy gradient: residual = (probs - one_hot) / N.
    Tensor residual = probs;
    for (std::size_t i = 0; i < n; ++i) {
      residual.at(i, static_cast<std::size_t>(train.labels[i])) -= 1.0;
    }
    for (double& v : residual.data()) v /= static_cast<double>(n);
    const Tensor grad_w = matmul(transpose(residual), train.features);  // [K x d]
    for (std::size_t i = 0; i < grad_w.data().size(); ++i) {
      classifier.weights.data()[i] -= lr * grad_w.data()[i];
    }
    for (std::size_t c = 0; c < k; ++c) {
      double column = 0.0;
      for (std::size_t i = 0; i < n; ++i) column += residual.at(i, c);
      classifier.bias.at(0, c) -= lr * column;
    }
  }
  return classifier;
}

std::vector<int> linear_probe_predict(const LinearClassifier& classifier,
                                      const Tensor& features) {
  if (!features.defined()) throw DomainError("features are undefined");
  if (features.cols() != classifier.weights.cols()) {
    throw ShapeError("feature width " + std::to_string(features.cols()) +
                     " does not match probe width " +
                     std::to_string(classifier.weights.cols()));
  }
  const Tensor logits = probe_logits(classifier, features);
  std::vector<int> preds;
  preds.reserve(features.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) preds.push_back(argmax_row(logits.row_span(i)));
  return preds;
}

double linear_probe_loss(const LinearClassifier& classifier, const LabeledFeatureSet& data) {
  validate_feature_set(data, static_cast<int>(classifier.weights.rows()));
  if (data.labels.empty()) throw DomainError("loss of an empty feature set");
  const Tensor logits = probe_logits(classifier, data.features);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    total += detail::logsumexp_span(logits.row_span(i)) -
             logits.at(i, static_cast<std::size_t>(data.labels[i]));
  }
  return total / static_cast<double>(logits.rows());
}

Tensor probe_feature(const AlignmentModel& model, const Tensor& frames) {
  return pool(model.pooler, frame_features(model, frames)).pooled;
}

// --- metrics ---------------------------------------------------------------------

EvalMetrics metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                    int num_classes) {
  if (preds.empty()) throw DomainError("metrics of an empty prediction set");
  if (preds.size() != labels.size()) {
    throw ShapeError(std::to_string(preds.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 1) throw DomainError("metrics need at least one class");
  check_labels(preds, num_classes, "prediction");
  check_labels(labels, num_classes, "reference");

  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) {
      ++correct;
      tp[static_cast<std::size_t>(preds[i])] += 1.0;
    } else {
      fp[static_cast<std::size_t>(preds[i])] += 1.0;
      fn[static_cast<std::size_t>(labels[i])] += 1.0;
    }
  }

  EvalMetrics result;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  for (std::size_t c = 0; c < k; ++c) {
    const double precision = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    result.per_class_f1.push_back(f1);
    result.macro_f1 += f1;
  }
  result.macro_f1 /= static_cast<double>(k);
  return result;
}

// --- protocols -------------------------------------------------------------------

EvalReport evaluate_zero_shot(const AlignmentModel& model,
                              const std::vector<TrainSample>& clips,
                              const PhasePromptSet& prompts) {
  if (clips.empty()) throw DomainError("zero-shot evaluation needs at least one clip");
  const auto k = static_cast<int>(prompts.embeddings.rows());
  std::vector<int> preds, labels;
  for (const TrainSample& clip : clips) {
    preds.push_back(zero_shot_classify(embed_clip(model, clip.frames), prompts));
    labels.push_back(clip.label);
  }
  check_labels(labels, k, "clip");
  return {"zero-shot", metrics(preds, labels, k)};
}

EvalReport evaluate_linear_probe(const AlignmentModel& model,
                                 const std::vector<TrainSample>& train,
                                 const std::vector<TrainSample>& test, int num_classes,
                                 int epochs, double lr) {
  if (train.empty() || test.empty()) {
    throw DomainError("linear probe needs nonempty train and test splits");
  }
  auto featurize = [&](const std::vector<TrainSample>& clips) {
    LabeledFeatureSet set;
    set.features = Tensor({clips.size(), static_cast<std::size_t>(model.cfg.vision_width)});
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const Tensor f = probe_feature(model, clips[i].frames);
      std::copy(f.data().begin(), f.data().end(), set.features.row_span(i).begin());
      set.labels.push_back(clips[i].label);
    }
    return set;
  };
  const LabeledFeatureSet train_set = featurize(train);
  const LabeledFeatureSet test_set = featurize(test);
  const LinearClassifier probe = linear_probe_fit(train_set, num_classes, epochs, lr);
  const std::vector<int> preds = linear_probe_predict(probe, test_set.features);
  return {"linear-probe", metrics(preds, test_set.labels, num_classes)};
}

// --- results file ----------------------------------------------------------------

std::string results_json(const EvalReport& report) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  j["accuracy"] = report.scores.accuracy;
  j["macro_f1"] = report.scores.macro_f1;
  j["per_class_f1"] = report.scores.per_class_f1;
  return j.dump(2);
}

EvalReport parse_results_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("protocol") ||
      !j.contains("accuracy") || !j.contains("macro_f1") || !j.contains("per_class_f1") ||
      !j["protocol"].is_string() || !j["accuracy"].is_number() || !j["macro_f1"].is_number() ||
      !j["per_class_f1"].is_array()) {
    throw ContractError("malformed results file");
  }
  EvalReport report;
  report.protocol = j["protocol"].get<std::string>();
  report.scores.accuracy = j["accuracy"].get<double>();
  report.scores.macro_f1 = j["macro_f1"].get<double>();
  for (const auto& entry : j["per_class_f1"]) {
    if (!entry.is_number()) throw ContractError("malformed results file");
    report.scores.per_class_f1.push_back(entry.get<double>());
  }
  return report;
}

void write_results_file(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << results_json(report) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace lim
