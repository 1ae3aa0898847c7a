#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lim/alignment.hpp"
#include "lim/tensor.hpp"

namespace lim {

// ---------------------------------------------------------------------------
// Prompt sets
// ---------------------------------------------------------------------------

// A classification head built from text: one embedding row per class, unit
// norm, rows indexed by class.
struct PhasePromptSet {
  std::vector<std::string> class_names;            // size K >= 2
  std::vector<std::vector<std::string>> prompts;   // texts behind each row
  Tensor embeddings;                               // [K x D], unit rows
};

// Class names mapped to their prompt texts, ordered by class index.
using ClassPrompts = std::vector<std::pair<std::string, std::vector<std::string>>>;

// Embed every prompt with the model's text tower, average the embeddings
// within each class, and re-normalize the mean to unit length.
PhasePromptSet build_prompt_set(const AlignmentModel& model, const ClassPrompts& classes);

// Prompt file: a JSON object mapping class name -> array of prompt strings.
// Reading orders classes by name so indices are reproducible.
void write_prompt_file(const std::string& path, const ClassPrompts& classes);
ClassPrompts read_prompt_file(const std::string& path);

// ---------------------------------------------------------------------------
// Zero-shot classification
// ---------------------------------------------------------------------------

// Argmax of cosine similarity between one unit clip embedding [1 x D] and the
// prompt rows; ties resolve to the lowest class index.
int zero_shot_classify(const Tensor& clip_embedding, const PhasePromptSet& prompts);

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

// Frozen features with integer labels in [0, K).
struct LabeledFeatureSet {
  Tensor features;          // [N x d]
  std::vector<int> labels;  // size N
};

struct LinearClassifier {
  Tensor weights;  // [K x d]
  Tensor bias;     // [1 x K]
};

// Multinomial logistic regression by full-batch gradient descent with
// cross-entropy loss from zero initialization: deterministic, no seed.
// Every class in [0, K) must appear in the training labels.
LinearClassifier linear_probe_fit(const LabeledFeatureSet& train, int num_classes,
                                  int epochs = 500, double lr = 0.1);

// Argmax class per feature row; ties resolve to the lowest index.
std::vector<int> linear_probe_predict(const LinearClassifier& classifier,
                                      const Tensor& features);

// Mean cross-entropy of the classifier on a feature set (diagnostic).
double linear_probe_loss(const LinearClassifier& classifier, const LabeledFeatureSet& data);

// The frozen per-clip feature the probe consumes: temporally pooled vision
// features, before projection.
Tensor probe_feature(const AlignmentModel& model, const Tensor& frames);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;  // size K
};

// accuracy = correct / N; macro F1 averages per-class 2PR/(P+R) over all K
// classes, scoring 0 for a class whose precision and recall are both zero.
EvalMetrics metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                    int num_classes);

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string protocol;  // "zero-shot" or "linear-probe"
  EvalMetrics scores;
};

// Embed each clip, classify against the prompts, and score against the
// sample labels (which must sit in [0, K)).
EvalReport evaluate_zero_shot(const AlignmentModel& model,
                              const std::vector<TrainSample>& clips,
                              const PhasePromptSet& prompts);

// Fit a probe on frozen pooled features of the train split and score the
// test split.
EvalReport evaluate_linear_probe(const AlignmentModel& model,
                                 const std::vector<TrainSample>& train,
                                 const std::vector<TrainSample>& test, int num_classes,
                                 int epochs = 500, double lr = 0.1);

// Results file: JSON {protocol, accuracy, macro_f1, per_class_f1}.
std::string results_json(const EvalReport& report);
EvalReport parse_results_json(const std::string& json_text);
void write_results_file(const std::string& path, const EvalReport& report);

}  // namespace lim
