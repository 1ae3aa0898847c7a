#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "lim/adapters.hpp"

namespace lim {

// Reliability scoring for narratives: mask each content token in turn, ask a
// scorer for the probability of recovering it, and average.

inline constexpr double kConfidenceFloor = 1e-6;

// Masked-recovery probability model. `masked_index` addresses content tokens
// (0-based, so it names sentence.content()[masked_index]); `original` is the
// token hidden there. Implementations must not read the token at the masked
// position — every other position is visible context — and must return a
// probability in [0,1], deterministically for fixed inputs.
class MaskedScorer {
 public:
  virtual ~MaskedScorer() = default;
  virtual double score(const TokenSequence& sentence, std::size_t masked_index,
                       int original) const = 0;
};

// Context-free stand-in for a masked language model: Laplace-smoothed unigram
// probabilities over a fixed vocabulary, P(w) = (count(w)+1)/(N+V).
class ToyCountScorer : public MaskedScorer {
 public:
  ToyCountScorer(int vocab, std::vector<double> probabilities);

  double score(const TokenSequence& sentence, std::size_t masked_index,
               int original) const override;
  double probability(int token) const;
  int vocab() const { return vocab_; }

 private:
  int vocab_;
  std::vector<double> probs_;  // size vocab_, sums to 1
};

// V >= 1; every corpus token must lie in [0, V).
ToyCountScorer fit_toy_scorer(const std::vector<TokenSequence>& corpus, int vocab);

// Mean recovery probability over all content tokens, clamped to
// [kConfidenceFloor, 1]. Empty sentences are a domain error; a scorer output
// outside [0,1] is a contract error.
double confidence_score(const TokenSequence& sentence, const MaskedScorer& scorer);

// --- batch rescaling ---------------------------------------------------------

// How raw confidences become loss weights. kNone keeps them as-is; kBatchMean
// divides by the batch mean and caps at 1, which restores useful dynamic range
// when a weak scorer makes every raw score small.
enum class RescaleMode { kNone, kBatchMean };

RescaleMode parse_rescale_mode(const std::string& name);  // "none" | "batch-mean"
std::string to_string(RescaleMode mode);

// Weights stay within (0,1]; input confidences must already be in (0,1].
std::vector<double> rescale_weights(const std::vector<double>& confidences, RescaleMode mode);

// --- toy tokenizer -------------------------------------------------------------

// Lowercased maximal runs of ASCII letters and digits; everything else
// separates words.
std::vector<std::string> split_words(const std::string& text);

// Deterministic hash into word ids [kFirstWordTokenId, vocab); ids 0 and 1
// stay reserved for the summary and unknown-token buckets. vocab must exceed
// the reserved range by at least one bucket.
int hash_word(const std::string& word, int vocab);
TokenSequence tokenize(const std::string& text, int vocab);

// --- report file ---------------------------------------------------------------

struct ConfidenceRecord {
  std::string clip_id;
  std::size_t token_count = 0;
  double confidence = 0.0;
};

// JSON lines, one object {clip_id, token_count, confidence} per record.
void write_confidence_report(std::ostream& out, const std::vector<ConfidenceRecord>& records);
std::vector<ConfidenceRecord> read_confidence_report(std::istream& in);

}  // namespace lim
