#include "lim/confidence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "lim/error.hpp"

namespace lim {

// --- scorer -----------------------------------------------------------------

ToyCountScorer::ToyCountScorer(int vocab, std::vector<double> probabilities)
    : vocab_(vocab), probs_(std::move(probabilities)) {
  if (vocab_ < 1) throw DomainError("scorer vocabulary must be positive");
  if (probs_.size() != static_cast<std::size_t>(vocab_)) {
    throw ContractError("scorer probability table size does not match vocabulary");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("scorer probabilities must lie in [0,1]");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ContractError("scorer probabilities must sum to 1");
  }
}

double ToyCountScorer::probability(int token) const {
  if (token < 0 || token >= vocab_) {
    throw VocabularyError("token id " + std::to_string(token) + " outside vocabulary of " +
                          std::to_string(vocab_));
  }
  return probs_[static_cast<std::size_t>(token)];
}

double ToyCountScorer::score(const TokenSequence& sentence, std::size_t masked_index,
                             int original) const {
  if (masked_index >= sentence.length()) {
    throw DomainError("masked index " + std::to_string(masked_index) +
                      " outside sentence of length " + std::to_string(sentence.length()));
  }
  return probability(original);  // context-free by construction
}

ToyCountScorer fit_toy_scorer(const std::vector<TokenSequence>& corpus, int vocab) {
  if (vocab < 1) throw DomainError("scorer vocabulary must be positive");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(vocab), 0);
  std::uint64_t total = 0;
  for (const TokenSequence& sentence : corpus) {
    for (int id : sentence.content()) {
      if (id < 0 || id >= vocab) {
        throw VocabularyError("corpus token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(vocab));
      }
      ++counts[static_cast<std::size_t>(id)];
      ++total;
    }
  }
  std::vector<double> probs(counts.size());
  const double denom = static_cast<double>(total) + static_cast<double>(vocab);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    probs[i] = (static_cast<double>(counts[i]) + 1.0) / denom;
  }
  return ToyCountScorer(vocab, std::move(probs));
}

double confidence_score(const TokenSequence& sentence, const MaskedScorer& scorer) {
  const std::size_t length = sentence.length();
  if (length == 0) throw DomainError("confidence_score: sentence has no content tokens");
  double total = 0.0;
  for (std::size_t k = 0; k < length; ++k) {
    const double p = scorer.score(sentence, k, sentence.content()[k]);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractError("masked scorer returned " + std::to_string(p) +
                          ", outside [0,1], at position " + std::to_string(k));
    }
    total += p;
  }
  const double mean = total / static_cast<double>(length);
  return std::clamp(mean, kConfidenceFloor, 1.0);
}

// --- rescaling ---------------------------------------------------------------

RescaleMode parse_rescale_mode(const std::string& name) {
  if (name == "none") return RescaleMode::kNone;
  if (name == "batch-mean") return RescaleMode::kBatchMean;
  throw ConfigError("unknown rescale mode \"" + name + "\" (expected none or batch-mean)");
}

std::string to_string(RescaleMode mode) {
  return mode == RescaleMode::kNone ? "none" : "batch-mean";
}

std::vector<double> rescale_weights(const std::vector<double>& confidences, RescaleMode mode) {
  for (double c : confidences) {
    if (!(c > 0.0 && c <= 1.0)) {
      throw ContractError("confidence " + std::to_string(c) + " outside (0,1]");
    }
  }
  if (mode == RescaleMode::kNone || confidences.empty()) return confidences;
  double mean = 0.0;
  for (double c : confidences) mean += c;
  mean /= static_cast<double>(confidences.size());
  std::vector<double> weights(confidences.size());
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    weights[i] = std::min(1.0, confidences[i] / mean);
  }
  return weights;
}

// --- tokenizer -----------------------------------------------------------------

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

int hash_word(const std::string& word, int vocab) {
  const int buckets = vocab - kFirstWordTokenId;
  if (buckets < 1) {
    throw DomainError("vocabulary of " + std::to_string(vocab) +
                      " leaves no room for word buckets");
  }
  // FNV-1a, 64-bit.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : word) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return kFirstWordTokenId + static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

TokenSequence tokenize(const std::string& text, int vocab) {
  std::vector<int> ids;
  for (const std::string& word : split_words(text)) {
    ids.push_back(hash_word(word, vocab));
  }
  return TokenSequence::from_content(std::move(ids));
}

// --- report file -----------------------------------------------------------------

void write_confidence_report(std::ostream& out, const std::vector<ConfidenceRecord>& records) {
  for (const ConfidenceRecord& r : records) {
    nlohmann::json line;
    line["clip_id"] = r.clip_id;
    line["token_count"] = r.token_count;
    line["confidence"] = r.confidence;
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write_confidence_report: stream write failed");
}

std::vector<ConfidenceRecord> read_confidence_report(std::istream& in) {
  std::vector<ConfidenceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("confidence report line " + std::to_string(line_no) +
                          " is not valid JSON: " + e.what());
    }
    if (!parsed.is_object() || !parsed.contains("clip_id") || !parsed.contains("token_count") ||
        !parsed.contains("confidence") || !parsed["clip_id"].is_string() ||
        !parsed["token_count"].is_number_unsigned() || !parsed["confidence"].is_number()) {
      throw ContractError("confidence report line " + std::to_string(line_no) +
                          " must hold {clip_id, token_count, confidence}");
    }
    ConfidenceRecord r;
    r.clip_id = parsed["clip_id"].get<std::string>();
    r.token_count = parsed["token_count"].get<std::size_t>();
    r.confidence = parsed["confidence"].get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace lim
