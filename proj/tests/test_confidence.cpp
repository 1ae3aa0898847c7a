#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "lim/adapters.hpp"
#include "lim/confidence.hpp"
#include "lim/error.hpp"
#include "lim/rng.hpp"

using namespace lim;

namespace {

// Context-free scorer with a fixed probability per token id; defaults to 0.5
// for ids outside the table.
class TableScorer : public MaskedScorer {
 public:
  explicit TableScorer(std::map<int, double> table) : table_(std::move(table)) {}
  double score(const TokenSequence&, std::size_t, int original) const override {
    auto it = table_.find(original);
    return it == table_.end() ? 0.5 : it->second;
  }

 private:
  std::map<int, double> table_;
};

class ConstantScorer : public MaskedScorer {
 public:
  explicit ConstantScorer(double p) : p_(p) {}
  double score(const TokenSequence&, std::size_t, int) const override { return p_; }

 private:
  double p_;
};

}  // namespace

TEST_CASE("confidence is the mean recovery probability") {
  // Single token: the average is the score itself.
  CHECK(confidence_score(TokenSequence::from_content({3}), ConstantScorer(0.8)) == 0.8);

  // Perfect recovery everywhere saturates at the upper bound.
  CHECK(confidence_score(TokenSequence::from_content({3, 4, 5}), ConstantScorer(1.0)) == 1.0);

  // Two tokens scored 0.2 and 0.6 average to 0.4.
  TableScorer scorer({{7, 0.2}, {9, 0.6}});
  CHECK(confidence_score(TokenSequence::from_content({7, 9}), scorer) ==
        doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("confidence clamps into its floor-to-one interval") {
  CHECK(confidence_score(TokenSequence::from_content({3}), ConstantScorer(0.0)) == 1e-6);
  CHECK(confidence_score(TokenSequence::from_content({3}), ConstantScorer(1e-9)) == 1e-6);
  CHECK(confidence_score(TokenSequence::from_content({3}), ConstantScorer(1.0)) == 1.0);
}

TEST_CASE("confidence input and scorer contracts") {
  TokenSequence empty;
  empty.ids = {kSummaryTokenId};
  CHECK_THROWS_AS(confidence_score(empty, ConstantScorer(0.5)), DomainError);
  CHECK_THROWS_AS(confidence_score(TokenSequence::from_content({3}), ConstantScorer(1.5)),
                  ContractError);
  CHECK_THROWS_AS(confidence_score(TokenSequence::from_content({3}), ConstantScorer(-0.1)),
                  ContractError);
}

TEST_CASE("shuffling tokens does not move a context-free score") {
  Rng rng(5);
  std::vector<int> content = {3, 9, 4, 11, 7, 7, 5};
  std::map<int, double> table;
  for (int id : content) table[id] = 0.05 + 0.9 * rng.uniform();
  TableScorer scorer(table);

  const double base = confidence_score(TokenSequence::from_content(content), scorer);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> shuffled = content;
    rng.shuffle(shuffled);
    const double c = confidence_score(TokenSequence::from_content(shuffled), scorer);
    CHECK(std::fabs(c - base) < 1e-12);
  }
}

TEST_CASE("raising one token's recovery probability strictly raises confidence") {
  std::map<int, double> table = {{3, 0.3}, {4, 0.5}, {5, 0.7}};
  TokenSequence sentence = TokenSequence::from_content({3, 4, 5});
  const double before = confidence_score(sentence, TableScorer(table));
  table[4] = 0.6;
  const double after = confidence_score(sentence, TableScorer(table));
  CHECK(after > before);
}

TEST_CASE("unigram fitting follows add-one smoothing") {
  // Corpus "a a b" over a two-token vocabulary: counts 2 and 1, N = 3, so
  // P(a) = 3/5 and P(b) = 2/5.
  std::vector<TokenSequence> corpus = {TokenSequence::from_content({0, 0, 1})};
  ToyCountScorer scorer = fit_toy_scorer(corpus, 2);
  CHECK(scorer.probability(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(scorer.probability(1) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("an empty corpus yields the uniform distribution") {
  ToyCountScorer scorer = fit_toy_scorer({}, 4);
  for (int id = 0; id < 4; ++id) CHECK(scorer.probability(id) == 0.25);

  // Uniform scorer over V: every sentence lands exactly at 1/V.
  CHECK(confidence_score(TokenSequence::from_content({0}), scorer) == 0.25);
  CHECK(confidence_score(TokenSequence::from_content({0, 1, 2, 3}), scorer) == 0.25);
  CHECK(confidence_score(TokenSequence::from_content({3, 3, 3, 3, 3, 1}), scorer) == 0.25);
}

TEST_CASE("fitted probabilities always sum to one") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int vocab = 2 + static_cast<int>(rng.integer(40));
    std::vector<TokenSequence> corpus;
    const std::size_t sentences = rng.integer(5);
    for (std::size_t s = 0; s < sentences; ++s) {
      std::vector<int> content;
      const std::size_t len = 1 + rng.integer(12);
      for (std::size_t i = 0; i < len; ++i) {
        content.push_back(static_cast<int>(rng.integer(static_cast<std::uint64_t>(vocab))));
      }
      corpus.push_back(TokenSequence::from_content(std::move(content)));
    }
    ToyCountScorer scorer = fit_toy_scorer(corpus, vocab);
    double total = 0.0;
    for (int id = 0; id < vocab; ++id) total += scorer.probability(id);
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("fitting and scoring validate their vocabularies") {
  CHECK_THROWS_AS(fit_toy_scorer({}, 0), DomainError);
  std::vector<TokenSequence> corpus = {TokenSequence::from_content({9})};
  CHECK_THROWS_AS(fit_toy_scorer(corpus, 4), VocabularyError);

  ToyCountScorer scorer = fit_toy_scorer({}, 4);
  CHECK_THROWS_AS(scorer.probability(4), VocabularyError);
  CHECK_THROWS_AS(scorer.probability(-1), VocabularyError);
  CHECK_THROWS_AS(scorer.score(TokenSequence::from_content({1}), 3, 1), DomainError);

  CHECK_THROWS_AS(ToyCountScorer(2, {0.5}), ContractError);
  CHECK_THROWS_AS(ToyCountScorer(2, {0.9, 0.3}), ContractError);
}

TEST_CASE("rescale modes parse and round-trip") {
  CHECK(parse_rescale_mode("none") == RescaleMode::kNone);
  CHECK(parse_rescale_mode("batch-mean") == RescaleMode::kBatchMean);
  CHECK_THROWS_AS(parse_rescale_mode("other"), ConfigError);
  CHECK(to_string(RescaleMode::kNone) == "none");
  CHECK(to_string(RescaleMode::kBatchMean) == "batch-mean");
}

TEST_CASE("batch-mean rescaling normalizes to the mean and caps at one") {
  std::vector<double> c = {0.1, 0.2, 0.3};
  std::vector<double> none = rescale_weights(c, RescaleMode::kNone);
  CHECK(none == c);

  std::vector<double> scaled = rescale_weights(c, RescaleMode::kBatchMean);
  REQUIRE(scaled.size() == 3);
  CHECK(scaled[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(scaled[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scaled[2] == 1.0);  // 1.5 capped

  for (double w : scaled) {
    CHECK(w > 0.0);
    CHECK(w <= 1.0);
  }

  CHECK_THROWS_AS(rescale_weights({0.5, 0.0}, RescaleMode::kNone), ContractError);
  CHECK_THROWS_AS(rescale_weights({1.2}, RescaleMode::kBatchMean), ContractError);
  CHECK(rescale_weights({}, RescaleMode::kBatchMean).empty());
}

TEST_CASE("words split on whitespace and punctuation, lowercased") {
  std::vector<std::string> words = split_words("Hello, world!  The 3rd (clip).");
  REQUIRE(words.size() == 5);
  CHECK(words[0] == "hello");
  CHECK(words[1] == "world");
  CHECK(words[2] == "the");
  CHECK(words[3] == "3rd");
  CHECK(words[4] == "clip");

  CHECK(split_words("").empty());
  CHECK(split_words("  ,.;:!?  ").empty());
}

TEST_CASE("tokenizer hashes into the unreserved id range deterministically") {
  const int vocab = 64;
  TokenSequence a = tokenize("Scalpel retracts the tissue", vocab);
  TokenSequence b = tokenize("scalpel RETRACTS the tissue!", vocab);
  CHECK(a.ids == b.ids);
  CHECK(a.length() == 4);
  CHECK(a.ids[0] == kSummaryTokenId);
  for (int id : a.content()) {
    CHECK(id >= kFirstWordTokenId);
    CHECK(id < vocab);
  }

  // Same word, same id; the id is a pure function of the spelling.
  TokenSequence c = tokenize("tissue tissue", vocab);
  CHECK(c.ids[1] == c.ids[2]);
  CHECK(hash_word("tissue", vocab) == c.ids[1]);

  CHECK(tokenize("", vocab).length() == 0);
  CHECK_THROWS_AS(hash_word("x", 2), DomainError);
}

TEST_CASE("confidence reports round-trip through the line format") {
  std::vector<ConfidenceRecord> records = {
      {"clip_0001", 12, 0.173}, {"clip_0002", 7, 1.0}, {"clip_0003", 1, 1e-6}};
  std::ostringstream out;
  write_confidence_report(out, records);

  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);

  std::istringstream in(text);
  std::vector<ConfidenceRecord> loaded = read_confidence_report(in);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].clip_id == records[i].clip_id);
    CHECK(loaded[i].token_count == records[i].token_count);
    CHECK(loaded[i].confidence == records[i].confidence);
  }

  std::istringstream bad("{\"clip_id\": \"x\"}\n");
  CHECK_THROWS_AS(read_confidence_report(bad), ContractError);
  std::istringstream garbage("not json\n");
  CHECK_THROWS_AS(read_confidence_report(garbage), ContractError);
}
