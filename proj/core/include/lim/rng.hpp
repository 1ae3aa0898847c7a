#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lim {

// SplitMix64 mixing step; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random source. Every stochastic choice in the library flows
// through one of these, seeded directly or via fork(), so a run is a pure
// function of its configured seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal(double mean = 0.0, double stddev = 1.0);
  std::uint64_t integer(std::uint64_t bound);  // [0, bound), bound >= 1
  bool bernoulli(double p);

  // Child generator with a stream id; children with distinct ids are
  // independent of each other and of this generator's future output.
  Rng fork(std::uint64_t stream) const;

  // Fisher-Yates; pinned here rather than std::shuffle so the permutation is
  // a stable function of the seed alone.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> unit_normal_{0.0, 1.0};
};

}  // namespace lim
