#pragma once

#include <cstdint>

#include "lim/adapters.hpp"
#include "lim/tape.hpp"
#include "lim/tensor.hpp"

namespace lim {

// Additive temporal attention over frame embeddings: score each frame with
// w2 tanh(w1 h_t), softmax across frames, return the attention-weighted sum.
// No biases anywhere.
struct TemporalPooler {
  Tensor w1;  // [d/2 x d], N(0, 1/d)
  Tensor w2;  // [1 x d/2], N(0, 2/d)
};

// d must be even and at least 2 so the internal width d/2 is a positive
// integer.
TemporalPooler make_temporal_pooler(int d, std::uint64_t seed);

struct BoundPooler {
  ValueId w1_t, w2_t;  // transposed weights on the tape
};

BoundPooler bind_pooler(Tape& tape, const TemporalPooler& pooler, TapeBindings* reg,
                        const std::string& prefix);

struct PoolResult {
  ValueId pooled;     // [1 x d]
  ValueId attention;  // [1 x T], nonnegative, sums to 1
};

// frames is [T x d] with T >= 1.
PoolResult pool(Tape& tape, const BoundPooler& pooler, ValueId frames);

struct PoolValues {
  Tensor pooled;
  Tensor attention;
};

PoolValues pool(const TemporalPooler& pooler, const Tensor& frames);

// Trainable tensors, named "<prefix>.w1" / "<prefix>.w2".
void collect_pooler_params(TemporalPooler& pooler, const std::string& prefix,
                           std::vector<NamedTensor>& out);

}  // namespace lim
