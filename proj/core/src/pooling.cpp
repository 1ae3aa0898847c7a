#include "lim/pooling.hpp"

#include <cmath>

#include "lim/error.hpp"
#include "lim/rng.hpp"

namespace lim {

TemporalPooler make_temporal_pooler(int d, std::uint64_t seed) {
  if (d < 2 || d % 2 != 0) {
    throw DomainError("make_temporal_pooler: width must be even and >= 2, got " +
                      std::to_string(d));
  }
  const auto dd = static_cast<std::size_t>(d);
  const std::size_t hidden = dd / 2;
  Rng rng(seed);
  Rng r1 = rng.fork(1);
  Rng r2 = rng.fork(2);
  TemporalPooler pooler{Tensor::filled({hidden, dd}, 0.0), Tensor::filled({1, hidden}, 0.0)};
  const double s1 = std::sqrt(1.0 / static_cast<double>(d));
  const double s2 = std::sqrt(2.0 / static_cast<double>(d));
  for (double& v : pooler.w1.data()) v = r1.normal(0.0, s1);
  for (double& v : pooler.w2.data()) v = r2.normal(0.0, s2);
  return pooler;
}

BoundPooler bind_pooler(Tape& tape, const TemporalPooler& pooler, TapeBindings* reg,
                        const std::string& prefix) {
  ValueId w1 = reg ? reg->bind(tape, prefix + ".w1", pooler.w1) : tape.leaf(pooler.w1);
  ValueId w2 = reg ? reg->bind(tape, prefix + ".w2", pooler.w2) : tape.leaf(pooler.w2);
  BoundPooler bound;
  bound.w1_t = tape.transpose(w1);
  bound.w2_t = tape.transpose(w2);
  return bound;
}

PoolResult pool(Tape& tape, const BoundPooler& pooler, ValueId frames) {
  const Tensor& f = tape.value(frames);
  if (!f.defined() || f.rank() != 2) {
    throw DomainError("pool: need at least one frame");
  }
  // scores_t: [T x 1] = tanh(frames w1^T) w2^T
  ValueId hidden = tape.tanh(tape.matmul(frames, pooler.w1_t));
  ValueId scores_col = tape.matmul(hidden, pooler.w2_t);  // [T x 1]
  ValueId scores_row = tape.transpose(scores_col);        // [1 x T]
  ValueId attention = tape.softmax_rows(scores_row);      // [1 x T]
  ValueId pooled = tape.matmul(attention, frames);        // [1 x d]
  return PoolResult{pooled, attention};
}

PoolValues pool(const TemporalPooler& pooler, const Tensor& frames) {
  if (!frames.defined()) throw DomainError("pool: need at least one frame");
  Tape tape;
  BoundPooler bound = bind_pooler(tape, pooler, nullptr, "pooler");
  PoolResult out = pool(tape, bound, tape.leaf(frames));
  return PoolValues{tape.value(out.pooled), tape.value(out.attention)};
}

void collect_pooler_params(TemporalPooler& pooler, const std::string& prefix,
                           std::vector<NamedTensor>& out) {
  out.push_back(NamedTensor{prefix + ".w1", &pooler.w1});
  out.push_back(NamedTensor{prefix + ".w2", &pooler.w2});
}

}  // namespace lim
