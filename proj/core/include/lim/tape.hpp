#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lim/tensor.hpp"

namespace lim {

// Handle to a node on a Tape. Only meaningful for the tape that produced it.
struct ValueId {
  std::uint32_t index = kInvalid;
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  bool valid() const { return index != kInvalid; }
  friend bool operator==(ValueId a, ValueId b) { return a.index == b.index; }
};

// Eager computation tape. Each operation computes its value immediately and
// records an entry; backward() replays the entries in reverse execution order
// applying one explicit gradient rule per operation. There is no graph
// rewriting or scheduling: execution order is the only order.
//
// Tape operations work on rank-2 tensors; scalars are shape {1,1}. Row-wise
// operations apply the corresponding rank-1 primitive to every row.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ValueId leaf(Tensor value);

  // unary
  ValueId tanh(ValueId a);
  ValueId gelu(ValueId a);
  ValueId exp(ValueId a);
  ValueId reciprocal(ValueId a);
  ValueId scale(ValueId a, double k);
  ValueId clamp(ValueId a, double lo, double hi);

  // binary
  ValueId add(ValueId a, ValueId b);             // same shape
  ValueId mul(ValueId a, ValueId b);             // elementwise, same shape
  ValueId mul_scalar(ValueId a, ValueId s);      // s has size 1
  ValueId add_row_broadcast(ValueId a, ValueId bias);  // bias is [1 x n]
  ValueId matmul(ValueId a, ValueId b);

  // structure
  ValueId transpose(ValueId a);
  ValueId concat_rows(std::span<const ValueId> parts);  // stack along rows
  ValueId slice_row(ValueId a, std::size_t row);        // [1 x n] view copy
  ValueId mean_rows(ValueId a);                         // [m x n] -> [1 x n]

  // row-wise
  ValueId softmax_rows(ValueId a);
  ValueId layer_norm_rows(ValueId a);
  ValueId l2_normalize_rows(ValueId a);
  ValueId logsumexp_rows(ValueId a);  // [m x n] -> [m x 1]

  // reductions
  ValueId diag(ValueId a);  // [n x n] -> [n x 1]
  ValueId sum(ValueId a);   // -> scalar
  ValueId weighted_sum(ValueId a, std::vector<double> weights);  // -> scalar

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node at or
  // below root in execution order. root must hold exactly one element.
  // May be called once per tape.
  void backward(ValueId root);

  const Tensor& value(ValueId id) const;
  // Gradient shaped like the node's value; zeros where nothing flowed.
  Tensor grad(ValueId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kTanh,
    kGelu,
    kExp,
    kReciprocal,
    kScale,
    kClamp,
    kAdd,
    kMul,
    kMulScalar,
    kAddRowBroadcast,
    kMatMul,
    kTranspose,
    kConcatRows,
    kSliceRow,
    kMeanRows,
    kSoftmaxRows,
    kLayerNormRows,
    kL2NormalizeRows,
    kLogSumExpRows,
    kDiag,
    kSum,
    kWeightedSum,
  };

  struct Node {
    Op op;
    Tensor value;
    std::vector<double> grad;      // sized lazily during backward
    std::vector<ValueId> inputs;
    double p0 = 0.0, p1 = 0.0;     // op parameters (scale factor, clamp bounds, row index)
    std::vector<double> weights;   // kWeightedSum only
  };

  ValueId push(Node node);
  Node& node(ValueId id);
  const Node& node(ValueId id) const;
  std::vector<double>& grad_buffer(ValueId id);
  void backward_node(std::size_t index);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace lim
