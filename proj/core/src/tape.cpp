#include "lim/tape.hpp"

#include <algorithm>
#include <cmath>

#include "lim/error.hpp"

namespace lim {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

ValueId Tape::push(Node n) {
  if (backward_done_) throw Error("tape: cannot extend a tape after backward()");
  nodes_.push_back(std::move(n));
  return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(ValueId id) {
  if (!id.valid() || id.index >= nodes_.size()) throw Error("tape: invalid value id");
  return nodes_[id.index];
}

const Tape::Node& Tape::node(ValueId id) const {
  if (!id.valid() || id.index >= nodes_.size()) throw Error("tape: invalid value id");
  return nodes_[id.index];
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

Tensor Tape::grad(ValueId id) const {
  const Node& n = node(id);
  if (n.grad.empty()) return Tensor(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

std::vector<double>& Tape::grad_buffer(ValueId id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

ValueId Tape::leaf(Tensor value) {
  if (!value.defined()) throw ShapeError("tape leaf: tensor is empty");
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::tanh(ValueId a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a};
  n.value = lim::tanh(x);
  return push(std::move(n));
}

ValueId Tape::gelu(ValueId a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kGelu;
  n.inputs = {a};
  n.value = lim::gelu(x);
  return push(std::move(n));
}

ValueId Tape::exp(ValueId a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kExp;
  n.inputs = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] = std::exp(x.data()[i]);
  return push(std::move(n));
}

ValueId Tape::reciprocal(ValueId a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kReciprocal;
  n.inputs = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.data()[i] == 0.0) throw DomainError("reciprocal of zero");
    n.value.data()[i] = 1.0 / x.data()[i];
  }
  return push(std::move(n));
}

ValueId Tape::scale(ValueId a, double k) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kScale;
  n.inputs = {a};
  n.p0 = k;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] = k * x.data()[i];
  return push(std::move(n));
}

ValueId Tape::clamp(ValueId a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo must not exceed hi");
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kClamp;
  n.inputs = {a};
  n.p0 = lo;
  n.p1 = hi;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    n.value.data()[i] = std::min(hi, std::max(lo, x.data()[i]));
  }
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) {
    throw ShapeError("add: shapes differ: " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(y.shape()));
  }
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] = x.data()[i] + y.data()[i];
  return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) {
    throw ShapeError("mul: shapes differ: " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(y.shape()));
  }
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] = x.data()[i] * y.data()[i];
  return push(std::move(n));
}

ValueId Tape::mul_scalar(ValueId a, ValueId s) {
  const Tensor& x = value(a);
  const Tensor& sv = value(s);
  if (sv.size() != 1) {
    throw ShapeError("mul_scalar: scalar operand has shape " + shape_to_string(sv.shape()));
  }
  Node n;
  n.op = Op::kMulScalar;
  n.inputs = {a, s};
  n.value = Tensor(x.shape());
  const double k = sv.data()[0];
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data()[i] = k * x.data()[i];
  return push(std::move(n));
}

ValueId Tape::add_row_broadcast(ValueId a, ValueId bias) {
  const Tensor& x = value(a);
  const Tensor& b = value(bias);
  require_rank2(x, "add_row_broadcast");
  require_rank2(b, "add_row_broadcast");
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw ShapeError("add_row_broadcast: bias " + shape_to_string(b.shape()) +
                     " does not match " + shape_to_string(x.shape()));
  }
  Node n;
  n.op = Op::kAddRowBroadcast;
  n.inputs = {a, bias};
  n.value = Tensor(x.shape());
  const std::size_t m = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      n.value.data()[i * c + j] = x.data()[i * c + j] + b.data()[j];
    }
  }
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  n.value = lim::matmul(value(a), value(b));
  return push(std::move(n));
}

ValueId Tape::transpose(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "transpose");
  const std::size_t m = x.rows(), c = x.cols();
  Node n;
  n.op = Op::kTranspose;
  n.inputs = {a};
  n.value = Tensor({c, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) n.value.data()[j * m + i] = x.data()[i * c + j];
  }
  return push(std::move(n));
}

ValueId Tape::concat_rows(std::span<const ValueId> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::size_t cols = 0, rows = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = value(parts[p]);
    require_rank2(t, "concat_rows");
    if (p == 0) {
      cols = t.cols();
    } else if (t.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch: " + shape_to_string(t.shape()));
    }
    rows += t.rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.inputs.assign(parts.begin(), parts.end());
  n.value = Tensor({rows, cols});
  std::size_t r = 0;
  for (ValueId p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data().begin(), t.data().end(), n.value.data().begin() + r * cols);
    r += t.rows();
  }
  return push(std::move(n));
}

ValueId Tape::slice_row(ValueId a, std::size_t row) {
  const Tensor& x = value(a);
  require_rank2(x, "slice_row");
  if (row >= x.rows()) {
    throw ShapeError("slice_row: row " + std::to_string(row) + " out of range for " +
                     shape_to_string(x.shape()));
  }
  Node n;
  n.op = Op::kSliceRow;
  n.inputs = {a};
  n.p0 = static_cast<double>(row);
  const std::size_t c = x.cols();
  std::vector<double> v(x.data().begin() + row * c, x.data().begin() + (row + 1) * c);
  n.value = Tensor({1, c}, std::move(v));
  return push(std::move(n));
}

ValueId Tape::mean_rows(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "mean_rows");
  const std::size_t m = x.rows(), c = x.cols();
  Node n;
  n.op = Op::kMeanRows;
  n.inputs = {a};
  n.value = Tensor({1, c});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) n.value.data()[j] += x.data()[i * c + j];
  }
  for (std::size_t j = 0; j < c; ++j) n.value.data()[j] /= static_cast<double>(m);
  return push(std::move(n));
}

ValueId Tape::softmax_rows(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "softmax_rows");
  Node n;
  n.op = Op::kSoftmaxRows;
  n.inputs = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::softmax_span(x.row_span(i), n.value.row_span(i));
  }
  return push(std::move(n));
}

ValueId Tape::layer_norm_rows(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "layer_norm_rows");
  if (x.cols() < 2) throw DomainError("layer_norm_rows needs at least 2 columns");
  Node n;
  n.op = Op::kLayerNormRows;
  n.inputs = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::layer_norm_span(x.row_span(i), n.value.row_span(i));
  }
  return push(std::move(n));
}

ValueId Tape::l2_normalize_rows(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "l2_normalize_rows");
  Node n;
  n.op = Op::kL2NormalizeRows;
  n.inputs = {a};
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::l2_normalize_span(x.row_span(i), n.value.row_span(i));
  }
  return push(std::move(n));
}

ValueId Tape::logsumexp_rows(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "logsumexp_rows");
  Node n;
  n.op = Op::kLogSumExpRows;
  n.inputs = {a};
  n.value = Tensor({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    n.value.data()[i] = detail::logsumexp_span(x.row_span(i));
  }
  return push(std::move(n));
}

ValueId Tape::diag(ValueId a) {
  const Tensor& x = value(a);
  require_rank2(x, "diag");
  if (x.rows() != x.cols()) {
    throw ShapeError("diag expects a square tensor, got " + shape_to_string(x.shape()));
  }
  const std::size_t m = x.rows();
  Node n;
  n.op = Op::kDiag;
  n.inputs = {a};
  n.value = Tensor({m, 1});
  for (std::size_t i = 0; i < m; ++i) n.value.data()[i] = x.data()[i * m + i];
  return push(std::move(n));
}

ValueId Tape::sum(ValueId a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::kSum;
  n.inputs = {a};
  double s = 0.0;
  for (double v : x.data()) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

ValueId Tape::weighted_sum(ValueId a, std::vector<double> weights) {
  const Tensor& x = value(a);
  if (weights.size() != x.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(x.size()) + " elements");
  }
  Node n;
  n.op = Op::kWeightedSum;
  n.inputs = {a};
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.data()[i];
  n.value = Tensor::scalar(s);
  n.weights = std::move(weights);
  return push(std::move(n));
}

void Tape::backward(ValueId root) {
  if (backward_done_) throw Error("tape: backward() may run once per tape");
  const Node& r = node(root);
  if (r.value.size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + shape_to_string(r.value.shape()));
  }
  backward_done_ = true;
  grad_buffer(root)[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (!nodes_[i].grad.empty()) backward_node(i);
  }
}

void Tape::backward_node(std::size_t index) {
  Node& n = nodes_[index];
  const std::vector<double>& gy = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kTanh: {
      auto& gx = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const double y = n.value.data()[i];
        gx[i] += gy[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::kGelu: {
      auto& gx = grad_buffer(n.inputs[0]);
      const Tensor& x = value(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gx[i] += gy[i] * detail::gelu_grad_scalar(x.data()[i]);
      }
      break;
    }
    case Op::kExp: {
      auto& gx = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * n.value.data()[i];
      break;
    }
    case Op::kReciprocal: {
      auto& gx = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const double y = n.value.data()[i];
        gx[i] -= gy[i] * y * y;
      }
      break;
    }
    case Op::kScale: {
      auto& gx = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += n.p0 * gy[i];
      break;
    }
    case Op::kClamp: {
      auto& gx = grad_buffer(n.inputs[0]);
      const Tensor& x = value(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const double v = x.data()[i];
        if (v > n.p0 && v < n.p1) gx[i] += gy[i];
      }
      break;
    }
    case Op::kAdd: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      break;
    }
    case Op::kMul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data()[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.data()[i];
      break;
    }
    case Op::kMulScalar: {
      const Tensor& a = value(n.inputs[0]);
      const double k = value(n.inputs[1]).data()[0];
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * k;
      double gs = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) gs += gy[i] * a.data()[i];
      grad_buffer(n.inputs[1])[0] += gs;
      break;
    }
    case Op::kAddRowBroadcast: {
      const std::size_t m = n.value.rows(), c = n.value.cols();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
      }
      break;
    }
    case Op::kMatMul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      const std::size_t m = a.rows(), k = a.cols(), c = b.cols();
      // dA += dY * B^T
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          double s = 0.0;
          const double* gyr = gy.data() + i * c;
          const double* br = b.data().data() + l * c;
          for (std::size_t j = 0; j < c; ++j) s += gyr[j] * br[j];
          ga[i * k + l] += s;
        }
      }
      // dB += A^T * dY
      auto& gb = grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a.data().data() + i * k;
        const double* gyr = gy.data() + i * c;
        for (std::size_t l = 0; l < k; ++l) {
          const double av = ar[l];
          if (av == 0.0) continue;
          double* gbr = gb.data() + l * c;
          for (std::size_t j = 0; j < c; ++j) gbr[j] += av * gyr[j];
        }
      }
      break;
    }
    case Op::kTranspose: {
      const std::size_t m = n.value.rows(), c = n.value.cols();  // transposed dims
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[j * m + i] += gy[i * c + j];
      }
      break;
    }
    case Op::kConcatRows: {
      const std::size_t c = n.value.cols();
      std::size_t r = 0;
      for (ValueId in : n.inputs) {
        const std::size_t mr = value(in).rows();
        auto& gi = grad_buffer(in);
        for (std::size_t i = 0; i < mr * c; ++i) gi[i] += gy[r * c + i];
        r += mr;
      }
      break;
    }
    case Op::kSliceRow: {
      const std::size_t row = static_cast<std::size_t>(n.p0);
      const std::size_t c = n.value.cols();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t j = 0; j < c; ++j) ga[row * c + j] += gy[j];
      break;
    }
    case Op::kMeanRows: {
      const Tensor& x = value(n.inputs[0]);
      const std::size_t m = x.rows(), c = x.cols();
      const double inv = 1.0 / static_cast<double>(m);
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[j] * inv;
      }
      break;
    }
    case Op::kSoftmaxRows: {
      const std::size_t m = n.value.rows(), c = n.value.cols();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = n.value.data().data() + i * c;
        const double* g = gy.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[j] * (g[j] - dot);
      }
      break;
    }
    case Op::kLayerNormRows: {
      const Tensor& x = value(n.inputs[0]);
      const std::size_t m = x.rows(), c = x.cols();
      const double nn = static_cast<double>(c);
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.data().data() + i * c;
        const double* y = n.value.data().data() + i * c;
        const double* g = gy.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= nn;
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= nn;
        const bool floored = !(var > detail::kLayerNormVarFloor);
        const double s = std::sqrt(std::max(var, detail::kLayerNormVarFloor));
        double gmean = 0.0, gydot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gmean += g[j];
          gydot += g[j] * y[j];
        }
        gmean /= nn;
        gydot /= nn;
        for (std::size_t j = 0; j < c; ++j) {
          // With the variance floor active the denominator is constant.
          const double centered = floored ? (g[j] - gmean) : (g[j] - gmean - y[j] * gydot);
          ga[i * c + j] += centered / s;
        }
      }
      break;
    }
    case Op::kL2NormalizeRows: {
      const Tensor& x = value(n.inputs[0]);
      const std::size_t m = x.rows(), c = x.cols();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = n.value.data().data() + i * c;
        const double* g = gy.data() + i * c;
        const double norm = detail::l2_norm(x.row_span(i));
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += (g[j] - y[j] * dot) / norm;
      }
      break;
    }
    case Op::kLogSumExpRows: {
      const Tensor& x = value(n.inputs[0]);
      const std::size_t m = x.rows(), c = x.cols();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        const double lse = n.value.data()[i];
        const double gi = gy[i];
        if (gi == 0.0) continue;
        const double* xr = x.data().data() + i * c;
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gi * std::exp(xr[j] - lse);
      }
      break;
    }
    case Op::kDiag: {
      const std::size_t m = value(n.inputs[0]).rows();
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) ga[i * m + i] += gy[i];
      break;
    }
    case Op::kSum: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[0];
      break;
    }
    case Op::kWeightedSum: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[0] * n.weights[i];
      break;
    }
  }
}

}  // namespace lim
