#include "lim/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lim/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are defined little-endian; big-endian hosts need swaps");
static_assert(sizeof(double) == 8);

namespace lim {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": tensor is empty");
}

}  // namespace

Tensor::Tensor(Shape shape) {
  check_extents(shape);
  shape_ = std::move(shape);
  values_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_extents(shape);
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  shape_ = std::move(shape);
  values_ = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

Tensor Tensor::column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::filled(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), v);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.values_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::extent(std::size_t dim) const {
  if (dim >= shape_.size()) {
    throw ShapeError("extent index " + std::to_string(dim) + " out of range for " +
                     shape_to_string(shape_));
  }
  return shape_[dim];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2: " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2: " + shape_to_string(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t i) const {
  if (i >= values_.size()) throw ShapeError("flat index out of range");
  return values_[i];
}

double& Tensor::at(std::size_t i) {
  if (i >= values_.size()) throw ShapeError("flat index out of range");
  return values_[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= shape_[0] || c >= shape_[1]) {
    throw ShapeError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_to_string(shape_));
  }
  return values_[r * shape_[1] + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  if (rank() != 2 || r >= shape_[0] || c >= shape_[1]) {
    throw ShapeError("index (" + std::to_string(r) + "," + std::to_string(c) +
                     ") out of range for " + shape_to_string(shape_));
  }
  return values_[r * shape_[1] + c];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  const std::size_t n = cols();
  if (r >= shape_[0]) throw ShapeError("row index out of range");
  return {values_.data() + r * n, n};
}

std::span<double> Tensor::row_span(std::size_t r) {
  const std::size_t n = cols();
  if (r >= shape_[0]) throw ShapeError("row index out of range");
  return {values_.data() + r * n, n};
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
}

void Tensor::clear_grad() { grad_.reset(); }

void Tensor::zero_grad() {
  ensure_grad();
  std::fill(grad_->begin(), grad_->end(), 0.0);
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ShapeError("tensor has no gradient slot");
  return *grad_;
}

std::span<double> Tensor::grad() {
  if (!grad_) throw ShapeError("tensor has no gradient slot");
  return *grad_;
}

Tensor Tensor::grad_tensor() const {
  if (!grad_) throw ShapeError("tensor has no gradient slot");
  return Tensor(shape_, *grad_);
}

// --- forward primitives -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 operands, got " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()));
  }
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) {
    throw ShapeError("transpose requires a rank-2 operand, got " + shape_to_string(a.shape()));
  }
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  }
  return out;
}

Tensor softmax(const Tensor& v) {
  require_defined(v, "softmax");
  if (v.rank() != 1) throw ShapeError("softmax expects a rank-1 tensor, got " + shape_to_string(v.shape()));
  Tensor out(v.shape());
  detail::softmax_span(v.data(), out.data());
  return out;
}

Tensor l2_normalize(const Tensor& v) {
  require_defined(v, "l2_normalize");
  if (v.rank() != 1) {
    throw ShapeError("l2_normalize expects a rank-1 tensor, got " + shape_to_string(v.shape()));
  }
  Tensor out(v.shape());
  detail::l2_normalize_span(v.data(), out.data());
  return out;
}

Tensor tanh(const Tensor& t) {
  require_defined(t, "tanh");
  Tensor out(t.shape());
  auto in = t.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
  return out;
}

Tensor gelu(const Tensor& t) {
  require_defined(t, "gelu");
  Tensor out(t.shape());
  auto in = t.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = detail::gelu_scalar(in[i]);
  return out;
}

Tensor layer_norm(const Tensor& v) {
  require_defined(v, "layer_norm");
  if (v.rank() != 1) {
    throw ShapeError("layer_norm expects a rank-1 tensor, got " + shape_to_string(v.shape()));
  }
  if (v.size() < 2) throw DomainError("layer_norm needs at least 2 elements");
  Tensor out(v.shape());
  detail::layer_norm_span(v.data(), out.data());
  return out;
}

// --- LIMT serialization ------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("LIMT: truncated stream");
  return v;
}

}  // namespace

void write_limt(std::ostream& out, const Tensor& t) {
  if (!t.defined()) throw IoError("LIMT: refusing to write an empty tensor");
  out.write("LIMT", 4);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.extent(d)));
  }
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("LIMT: write failed");
}

Tensor read_limt(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LIMT", 4) != 0) throw IoError("LIMT: bad magic");
  const auto rank = read_pod<std::uint32_t>(in);
  if (rank == 0 || rank > 8) throw IoError("LIMT: unreasonable rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = read_pod<std::uint32_t>(in);
    if (e == 0) throw IoError("LIMT: zero extent");
  }
  std::vector<double> values(shape_size(shape));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw IoError("LIMT: truncated values");
  return Tensor(std::move(shape), std::move(values));
}

void write_limt_file(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  write_limt(out, t);
}

Tensor read_limt_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path.string());
  return read_limt(in);
}

// --- span kernels -------------------------------------------------------------

namespace detail {

void softmax_span(std::span<const double> in, std::span<double> out) {
  if (in.empty()) throw DomainError("softmax of an empty vector");
  const double mx = *std::max_element(in.begin(), in.end());
  if (!std::isfinite(mx)) throw DomainError("softmax requires finite entries");
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void l2_normalize_span(std::span<const double> in, std::span<double> out) {
  if (in.empty()) throw DomainError("l2_normalize of an empty vector");
  const double norm = l2_norm(in);
  if (!(norm > kNormalizeEps)) {
    throw DegenerateInputError("l2_normalize: vector norm " + std::to_string(norm) +
                               " is below " + std::to_string(kNormalizeEps));
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / norm;
}

void layer_norm_span(std::span<const double> in, std::span<double> out) {
  const std::size_t n = in.size();
  double mean = 0.0;
  for (double x : in) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : in) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  // Variance floor: constant inputs map to exact zeros, anything with real
  // spread is normalized exactly.
  const double denom = std::sqrt(std::max(var, kLayerNormVarFloor));
  for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mean) / denom;
}

double logsumexp_span(std::span<const double> in) {
  if (in.empty()) throw DomainError("logsumexp of an empty vector");
  const double mx = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (double x : in) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad_scalar(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double Phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  return Phi + x * phi;
}

}  // namespace detail
}  // namespace lim
