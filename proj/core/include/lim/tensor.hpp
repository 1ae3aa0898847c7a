#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lim {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major tensor of 64-bit reals with an optional same-shape gradient
// accumulator. Value-semantic: copies are deep and instances are safe to move
// across threads.
class Tensor {
 public:
  // Default-constructed tensors are empty placeholders; every operation
  // rejects them.
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);                  // shape {1, 1}
  static Tensor row(std::vector<double> v);        // shape {1, n}
  static Tensor column(std::vector<double> v);     // shape {n, 1}
  static Tensor filled(Shape shape, double v);
  static Tensor identity(std::size_t n);

  bool defined() const { return !shape_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t extent(std::size_t dim) const;
  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;

  double at(std::size_t i) const;
  double& at(std::size_t i);
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);
  std::span<const double> data() const { return values_; }
  std::span<double> data() { return values_; }
  std::span<const double> row_span(std::size_t r) const;
  std::span<double> row_span(std::size_t r);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // Gradient slot. Absent until ensure_grad(); always shaped like values.
  bool has_grad() const { return grad_.has_value(); }
  void ensure_grad();   // allocates zeros if absent
  void clear_grad();    // drops the slot
  void zero_grad();     // ensure + fill with zeros
  std::span<const double> grad() const;
  std::span<double> grad();
  Tensor grad_tensor() const;  // copy of the gradient with this shape

 private:
  Shape shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

// --- forward primitives ---------------------------------------------------

// Rank-2 by rank-2 product; inner extents must agree.
Tensor matmul(const Tensor& a, const Tensor& b);

// Rank-2 transpose.
Tensor transpose(const Tensor& a);

// Numerically stable softmax of a rank-1 tensor (max subtraction).
Tensor softmax(const Tensor& v);

// v / max(||v||2, eps) with eps = 1e-12; rejects near-zero vectors.
Tensor l2_normalize(const Tensor& v);

// Elementwise over any shape.
Tensor tanh(const Tensor& t);
Tensor gelu(const Tensor& t);  // exact erf form

// Rank-1 normalization to zero mean / unit population variance with a
// variance floor of 1e-5; a constant vector maps to zeros. No affine part.
Tensor layer_norm(const Tensor& v);

// --- tensor file format ----------------------------------------------------
// Layout: magic "LIMT", u32 rank, u32 extents (little-endian), then the
// values as little-endian f64 in row-major order.

void write_limt(std::ostream& out, const Tensor& t);
Tensor read_limt(std::istream& in);
void write_limt_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_limt_file(const std::filesystem::path& path);

namespace detail {

inline constexpr double kNormalizeEps = 1e-12;
inline constexpr double kLayerNormVarFloor = 1e-5;

// Span kernels shared by the eager primitives above and the tape's row-wise
// operations. Inputs and outputs may not alias unless noted.
void softmax_span(std::span<const double> in, std::span<double> out);
void l2_normalize_span(std::span<const double> in, std::span<double> out);
void layer_norm_span(std::span<const double> in, std::span<double> out);
double logsumexp_span(std::span<const double> in);
double l2_norm(std::span<const double> v);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace detail
}  // namespace lim
