#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "helpers.hpp"
#include "lim/error.hpp"
#include "lim/tensor.hpp"

using lim::Tensor;

namespace {

// Independent reference product: plain triple loop, accumulation order i,j,k.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("tensor construction and invariants") {
  Tensor t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  for (double v : t.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), lim::ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), lim::ShapeError);
  CHECK_THROWS_AS(Tensor(lim::Shape{}), lim::ShapeError);

  Tensor s = Tensor::scalar(4.5);
  CHECK(s.size() == 1);
  CHECK(s.at(0, 0) == 4.5);

  Tensor id = Tensor::identity(3);
  CHECK(id.at(1, 1) == 1.0);
  CHECK(id.at(1, 2) == 0.0);
}

TEST_CASE("gradient slot tracks the value shape") {
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(!t.has_grad());
  t.ensure_grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == t.size());
  t.grad()[3] = 7.0;
  CHECK(t.grad_tensor().at(1, 1) == 7.0);
  t.zero_grad();
  CHECK(t.grad()[3] == 0.0);
  t.clear_grad();
  CHECK(!t.has_grad());
}

TEST_CASE("matmul identity and selector") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  CHECK(testutil::max_abs_diff(lim::matmul(a, Tensor::identity(2)), a) == 0.0);

  // Selector: picking out a column via a one-hot vector.
  Tensor onehot = Tensor::column({0.0, 1.0});
  Tensor picked = lim::matmul(a, onehot);
  CHECK(picked.at(0, 0) == 2.0);
  CHECK(picked.at(1, 0) == 4.0);
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
  lim::Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.integer(6);
    const std::size_t k = 1 + rng.integer(6);
    const std::size_t n = 1 + rng.integer(6);
    Tensor a = testutil::random_tensor(rng, {m, k});
    Tensor b = testutil::random_tensor(rng, {k, n});
    CHECK(testutil::max_abs_diff(lim::matmul(a, b), matmul_oracle(a, b)) < 1e-12);
  }
}

TEST_CASE("matmul dimension error names both shapes") {
  Tensor a({3, 4});
  Tensor b({5, 2});
  try {
    lim::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const lim::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3x4]") != std::string::npos);
    CHECK(msg.find("[5x2]") != std::string::npos);
  }
}

TEST_CASE("softmax hand values") {
  Tensor v({2}, {0.0, 0.0});
  Tensor s = lim::softmax(v);
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  Tensor w({2}, {std::log(2.0), 0.0});
  Tensor sw = lim::softmax(w);
  CHECK(std::fabs(sw.at(0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::fabs(sw.at(1) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("softmax is stable for large inputs") {
  Tensor v({2}, {1000.0, 0.0});
  Tensor s = lim::softmax(v);
  CHECK(s.all_finite());
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) >= 0.0);
}

TEST_CASE("softmax properties over random inputs") {
  lim::Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.integer(16);
    Tensor v = testutil::random_tensor(rng, {n}, 3.0);
    Tensor s = lim::softmax(v);
    double sum = 0.0;
    for (double x : s.data()) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);

    // Shift invariance.
    Tensor shifted = v;
    const double c = rng.uniform(-50.0, 50.0);
    for (auto& x : shifted.data()) x += c;
    CHECK(testutil::max_abs_diff(lim::softmax(shifted), s) < 1e-12);
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS(lim::softmax(Tensor{}), lim::ShapeError);
  std::vector<double> none;
  CHECK_THROWS_AS((void)lim::detail::logsumexp_span({none.data(), 0}), lim::DomainError);
}

TEST_CASE("l2_normalize hand value and idempotence") {
  Tensor v({2}, {3.0, 4.0});
  Tensor u = lim::l2_normalize(v);
  CHECK(std::fabs(u.at(0) - 0.6) < 1e-15);
  CHECK(std::fabs(u.at(1) - 0.8) < 1e-15);

  lim::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.integer(32);
    Tensor x = testutil::random_tensor(rng, {n});
    Tensor once = lim::l2_normalize(x);
    CHECK(std::fabs(lim::detail::l2_norm(once.data()) - 1.0) < 1e-12);
    Tensor twice = lim::l2_normalize(once);
    CHECK(testutil::max_abs_diff(once, twice) < 1e-12);
  }
}

TEST_CASE("l2_normalize rejects near-zero vectors") {
  CHECK_THROWS_AS(lim::l2_normalize(Tensor({3})), lim::DegenerateInputError);
  Tensor tiny({2}, {1e-13, -1e-13});
  CHECK_THROWS_AS(lim::l2_normalize(tiny), lim::DegenerateInputError);
}

TEST_CASE("tanh and gelu pointwise values") {
  Tensor z({3}, {0.0, 1.0, -1.0});
  Tensor th = lim::tanh(z);
  CHECK(th.at(0) == 0.0);
  CHECK(th.at(1) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));

  Tensor g = lim::gelu(z);
  CHECK(g.at(0) == 0.0);
  // Exact erf form at x=1: 0.5 * (1 + erf(1/sqrt(2))).
  CHECK(g.at(1) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-15));
  // gelu(-x) = -x + gelu(x) for the exact form.
  CHECK(std::fabs(g.at(2) - (-1.0 + g.at(1))) < 1e-12);
}

TEST_CASE("layer_norm hand value and properties") {
  Tensor v({2}, {1.0, 3.0});
  Tensor n = lim::layer_norm(v);
  CHECK(std::fabs(n.at(0) - (-1.0)) < 1e-12);
  CHECK(std::fabs(n.at(1) - 1.0) < 1e-12);

  // Constant vector: variance floor engages, output is exactly zero.
  Tensor c = Tensor::filled({5}, 3.25);
  Tensor cn = lim::layer_norm(c);
  for (double x : cn.data()) CHECK(x == 0.0);

  lim::Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 2 + rng.integer(30);
    Tensor x = testutil::random_tensor(rng, {len}, 2.0);
    Tensor y = lim::layer_norm(x);
    double mean = 0.0;
    for (double e : y.data()) mean += e;
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (double e : y.data()) var += (e - mean) * (e - mean);
    var /= static_cast<double>(len);
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(var - 1.0) < 1e-10);
  }

  CHECK_THROWS_AS(lim::layer_norm(Tensor({1}, {2.0})), lim::DomainError);
}

TEST_CASE("LIMT golden byte layout") {
  Tensor t({2, 2}, {1.0, 2.0, 3.0, 4.0});
  std::ostringstream out(std::ios::binary);
  lim::write_limt(out, t);
  const std::string bytes = out.str();

  std::string expected;
  expected += "LIMT";
  auto push_u32 = [&expected](std::uint32_t v) {
    expected.append(reinterpret_cast<const char*>(&v), 4);
  };
  push_u32(2);  // rank
  push_u32(2);  // extents
  push_u32(2);
  for (double v : {1.0, 2.0, 3.0, 4.0}) {
    expected.append(reinterpret_cast<const char*>(&v), 8);
  }
  CHECK(bytes.size() == expected.size());
  CHECK(bytes == expected);
}

TEST_CASE("LIMT round-trip preserves bits") {
  lim::Rng rng(99);
  testutil::TempDir tmp("limt");
  for (int trial = 0; trial < 10; ++trial) {
    lim::Shape shape;
    const std::size_t rank = 1 + rng.integer(3);
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(1 + rng.integer(5));
    Tensor t = testutil::random_tensor(rng, shape);
    const auto path = tmp.path() / ("t" + std::to_string(trial) + ".limt");
    lim::write_limt_file(path, t);
    Tensor back = lim::read_limt_file(path);
    CHECK(back.shape() == t.shape());
    CHECK(testutil::bitwise_equal(back, t));
  }
}

TEST_CASE("LIMT rejects corrupt streams") {
  std::istringstream bad("NOPE");
  CHECK_THROWS_AS(lim::read_limt(bad), lim::IoError);

  Tensor t({2, 2}, {1, 2, 3, 4});
  std::ostringstream out(std::ios::binary);
  lim::write_limt(out, t);
  std::string truncated = out.str().substr(0, out.str().size() - 5);
  std::istringstream in(truncated, std::ios::binary);
  CHECK_THROWS_AS(lim::read_limt(in), lim::IoError);
}
