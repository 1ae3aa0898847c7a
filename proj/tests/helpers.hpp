#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "lim/rng.hpp"
#include "lim/tensor.hpp"

namespace testutil {

inline lim::Tensor random_tensor(lim::Rng& rng, lim::Shape shape, double stddev = 1.0) {
  lim::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

// Random matrix whose rows are unit vectors.
inline lim::Tensor random_unit_rows(lim::Rng& rng, std::size_t rows, std::size_t cols) {
  lim::Tensor t({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    auto row = t.row_span(r);
    do {
      norm = 0.0;
      for (auto& v : row) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (auto& v : row) v /= norm;
  }
  return t;
}

inline double max_abs_diff(const lim::Tensor& a, const lim::Tensor& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  }
  return m;
}

inline bool bitwise_equal(const lim::Tensor& a, const lim::Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
  }
  return true;
}

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    dir_ = std::filesystem::temp_directory_path() /
           ("lim_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace testutil
