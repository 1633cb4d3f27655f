#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace milcci {

// Dense row-major matrix of doubles. Deliberately small: the heavy lifting
// lives in the kern:: vector kernels, and everything here is row-oriented so
// those kernels see contiguous memory.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  double* row(std::size_t i) { return v_.data() + i * cols_; }
  const double* row(std::size_t i) const { return v_.data() + i * cols_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  void fill(double x) { v_.assign(v_.size(), x); }
  void resize(std::size_t rows, std::size_t cols, double fill = 0.0) {
    rows_ = rows;
    cols_ = cols;
    v_.assign(rows * cols, fill);
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transposed() const;

  // this += alpha * other (shapes must match)
  void add_scaled(const Matrix& other, double alpha);
  void scale(double alpha);

  double frob_sq() const;
  double l1_norm() const;
  bool all_finite() const;

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

// Row-major byte mask with the same layout as Matrix; nonzero = observed.
class Mask {
public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, std::uint8_t fill = 1)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return v_.empty(); }

  std::uint8_t& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  std::uint8_t* row(std::size_t i) { return v_.data() + i * cols_; }
  const std::uint8_t* row(std::size_t i) const { return v_.data() + i * cols_; }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : v_)
      if (b) ++c;
    return c;
  }
  bool all_set() const { return count() == v_.size(); }

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> v_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
// y = A * x
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

}  // namespace milcci
