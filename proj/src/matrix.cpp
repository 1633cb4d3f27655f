#include "milcci/matrix.hpp"

#include <cmath>

#include "milcci/error.hpp"
#include "milcci/kernels.hpp"

namespace milcci {

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

void Matrix::add_scaled(const Matrix& other, double alpha) {
  if (!same_shape(other)) throw_param("add_scaled: shape mismatch");
  kern::axpy(alpha, other.data(), data(), size());
}

void Matrix::scale(double alpha) { kern::scal(alpha, data(), size()); }

double Matrix::frob_sq() const { return kern::nrm2sq(data(), size()); }

double Matrix::l1_norm() const { return kern::asum(data(), size()); }

bool Matrix::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw_param("matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  // ikj order: C.row(i) accumulates scaled rows of B, contiguous on both sides.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik != 0.0) kern::axpy(aik, b.row(k), ci, b.cols());
    }
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw_param("matmul_at_b: dimension mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (ak[i] != 0.0) kern::axpy(ak[i], bk, c.row(i), b.cols());
    }
  }
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw_param("matmul_a_bt: dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) ci[j] = kern::dot(ai, b.row(j), a.cols());
  }
  return c;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  if (a.cols() != x.size()) throw_param("matvec: dimension mismatch");
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = kern::dot(a.row(i), x.data(), a.cols());
  return y;
}

}  // namespace milcci
