#include "milcci/kernels.hpp"

#include <cmath>

namespace milcci::kern {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double nrm2sq_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double asum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(a[i]);
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void axpy_mask_scalar(double alpha, const double* x, const std::uint8_t* m, double* y,
                      std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (m[i]) y[i] += alpha * x[i];
}

double nrm2sq_mask_scalar(const double* x, const std::uint8_t* m, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (m[i]) acc += x[i] * x[i];
  return acc;
}

double diff_nrm2sq_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      dot_scalar,       nrm2sq_scalar,      asum_scalar, sum_scalar,
      axpy_scalar,      scal_scalar,        axpy_mask_scalar,
      nrm2sq_mask_scalar, diff_nrm2sq_scalar,
  };
  return ops;
}

}  // namespace milcci::kern
