#pragma once

#include <cstddef>
#include <cstdint>

// Vector kernels behind the dense numerics. Every kernel has a scalar
// reference implementation and may have SIMD variants; the active variant is
// chosen once at startup from CPU capabilities and can be overridden for
// equivalence testing. SIMD variants are allowed to reassociate reductions,
// so results may differ from scalar in the last bits; they must agree to
// normal floating-point accumulation accuracy, which the kernel tests pin.
namespace milcci::kern {

enum class Backend { scalar, avx2 };

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  double (*nrm2sq)(const double*, std::size_t);
  double (*asum)(const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  // y[i] -= a * x[i] wherever m[i] != 0
  void (*axpy_mask)(double, const double*, const std::uint8_t*, double*, std::size_t);
  // sum of x[i]^2 wherever m[i] != 0
  double (*nrm2sq_mask)(const double*, const std::uint8_t*, std::size_t);
  // sum of (a[i]-b[i])^2
  double (*diff_nrm2sq)(const double*, const double*, std::size_t);
};

const Ops& ops();
Backend active_backend();
const char* backend_name();

// Force a backend (tests). Throws if the backend is not available on this CPU.
void set_backend(Backend b);
bool avx2_available();

// Reference implementations, always available regardless of dispatch state.
const Ops& scalar_ops();

inline double dot(const double* a, const double* b, std::size_t n) { return ops().dot(a, b, n); }
inline double nrm2sq(const double* a, std::size_t n) { return ops().nrm2sq(a, n); }
inline double asum(const double* a, std::size_t n) { return ops().asum(a, n); }
inline double sum(const double* a, std::size_t n) { return ops().sum(a, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { ops().axpy(alpha, x, y, n); }
inline void scal(double alpha, double* x, std::size_t n) { ops().scal(alpha, x, n); }
inline void axpy_mask(double alpha, const double* x, const std::uint8_t* m, double* y, std::size_t n) {
  ops().axpy_mask(alpha, x, m, y, n);
}
inline double nrm2sq_mask(const double* x, const std::uint8_t* m, std::size_t n) {
  return ops().nrm2sq_mask(x, m, n);
}
inline double diff_nrm2sq(const double* a, const double* b, std::size_t n) {
  return ops().diff_nrm2sq(a, b, n);
}

}  // namespace milcci::kern
