#include "milcci/linalg.hpp"

#include <cmath>

#include "milcci/error.hpp"
#include "milcci/kernels.hpp"
#include "milcci/rng.hpp"

namespace milcci {

bool cholesky(Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw_param("cholesky: matrix not square");
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) - kern::nrm2sq(a.row(j), j);
    if (d <= 0.0 || !std::isfinite(d)) return false;
    d = std::sqrt(d);
    a(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i)
      a(i, j) = (a(i, j) - kern::dot(a.row(i), a.row(j), j)) / d;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
  return true;
}

void cholesky_solve(const Matrix& l, std::vector<double>& b) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i)
    b[i] = (b[i] - kern::dot(l.row(i), b.data(), i)) / l(i, i);
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= l(j, i) * b[j];
    b[i] = acc / l(i, i);
  }
}

LuFactor lu_factor(Matrix a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw_param("lu_factor: matrix not square");
  LuFactor f;
  f.piv.resize(n);
  double amax = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) amax = std::max(amax, std::fabs(a.data()[i]));
  const double tiny = amax * 1e-14 + 1e-300;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::fabs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(a(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    f.piv[k] = p;
    if (p != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
    if (best <= tiny) {
      f.singular = true;
      f.lu = std::move(a);
      return f;
    }
    const double pivot = a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = a(i, k) / pivot;
      a(i, k) = m;
      if (m != 0.0) kern::axpy(-m, a.row(k) + k + 1, a.row(i) + k + 1, n - k - 1);
    }
  }
  f.lu = std::move(a);
  return f;
}

void lu_solve_inplace(const LuFactor& f, std::vector<double>& b) {
  const std::size_t n = f.lu.rows();
  // The factorization swaps whole rows, so the full permutation must hit the
  // rhs before the triangular sweeps (not interleaved with them).
  for (std::size_t k = 0; k < n; ++k)
    if (f.piv[k] != k) std::swap(b[k], b[f.piv[k]]);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = k + 1; i < n; ++i) b[i] -= f.lu(i, k) * b[k];
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= f.lu(i, j) * b[j];
    b[i] = acc / f.lu(i, i);
  }
}

Matrix lu_solve(const LuFactor& f, const Matrix& b) {
  if (f.singular) throw_numeric("lu_solve: singular matrix");
  Matrix x(b.rows(), b.cols());
  std::vector<double> col(b.rows());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
    lu_solve_inplace(f, col);
    for (std::size_t i = 0; i < b.rows(); ++i) x(i, j) = col[i];
  }
  return x;
}

std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) tr += std::fabs(a(i, i));
  double jitter = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Matrix l = a;
    if (jitter > 0.0)
      for (std::size_t i = 0; i < n; ++i) l(i, i) += jitter;
    if (cholesky(l)) {
      cholesky_solve(l, b);
      return b;
    }
    jitter = (jitter == 0.0) ? (tr / double(n) + 1e-300) * 1e-12 : jitter * 100.0;
  }
  throw_numeric("solve_spd: matrix not positive definite after jitter escalation");
}

bool block_tridiag_solve(const std::vector<Matrix>& diag, const Matrix& sub, const Matrix& sup,
                         Matrix& x) {
  const std::size_t T = diag.size();
  const std::size_t P = x.rows();
  if (x.cols() != T) throw_param("block_tridiag_solve: rhs column count mismatch");

  std::vector<LuFactor> fac(T);
  std::vector<Matrix> sinv_sup(T);  // S_t^{-1} * sup, needed for both sweeps
  Matrix g(P, T);                   // forward-transformed rhs, column t

  std::vector<double> tmp(P);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix s = diag[t];
    for (std::size_t i = 0; i < P; ++i) tmp[i] = x(i, t);
    if (t > 0) {
      // s -= sub * (S_{t-1}^{-1} sup); rhs -= sub * (S_{t-1}^{-1} g_{t-1})
      const Matrix prod = matmul(sub, sinv_sup[t - 1]);
      s.add_scaled(prod, -1.0);
      std::vector<double> gp(P);
      for (std::size_t i = 0; i < P; ++i) gp[i] = g(i, t - 1);
      lu_solve_inplace(fac[t - 1], gp);
      const std::vector<double> corr = matvec(sub, gp);
      for (std::size_t i = 0; i < P; ++i) tmp[i] -= corr[i];
    }
    fac[t] = lu_factor(std::move(s));
    if (fac[t].singular) return false;
    sinv_sup[t] = lu_solve(fac[t], sup);
    for (std::size_t i = 0; i < P; ++i) g(i, t) = tmp[i];
  }

  for (std::size_t tt = T; tt > 0; --tt) {
    const std::size_t t = tt - 1;
    for (std::size_t i = 0; i < P; ++i) tmp[i] = g(i, t);
    lu_solve_inplace(fac[t], tmp);
    if (t + 1 < T) {
      for (std::size_t i = 0; i < P; ++i) {
        double acc = tmp[i];
        const double* si = sinv_sup[t].row(i);
        for (std::size_t j = 0; j < P; ++j) acc -= si[j] * x(j, t + 1);
        x(i, t) = acc;
      }
    } else {
      for (std::size_t i = 0; i < P; ++i) x(i, t) = tmp[i];
    }
  }
  return true;
}

double power_iter_sym(const Matrix& a, int iters, unsigned long long seed) {
  const std::size_t n = a.rows();
  if (n == 0) return 0.0;
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> w = matvec(a, v);
    const double nw = std::sqrt(kern::nrm2sq(w.data(), n));
    if (nw == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    lambda = nw;
  }
  return lambda;
}

}  // namespace milcci
