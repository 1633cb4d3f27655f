#pragma once

#include <vector>

#include "milcci/matrix.hpp"

namespace milcci {

// In-place Cholesky of a symmetric positive definite matrix; on success the
// lower triangle of a holds L with A = L L^T. Returns false on a
// non-positive pivot.
bool cholesky(Matrix& a);

// Solve L L^T x = b given the lower factor from cholesky().
void cholesky_solve(const Matrix& l, std::vector<double>& b);

// LU factorization with partial pivoting, kept together with its pivots so
// one factorization can serve many right-hand sides.
struct LuFactor {
  Matrix lu;
  std::vector<std::size_t> piv;
  bool singular = false;
};

LuFactor lu_factor(Matrix a);
void lu_solve_inplace(const LuFactor& f, std::vector<double>& b);
// Solve A X = B column by column.
Matrix lu_solve(const LuFactor& f, const Matrix& b);

// Solve a symmetric positive (semi-)definite system, escalating a diagonal
// jitter if the factorization fails. Throws a numeric error after the last
// escalation.
std::vector<double> solve_spd(Matrix a, std::vector<double> b);

// Solve the block-tridiagonal system
//   sub * x_{t-1} + diag_t * x_t + sup * x_{t+1} = rhs_t,  t = 0..T-1
// with constant off-diagonal blocks; x and rhs are P x T with column t the
// t-th unknown/right-hand side. Returns false if any reduced block is
// singular (x is then unspecified).
bool block_tridiag_solve(const std::vector<Matrix>& diag, const Matrix& sub, const Matrix& sup,
                         Matrix& x);

// Largest eigenvalue of a small symmetric PSD matrix by power iteration.
double power_iter_sym(const Matrix& a, int iters, unsigned long long seed);

}  // namespace milcci
