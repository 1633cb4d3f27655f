#include "milcci/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "milcci/error.hpp"
#include "milcci/kernels.hpp"
#include "milcci/linalg.hpp"

namespace milcci {

double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

namespace {

void check_lasso_inputs(const LassoProblem& p, const Matrix& warm) {
  if (p.residual_stack.cols() != p.trace_stack.cols())
    throw_param("cd_lasso_variant: residual/trace column counts disagree");
  const std::size_t n = p.residual_stack.rows();
  const std::size_t pc = p.trace_stack.rows();
  if (p.anchor.rows() != n || p.anchor.cols() != pc)
    throw_param("cd_lasso_variant: anchor shape mismatch");
  if (warm.rows() != n || warm.cols() != pc)
    throw_param("cd_lasso_variant: warm start shape mismatch");
  if (!p.mask_stack.empty() &&
      (p.mask_stack.rows() != n || p.mask_stack.cols() != p.residual_stack.cols()))
    throw_param("cd_lasso_variant: mask shape mismatch");
  if (!p.residual_stack.all_finite() || !p.trace_stack.all_finite() || !p.anchor.all_finite() ||
      !warm.all_finite())
    throw_numeric("cd_lasso_variant: non-finite input");
}

bool row_all_set(const Mask& m, std::size_t i) {
  const std::uint8_t* r = m.row(i);
  for (std::size_t t = 0; t < m.cols(); ++t)
    if (!r[t]) return false;
  return true;
}

}  // namespace

Matrix cd_lasso_variant(const LassoProblem& problem, const Matrix& warm_start,
                        std::size_t max_sweeps, double tol) {
  check_lasso_inputs(problem, warm_start);
  const std::size_t n = problem.residual_stack.rows();
  const std::size_t p = problem.trace_stack.rows();
  const std::size_t tt = problem.trace_stack.cols();
  const double w = problem.anchor_weight;
  const double tau = problem.gamma1 * 0.5;

  Matrix a = warm_start;

  // Trace-row squared norms; masked rows get their own per-row versions.
  std::vector<double> full_norm(p);
  for (std::size_t j = 0; j < p; ++j) full_norm[j] = kern::nrm2sq(problem.trace_stack.row(j), tt);

  const bool has_mask = !problem.mask_stack.empty() && !problem.mask_stack.all_set();
  std::vector<char> row_masked(n, 0);
  Matrix row_norm;  // n x p, only filled for masked rows
  if (has_mask) {
    row_norm.resize(n, p);
    for (std::size_t i = 0; i < n; ++i) {
      if (row_all_set(problem.mask_stack, i)) {
        for (std::size_t j = 0; j < p; ++j) row_norm(i, j) = full_norm[j];
      } else {
        row_masked[i] = 1;
        for (std::size_t j = 0; j < p; ++j)
          row_norm(i, j) =
              kern::nrm2sq_mask(problem.trace_stack.row(j), problem.mask_stack.row(i), tt);
      }
    }
  }

  // Row-wise residuals r_i = R_i - sum_j a_ij Phi_j, with masked entries held
  // at zero so dot products ignore them.
  Matrix resid = problem.residual_stack;
  for (std::size_t i = 0; i < n; ++i) {
    double* r = resid.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      if (has_mask && row_masked[i])
        kern::axpy_mask(-aij, problem.trace_stack.row(j), problem.mask_stack.row(i), r, tt);
      else
        kern::axpy(-aij, problem.trace_stack.row(j), r, tt);
    }
  }

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double* r = resid.row(i);
      const bool masked = has_mask && row_masked[i];
      for (std::size_t j = 0; j < p; ++j) {
        const double* phi_j = problem.trace_stack.row(j);
        const double nsq = has_mask ? row_norm(i, j) : full_norm[j];
        const double denom = nsq + w;
        const double old = a(i, j);
        double next;
        if (denom <= 0.0) {
          next = 0.0;  // degenerate column with no data and no anchor
        } else {
          const double rho = kern::dot(phi_j, r, tt) + old * nsq;
          next = soft_threshold(rho + w * problem.anchor(i, j), tau) / denom;
          if (problem.nonneg && next < 0.0) next = 0.0;
        }
        const double d = next - old;
        if (d != 0.0) {
          if (masked)
            kern::axpy_mask(-d, phi_j, problem.mask_stack.row(i), r, tt);
          else
            kern::axpy(-d, phi_j, r, tt);
          a(i, j) = next;
          max_change = std::max(max_change, std::fabs(d));
        }
      }
    }
    if (max_change < tol) break;
  }
  return a;
}

double lasso_objective(const LassoProblem& problem, const Matrix& a) {
  const std::size_t n = problem.residual_stack.rows();
  const std::size_t tt = problem.residual_stack.cols();
  const bool has_mask = !problem.mask_stack.empty() && !problem.mask_stack.all_set();
  double data = 0.0;
  std::vector<double> r(tt);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = problem.residual_stack.row(i);
    std::copy(ri, ri + tt, r.begin());
    for (std::size_t j = 0; j < problem.trace_stack.rows(); ++j)
      if (a(i, j) != 0.0) kern::axpy(-a(i, j), problem.trace_stack.row(j), r.data(), tt);
    if (has_mask)
      data += kern::nrm2sq_mask(r.data(), problem.mask_stack.row(i), tt);
    else
      data += kern::nrm2sq(r.data(), tt);
  }
  double obj = data + problem.gamma1 * a.l1_norm();
  if (problem.anchor_weight > 0.0)
    obj += problem.anchor_weight * kern::diff_nrm2sq(a.data(), problem.anchor.data(), a.size());
  return obj;
}

DecorrelationTerms decorrelation_terms(const Matrix& phi) {
  const std::size_t p = phi.rows();
  DecorrelationTerms d;
  d.gram = matmul_a_bt(phi, phi);
  d.norm_scale.resize(p, p);
  std::vector<double> inv(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const double nrm = std::sqrt(d.gram(j, j));
    inv[j] = nrm > 0.0 ? 1.0 / nrm : 0.0;
  }
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t j2 = 0; j2 < p; ++j2) d.norm_scale(j, j2) = inv[j] * inv[j2];
  return d;
}

namespace {

void check_trace_shapes(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi,
                        const TracePrior& prior) {
  if (a.rows() != y.rows()) throw_param("trace solver: loading row count mismatch");
  if (a.cols() != phi.rows()) throw_param("trace solver: loading/trace dimension mismatch");
  if (phi.cols() != y.cols()) throw_param("trace solver: trace column count mismatch");
  if (!mask.empty() && (mask.rows() != y.rows() || mask.cols() != y.cols()))
    throw_param("trace solver: mask shape mismatch");
  if (prior.kind == TracePrior::Kind::lds &&
      (prior.w.rows() != phi.rows() || prior.w.cols() != phi.rows()))
    throw_param("trace solver: transition matrix shape mismatch");
}

double masked_data_term(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi) {
  const Matrix recon = matmul(a, phi);
  if (mask.empty()) return kern::diff_nrm2sq(recon.data(), y.data(), y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double* yr = y.row(i);
    const double* rr = recon.row(i);
    const std::uint8_t* mr = mask.row(i);
    for (std::size_t t = 0; t < y.cols(); ++t)
      if (mr[t]) {
        const double d = rr[t] - yr[t];
        acc += d * d;
      }
  }
  return acc;
}

// phi_t - P phi_{t-1} for t = 1..T-1, columns of a P x (T-1) matrix.
Matrix smooth_diffs(const Matrix& phi, const TracePrior& prior) {
  const std::size_t p = phi.rows();
  const std::size_t t_len = phi.cols();
  if (t_len < 2) return Matrix(p, 0);
  Matrix d(p, t_len - 1);
  const bool lds = prior.kind == TracePrior::Kind::lds;
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < p; ++j) {
      double prev = 0.0;
      if (lds) {
        const double* wr = prior.w.row(j);
        for (std::size_t j2 = 0; j2 < p; ++j2) prev += wr[j2] * phi(j2, t - 1);
      } else {
        prev = phi(j, t - 1);
      }
      d(j, t - 1) = phi(j, t) - prev;
    }
  }
  return d;
}

double decor_term(const Matrix& phi, double huber_eps, bool smoothed) {
  const std::size_t p = phi.rows();
  if (p < 2) return 0.0;
  const DecorrelationTerms d = decorrelation_terms(phi);
  double acc = 0.0;
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t j2 = j + 1; j2 < p; ++j2) {
      const double scale = d.norm_scale(j, j2);
      if (scale == 0.0) continue;
      const double c = d.gram(j, j2) * scale;
      acc += 2.0 * (smoothed ? std::sqrt(c * c + huber_eps * huber_eps) : std::fabs(c));
    }
  return acc;
}

}  // namespace

double trace_objective(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi,
                       double gamma3, double gamma4, const TracePrior& prior) {
  check_trace_shapes(y, mask, a, phi, prior);
  double obj = masked_data_term(y, mask, a, phi);
  if (gamma3 > 0.0) obj += gamma3 * smooth_diffs(phi, prior).frob_sq();
  if (gamma4 > 0.0) obj += gamma4 * decor_term(phi, 0.0, false);
  return obj;
}

double trace_objective_smoothed(const Matrix& y, const Mask& mask, const Matrix& a,
                                const Matrix& phi, double gamma3, double gamma4,
                                const TracePrior& prior, double huber_eps) {
  check_trace_shapes(y, mask, a, phi, prior);
  double obj = masked_data_term(y, mask, a, phi);
  if (gamma3 > 0.0) obj += gamma3 * smooth_diffs(phi, prior).frob_sq();
  if (gamma4 > 0.0) obj += gamma4 * decor_term(phi, huber_eps, true);
  return obj;
}

Matrix trace_gradient(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi,
                      double gamma3, double gamma4, const TracePrior& prior, double huber_eps) {
  check_trace_shapes(y, mask, a, phi, prior);
  const std::size_t p = phi.rows();
  const std::size_t t_len = phi.cols();

  Matrix err = matmul(a, phi);
  err.add_scaled(y, -1.0);
  if (!mask.empty())
    for (std::size_t i = 0; i < err.rows(); ++i) {
      const std::uint8_t* mr = mask.row(i);
      double* er = err.row(i);
      for (std::size_t t = 0; t < t_len; ++t)
        if (!mr[t]) er[t] = 0.0;
    }
  Matrix grad = matmul_at_b(a, err);
  grad.scale(2.0);

  if (gamma3 > 0.0 && t_len >= 2) {
    const Matrix d = smooth_diffs(phi, prior);
    const bool lds = prior.kind == TracePrior::Kind::lds;
    for (std::size_t t = 1; t < t_len; ++t) {
      for (std::size_t j = 0; j < p; ++j) {
        const double dt = d(j, t - 1);
        grad(j, t) += 2.0 * gamma3 * dt;
        if (lds) {
          // -2 gamma3 W^T d_t lands on column t-1
          for (std::size_t j2 = 0; j2 < p; ++j2)
            grad(j2, t - 1) -= 2.0 * gamma3 * prior.w(j, j2) * dt;
        } else {
          grad(j, t - 1) -= 2.0 * gamma3 * dt;
        }
      }
    }
  }

  if (gamma4 > 0.0 && p >= 2) {
    const DecorrelationTerms dt = decorrelation_terms(phi);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t j2 = j + 1; j2 < p; ++j2) {
        const double scale = dt.norm_scale(j, j2);
        if (scale == 0.0) continue;
        const double c = dt.gram(j, j2) * scale;
        const double hprime = c / std::sqrt(c * c + huber_eps * huber_eps);
        const double inv_j = std::sqrt(dt.norm_scale(j, j) > 0.0 ? dt.norm_scale(j, j) : 0.0);
        const double inv_j2 =
            std::sqrt(dt.norm_scale(j2, j2) > 0.0 ? dt.norm_scale(j2, j2) : 0.0);
        // d c / d phi_j = scale * phi_j2 - c * inv_j^2 * phi_j (and symmetrically)
        const double coeff = 2.0 * gamma4 * hprime;
        kern::axpy(coeff * scale, phi.row(j2), grad.row(j), t_len);
        kern::axpy(-coeff * c * inv_j * inv_j, phi.row(j), grad.row(j), t_len);
        kern::axpy(coeff * scale, phi.row(j), grad.row(j2), t_len);
        kern::axpy(-coeff * c * inv_j2 * inv_j2, phi.row(j2), grad.row(j2), t_len);
      }
  }
  return grad;
}

namespace {

bool solve_traces_exact(const Matrix& y, const Matrix& a, double gamma3, const TracePrior& prior,
                        Matrix& out) {
  const std::size_t p = a.cols();
  const std::size_t t_len = y.cols();
  const Matrix ata = matmul_at_b(a, a);
  const Matrix aty = matmul_at_b(a, y);

  const bool lds = prior.kind == TracePrior::Kind::lds;
  Matrix ptp;  // P^T P for the prior map
  if (lds)
    ptp = matmul_at_b(prior.w, prior.w);
  else
    ptp = Matrix::identity(p);

  std::vector<Matrix> diag(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Matrix d = ata;
    if (gamma3 > 0.0) {
      if (t + 1 < t_len) d.add_scaled(ptp, gamma3);
      if (t > 0)
        for (std::size_t j = 0; j < p; ++j) d(j, j) += gamma3;
    }
    diag[t] = std::move(d);
  }

  Matrix sub(p, p), sup(p, p);
  if (gamma3 > 0.0) {
    // sub couples x_{t-1}: -gamma3 P; sup couples x_{t+1}: -gamma3 P^T
    const Matrix w = lds ? prior.w : Matrix::identity(p);
    sub = w;
    sub.scale(-gamma3);
    sup = w.transposed();
    sup.scale(-gamma3);
  }

  out = aty;
  return block_tridiag_solve(diag, sub, sup, out);
}

}  // namespace

TraceSolveResult solve_traces(const Matrix& y, const Mask& mask, const Matrix& a, double gamma3,
                              double gamma4, bool nonneg, const TracePrior& prior,
                              const TraceSolverParams& params, const Matrix& warm_start) {
  check_trace_shapes(y, mask, a, warm_start, prior);
  if (!a.all_finite() || !warm_start.all_finite())
    throw_numeric("solve_traces: non-finite input");

  const bool full_mask = mask.empty() || mask.all_set();
  TraceSolveResult result;

  if (gamma4 == 0.0 && full_mask && !nonneg) {
    Matrix exact;
    if (solve_traces_exact(y, a, gamma3, prior, exact)) {
      const double obj_out = trace_objective(y, mask, a, exact, gamma3, gamma4, prior);
      const double obj_warm = trace_objective(y, mask, a, warm_start, gamma3, gamma4, prior);
      if (obj_out <= obj_warm) {
        result.phi = std::move(exact);
        result.used_exact = true;
        return result;
      }
      // Fall through only in the degenerate float case where the warm start
      // already sits at the minimum.
      result.phi = warm_start;
      result.used_exact = true;
      return result;
    }
    // Singular normal equations (rank-deficient loading with gamma3 = 0):
    // fall back to the iterative path below.
  }

  const double eps = params.huber_eps;
  Matrix phi = warm_start;
  if (nonneg)
    for (std::size_t i = 0; i < phi.size(); ++i)
      if (phi.data()[i] < 0.0) phi.data()[i] = 0.0;

  double obj = trace_objective_smoothed(y, mask, a, phi, gamma3, gamma4, prior, eps);

  double step = params.step_size;
  if (step <= 0.0) {
    const Matrix ata = matmul_at_b(a, a);
    double lips = 2.0 * power_iter_sym(ata, 20, 0x9E3779B9u);
    double prior_gain = 4.0;
    if (prior.kind == TracePrior::Kind::lds) {
      const Matrix wtw = matmul_at_b(prior.w, prior.w);
      prior_gain = 2.0 * (1.0 + power_iter_sym(wtw, 20, 0x85EBCA6Bu));
    }
    lips += 2.0 * gamma3 * prior_gain;
    step = 1.0 / std::max(lips, 1e-12);
  }

  bool warned = false;
  bool done = false;
  for (std::size_t it = 0; it < params.max_grad_iters && !done; ++it) {
    const Matrix grad = trace_gradient(y, mask, a, phi, gamma3, gamma4, prior, eps);
    double s = step;
    bool accepted = false;
    for (int half = 0; half <= 30; ++half) {
      Matrix trial = phi;
      trial.add_scaled(grad, -s);
      if (nonneg)
        for (std::size_t i = 0; i < trial.size(); ++i)
          if (trial.data()[i] < 0.0) trial.data()[i] = 0.0;
      const double trial_obj =
          trace_objective_smoothed(y, mask, a, trial, gamma3, gamma4, prior, eps);
      if (trial_obj <= obj && std::isfinite(trial_obj)) {
        const double rel = (obj - trial_obj) / std::max(std::fabs(obj), 1e-300);
        phi = std::move(trial);
        obj = trial_obj;
        accepted = true;
        step = s * 1.25;  // recover step length after successful halvings
        if (rel < 1e-8) done = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      warned = true;
      break;
    }
  }

  // The guarantee is on the exact objective, not the smoothed one.
  const double final_exact = trace_objective(y, mask, a, phi, gamma3, gamma4, prior);
  const double warm_exact = trace_objective(y, mask, a, warm_start, gamma3, gamma4, prior);
  if (final_exact > warm_exact) {
    result.phi = warm_start;
  } else {
    result.phi = std::move(phi);
  }
  result.step_warning = warned;
  return result;
}

Matrix fit_transition(const Matrix& phi, double gamma5) {
  const std::size_t p = phi.rows();
  const std::size_t t_len = phi.cols();
  if (t_len < 2) throw_param("fit_transition: need at least two timepoints");
  if (gamma5 < 0.0) throw_param("fit_transition: gamma5 must be nonnegative");

  Matrix b(p, p), g(p, p);
  for (std::size_t t = 1; t < t_len; ++t)
    for (std::size_t i = 0; i < p; ++i) {
      const double cur = phi(i, t);
      const double prev_i = phi(i, t - 1);
      for (std::size_t j = 0; j < p; ++j) {
        b(i, j) += cur * phi(j, t - 1);
        g(i, j) += prev_i * phi(j, t - 1);
      }
    }
  for (std::size_t i = 0; i < p; ++i) {
    b(i, i) += gamma5;
    g(i, i) += gamma5;
  }

  const LuFactor f = lu_factor(g);
  if (f.singular) {
    if (gamma5 == 0.0)
      throw_numeric("fit_transition: singular trace covariance; use a positive gamma5");
    throw_numeric("fit_transition: singular system");
  }
  // W G = B with G symmetric: solve G W^T = B^T, transpose back.
  return lu_solve(f, b.transposed()).transposed();
}

std::vector<std::size_t> linear_sum_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw_param("linear_sum_assignment: cost matrix must be square");
  if (n == 0) return {};
  if (!cost.all_finite()) throw_param("linear_sum_assignment: non-finite costs");

  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based augmenting path construction, O(n^3).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) perm[p[j] - 1] = j - 1;
  return perm;
}

}  // namespace milcci
