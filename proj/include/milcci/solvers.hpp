#pragma once

#include <cstddef>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/matrix.hpp"

namespace milcci {

// One consistency-regularized LASSO instance for a single variant slice:
//   minimize ||R - A Phi||_F^2 + gamma1 ||A||_1 + w ||A - anchor||_F^2
// over A (channels x components). residual_stack/trace_stack are horizontal
// stacks over the trials carrying the variant's label value; anchor is the
// normalized (convex) lambda-weighted combination of sibling variants and
// w = anchor_weight the consistency strength in front of it.
struct LassoProblem {
  Matrix residual_stack;  // N x T_total, masked entries pre-zeroed
  Matrix trace_stack;     // p x T_total
  Mask mask_stack;        // empty = fully observed
  Matrix anchor;          // N x p
  double anchor_weight = 0.0;
  double gamma1 = 0.0;
  bool nonneg = false;
};

double soft_threshold(double x, double tau);

// Cyclic coordinate descent with exact per-entry closed form. Stops when the
// largest per-entry change in a sweep drops below tol or after max_sweeps.
// Never increases the objective across sweeps.
Matrix cd_lasso_variant(const LassoProblem& problem, const Matrix& warm_start,
                        std::size_t max_sweeps, double tol);

// Objective value of a LassoProblem at a given A (tests and diagnostics).
double lasso_objective(const LassoProblem& problem, const Matrix& a);

// Temporal coupling applied to consecutive trace columns: either plain
// smoothness (phi_t ~ phi_{t-1}) or a per-trial linear-dynamics transition
// (phi_t ~ W phi_{t-1}).
struct TracePrior {
  enum class Kind { smoothness, lds };
  Kind kind = Kind::smoothness;
  Matrix w;  // P x P, lds only

  static TracePrior smoothness() { return {}; }
  static TracePrior lds(Matrix w_) {
    TracePrior p;
    p.kind = Kind::lds;
    p.w = std::move(w_);
    return p;
  }
};

// Row-wise Gram and inverse-norm scaling of a trace matrix; the elementwise
// product gram .* norm_scale gives the cosine matrix of the decorrelation
// penalty (zero where either row has zero norm).
struct DecorrelationTerms {
  Matrix gram;        // P x P
  Matrix norm_scale;  // P x P
};

DecorrelationTerms decorrelation_terms(const Matrix& phi);

// Sum of squared masked residuals + gamma3 * sum_t ||phi_t - P phi_{t-1}||^2
// + gamma4 * sum_{j != j'} |cos(phi_j, phi_j')| (ordered pairs; zero-norm
// rows contribute nothing).
double trace_objective(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi,
                       double gamma3, double gamma4, const TracePrior& prior);

// Same objective with |.| replaced by sqrt(x^2 + huber_eps^2) in the
// decorrelation term, and its analytic gradient with respect to phi.
double trace_objective_smoothed(const Matrix& y, const Mask& mask, const Matrix& a,
                                const Matrix& phi, double gamma3, double gamma4,
                                const TracePrior& prior, double huber_eps);
Matrix trace_gradient(const Matrix& y, const Mask& mask, const Matrix& a, const Matrix& phi,
                      double gamma3, double gamma4, const TracePrior& prior, double huber_eps);

struct TraceSolveResult {
  Matrix phi;
  bool step_warning = false;  // line search exhausted its halvings at least once
  bool used_exact = false;    // solved through the coupled linear system
};

// Trace subproblem. The separable case (gamma4 = 0, full mask, no
// nonnegativity) goes through the coupled block-tridiagonal normal equations
// and is exact; everything else runs projected gradient descent on the
// smoothed objective with a backtracking step. The returned traces never
// score worse than the warm start on trace_objective.
TraceSolveResult solve_traces(const Matrix& y, const Mask& mask, const Matrix& a, double gamma3,
                              double gamma4, bool nonneg, const TracePrior& prior,
                              const TraceSolverParams& params, const Matrix& warm_start);

// Ridge-regularized one-step transition fit:
//   W = (sum_t phi_t phi_{t-1}^T + gamma5 I)(sum_t phi_{t-1} phi_{t-1}^T + gamma5 I)^{-1},
// the minimizer of sum_t ||phi_t - W phi_{t-1}||^2 + gamma5 ||W - I||_F^2.
Matrix fit_transition(const Matrix& phi, double gamma5);

// Minimum-cost perfect matching on a square cost matrix; returns pi with
// pi[row] = assigned column.
std::vector<std::size_t> linear_sum_assignment(const Matrix& cost);

}  // namespace milcci
