#include "milcci/init.hpp"

#include <atomic>
#include <cmath>
#include <utility>

#include "milcci/error.hpp"
#include "milcci/kernels.hpp"
#include "milcci/linalg.hpp"
#include "milcci/parallel.hpp"
#include "milcci/rng.hpp"
#include "milcci/solvers.hpp"

namespace milcci {

namespace {

constexpr std::size_t kCodingSweeps = 50;
constexpr double kCodingTol = 1e-7;

double pooled_sq_error(const TrialSet& data, const Matrix& dict,
                       const std::vector<Matrix>& codes) {
  double acc = 0.0;
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const Trial& tr = data.trials[m];
    const Matrix recon = matmul(dict, codes[m]);
    if (tr.fully_observed()) {
      acc += kern::diff_nrm2sq(recon.data(), tr.y.data(), tr.y.size());
    } else {
      for (std::size_t i = 0; i < tr.y.rows(); ++i) {
        const std::uint8_t* mr = tr.mask.row(i);
        for (std::size_t t = 0; t < tr.y.cols(); ++t)
          if (mr[t]) {
            const double d = recon(i, t) - tr.y(i, t);
            acc += d * d;
          }
      }
    }
  }
  return acc;
}

// Least-squares dictionary refit given codes. Without masks all channels
// share one Gram matrix; with masks each channel solves against its own
// observed columns. Singular systems get a diagonal jitter retry before the
// previous dictionary row is kept as a fallback.
void refit_dictionary(const TrialSet& data, const std::vector<Matrix>& codes, Matrix& dict,
                      bool any_mask, std::atomic<bool>& kept_stale) {
  const std::size_t n = dict.rows();
  const std::size_t p = dict.cols();

  if (!any_mask) {
    Matrix gram(p, p), rhs(p, n);
    for (std::size_t m = 0; m < data.trials.size(); ++m) {
      gram.add_scaled(matmul_a_bt(codes[m], codes[m]), 1.0);
      rhs.add_scaled(matmul_a_bt(codes[m], data.trials[m].y), 1.0);
    }
    LuFactor f = lu_factor(gram);
    if (f.singular) {
      double tr = 0.0;
      for (std::size_t j = 0; j < p; ++j) tr += gram(j, j);
      Matrix jittered = gram;
      for (std::size_t j = 0; j < p; ++j) jittered(j, j) += (tr / double(p) + 1e-300) * 1e-10;
      f = lu_factor(std::move(jittered));
    }
    if (f.singular) {
      kept_stale.store(true);
      return;
    }
    dict = lu_solve(f, rhs).transposed();
    return;
  }

  parallel_for(n, [&](std::size_t i) {
    Matrix gram(p, p);
    std::vector<double> rhs(p, 0.0);
    for (std::size_t m = 0; m < data.trials.size(); ++m) {
      const Trial& tr = data.trials[m];
      const Matrix& c = codes[m];
      const std::size_t t_len = tr.y.cols();
      const bool full = tr.fully_observed();
      const std::uint8_t* mr = full ? nullptr : tr.mask.row(i);
      for (std::size_t t = 0; t < t_len; ++t) {
        if (!full && !mr[t]) continue;
        const double yv = tr.y(i, t);
        for (std::size_t j = 0; j < p; ++j) {
          const double cj = c(j, t);
          rhs[j] += cj * yv;
          for (std::size_t j2 = 0; j2 <= j; ++j2) gram(j, j2) += cj * c(j2, t);
        }
      }
    }
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t j2 = j + 1; j2 < p; ++j2) gram(j, j2) = gram(j2, j);
    try {
      const std::vector<double> row = solve_spd(gram, rhs);
      for (std::size_t j = 0; j < p; ++j) dict(i, j) = row[j];
    } catch (const Error&) {
      kept_stale.store(true);  // keep the previous row for this channel
    }
  });
}

}  // namespace

InitResult dict_learn(const TrialSet& data, std::size_t p_total, double gamma1_init,
                      std::size_t n_iters, std::uint64_t seed, bool nonneg) {
  data.validate();
  if (p_total == 0) throw_param("dict_learn: need at least one dictionary column");
  if (n_iters == 0) throw_param("dict_learn: n_iters must be at least 1");
  if (gamma1_init < 0.0) throw_param("dict_learn: negative sparsity weight");

  const std::size_t n = data.n_channels;
  const std::size_t n_trials = data.trials.size();

  InitResult out;
  out.codes.resize(n_trials);
  for (std::size_t m = 0; m < n_trials; ++m)
    out.codes[m] = Matrix(p_total, data.trials[m].y.cols());

  bool all_zero = true;
  bool any_mask = false;
  for (const Trial& tr : data.trials) {
    if (!tr.fully_observed() && !tr.mask.all_set()) any_mask = true;
    if (all_zero) {
      for (std::size_t i = 0; i < tr.y.size() && all_zero; ++i)
        if (tr.y.data()[i] != 0.0) all_zero = false;
    }
  }
  if (all_zero) {
    out.dictionary = Matrix(n, p_total);
    out.warnings.push_back("dict_learn: all observed data is zero; returning a zero dictionary");
    return out;
  }

  Rng rng(Rng::derive(seed, {0x1D1C7u}));
  out.dictionary = Matrix(n, p_total);
  const double lo = nonneg ? 0.01 : 0.0;
  for (std::size_t i = 0; i < out.dictionary.size(); ++i)
    out.dictionary.data()[i] = rng.uniform(lo, 1.0);

  for (std::size_t iter = 0; iter < n_iters; ++iter) {
    // (a) sparse coding per trial, on the transposed problem so the codes sit
    // in the coefficient slot of the coordinate-descent solver.
    const Matrix dict_t = out.dictionary.transposed();  // P x N
    parallel_for(n_trials, [&](std::size_t m) {
      const Trial& tr = data.trials[m];
      const std::size_t t_len = tr.y.cols();
      LassoProblem prob;
      prob.trace_stack = dict_t;
      prob.residual_stack = tr.y.transposed();  // T x N
      if (!tr.fully_observed() && !tr.mask.all_set()) {
        Mask mt(t_len, n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < t_len; ++t) {
            mt(t, i) = tr.mask(i, t);
            if (!mt(t, i)) prob.residual_stack(t, i) = 0.0;
          }
        prob.mask_stack = std::move(mt);
      }
      prob.anchor = Matrix(t_len, p_total);
      prob.gamma1 = gamma1_init;
      prob.nonneg = nonneg;
      const Matrix coded =
          cd_lasso_variant(prob, out.codes[m].transposed(), kCodingSweeps, kCodingTol);
      out.codes[m] = coded.transposed();
    });

    // (b) dictionary refit, then per-column L1 normalization with the codes
    // absorbing the scale so reconstructions are untouched.
    std::atomic<bool> kept_stale{false};
    refit_dictionary(data, out.codes, out.dictionary, any_mask, kept_stale);
    if (kept_stale.load())
      out.warnings.push_back("dict_learn: singular code covariance; kept previous dictionary rows");
    if (nonneg)
      for (std::size_t i = 0; i < out.dictionary.size(); ++i)
        if (out.dictionary.data()[i] < 0.0) out.dictionary.data()[i] = 0.0;

    for (std::size_t j = 0; j < p_total; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::fabs(out.dictionary(i, j));
      if (s <= 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) out.dictionary(i, j) /= s;
      for (std::size_t m = 0; m < n_trials; ++m) kern::scal(s, out.codes[m].row(j), out.codes[m].cols());
    }

    out.recon_history.push_back(pooled_sq_error(data, out.dictionary, out.codes));
    ++out.n_iters_run;
  }

  if (!out.dictionary.all_finite()) throw_numeric("dict_learn: dictionary diverged");
  return out;
}

ModelState seed_model(const InitResult& init, const TrialSet& data) {
  ModelState state = make_model_skeleton(data);
  if (state.groups.total != init.dictionary.cols())
    throw_schema("seed_model: dictionary has " + std::to_string(init.dictionary.cols()) +
                 " columns but the categories declare " + std::to_string(state.groups.total) +
                 " components");
  if (init.codes.size() != data.trials.size())
    throw_schema("seed_model: code count does not match trial count");

  const std::size_t n = data.n_channels;
  for (std::size_t k = 0; k < data.categories.size(); ++k) {
    const std::size_t off = state.groups.begin(k);
    const std::size_t p = state.groups.sizes[k];
    Matrix block(n, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) block(i, j) = init.dictionary(i, off + j);
    for (Matrix& variant : state.components[k].variants) variant = block;
  }
  state.traces.phi = init.codes;
  state.warnings = init.warnings;
  return state;
}

}  // namespace milcci
