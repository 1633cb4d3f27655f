#include "milcci/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "milcci/error.hpp"
#include "milcci/kernels.hpp"
#include "milcci/parallel.hpp"
#include "milcci/rng.hpp"
#include "milcci/solvers.hpp"

namespace milcci {

namespace {

// Pearson correlation; flags instead of dividing by a zero spread.
double pearson(const std::vector<double>& x, const std::vector<double>& y, bool& degenerate) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    degenerate = true;
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

// The component's channel column under every full label combination,
// concatenated in lexicographic label order. This gives components from
// different categories vectors of equal length, so cross-category pairs are
// comparable in the assignment cost.
std::vector<double> flatten_component(const std::vector<ComponentTensor>& components,
                                      const GroupIndex& groups, std::size_t global_j) {
  std::size_t cat = 0;
  while (global_j >= groups.end(cat)) ++cat;
  const std::size_t col = global_j - groups.begin(cat);

  std::size_t n_combos = 1;
  for (const ComponentTensor& t : components) n_combos *= t.n_variants();
  const std::size_t n = components[cat].n_channels();

  std::vector<double> out;
  out.reserve(n_combos * n);
  std::vector<std::size_t> combo(components.size(), 0);
  for (std::size_t c = 0; c < n_combos; ++c) {
    const Matrix& slice = components[cat].variants[combo[cat]];
    for (std::size_t i = 0; i < n; ++i) out.push_back(slice(i, col));
    for (std::size_t k = components.size(); k-- > 0;) {
      if (++combo[k] < components[k].n_variants()) break;
      combo[k] = 0;
    }
  }
  return out;
}

std::vector<double> flatten_trace(const TraceSet& traces, std::size_t global_j) {
  std::vector<double> out;
  for (const Matrix& phi : traces.phi) {
    const double* row = phi.row(global_j);
    out.insert(out.end(), row, row + phi.cols());
  }
  return out;
}

Matrix reconstruct(const std::vector<ComponentTensor>& components, const GroupIndex& groups,
                   const Matrix& phi, const Label& label) {
  return matmul(build_loading(components, groups, label), phi);
}

// Observed-entry residual and signal power for one trial.
void trial_power(const Matrix& y, const Mask& mask, const Matrix& recon, double& ssr, double& yy,
                 std::size_t& count) {
  ssr = 0.0;
  yy = 0.0;
  count = 0;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t t = 0; t < y.cols(); ++t) {
      if (!mask.empty() && !mask(i, t)) continue;
      const double d = y(i, t) - recon(i, t);
      ssr += d * d;
      yy += y(i, t) * y(i, t);
      ++count;
    }
}

double pooled_mse(const std::vector<ComponentTensor>& components, const GroupIndex& groups,
                  const TraceSet& traces, const TrialSet& data) {
  double ssr_total = 0.0;
  std::size_t count_total = 0;
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const Trial& tr = data.trials[m];
    const Matrix recon = reconstruct(components, groups, traces.phi[m], tr.label);
    double ssr, yy;
    std::size_t count;
    trial_power(tr.y, tr.mask, recon, ssr, yy, count);
    ssr_total += ssr;
    count_total += count;
  }
  return count_total > 0 ? ssr_total / double(count_total) : 0.0;
}

// Per-channel residual and signal power of the fitted state; channel rows of
// the reconstruction are independent, so zeroing a set of channel rows in the
// tensors turns that channel's residual into its raw signal power. All the
// coalition games below reduce to these two vectors.
struct ChannelPower {
  std::vector<double> row_ssr;
  std::vector<double> row_yy;
  std::size_t count = 0;
};

ChannelPower channel_power(const ModelState& state, const TrialSet& data) {
  ChannelPower cp;
  cp.row_ssr.assign(data.n_channels, 0.0);
  cp.row_yy.assign(data.n_channels, 0.0);
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const Trial& tr = data.trials[m];
    const Matrix recon =
        reconstruct(state.components, state.groups, state.traces.phi[m], tr.label);
    for (std::size_t i = 0; i < tr.y.rows(); ++i)
      for (std::size_t t = 0; t < tr.y.cols(); ++t) {
        if (!tr.mask.empty() && !tr.mask(i, t)) continue;
        const double d = tr.y(i, t) - recon(i, t);
        cp.row_ssr[i] += d * d;
        cp.row_yy[i] += tr.y(i, t) * tr.y(i, t);
        ++cp.count;
      }
  }
  return cp;
}

std::vector<ComponentTensor> copy_components(const std::vector<ComponentTensor>& src) {
  return src;
}

}  // namespace

MatchResult match_and_score(const ModelState& est, const GroundTruth& truth) {
  if (est.groups.total != truth.groups.total)
    throw_schema("match_and_score: component counts differ (" +
                 std::to_string(est.groups.total) + " vs " +
                 std::to_string(truth.groups.total) + ")");
  if (est.components.size() != truth.components.size())
    throw_schema("match_and_score: category counts differ");
  for (std::size_t k = 0; k < est.components.size(); ++k)
    if (est.components[k].n_variants() != truth.components[k].n_variants())
      throw_schema("match_and_score: variant counts differ in category " + std::to_string(k));
  if (est.traces.phi.size() != truth.traces.phi.size())
    throw_schema("match_and_score: trial counts differ");

  const std::size_t p = est.groups.total;
  MatchResult res;
  bool degenerate = false;

  std::vector<std::vector<double>> est_flat(p), true_flat(p);
  for (std::size_t j = 0; j < p; ++j) {
    est_flat[j] = flatten_component(est.components, est.groups, j);
    true_flat[j] = flatten_component(truth.components, truth.groups, j);
  }

  Matrix cost(p, p);
  Matrix corr(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      bool degen = false;
      const double c = pearson(est_flat[i], true_flat[j], degen);
      degenerate = degenerate || degen;
      corr(i, j) = c;
      cost(i, j) = 1.0 - std::fabs(c);
    }

  res.permutation = linear_sum_assignment(cost);
  for (std::size_t i = 0; i < p; ++i)
    res.component_correlations.push_back(corr(i, res.permutation[i]));

  for (std::size_t i = 0; i < p; ++i) {
    const std::vector<double> e = flatten_trace(est.traces, i);
    const std::vector<double> t = flatten_trace(truth.traces, res.permutation[i]);
    if (e.size() != t.size()) throw_schema("match_and_score: trace lengths differ");
    bool degen = false;
    const double c = pearson(e, t, degen);
    degenerate = degenerate || degen;
    res.trace_correlations.push_back(c);
  }

  res.mean_component_correlation =
      std::accumulate(res.component_correlations.begin(), res.component_correlations.end(), 0.0) /
      double(p);
  res.mean_trace_correlation =
      std::accumulate(res.trace_correlations.begin(), res.trace_correlations.end(), 0.0) /
      double(p);
  if (degenerate)
    res.warnings.push_back("match_and_score: zero-variance vector, correlation reported as 0");
  return res;
}

ReconstructionMetrics reconstruction_metrics(const ModelState& state, const TrialSet& data) {
  ReconstructionMetrics out;
  double ssr_total = 0.0, yy_total = 0.0;
  std::size_t count_total = 0;
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const Trial& tr = data.trials[m];
    const Matrix recon =
        reconstruct(state.components, state.groups, state.traces.phi[m], tr.label);
    double ssr, yy;
    std::size_t count;
    trial_power(tr.y, tr.mask, recon, ssr, yy, count);
    const double mse = count > 0 ? ssr / double(count) : 0.0;
    const double meansq = count > 0 ? yy / double(count) : 0.0;
    out.trial_mse.push_back(mse);
    out.trial_relative.push_back(meansq > 0.0 ? mse / meansq : (mse > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
    ssr_total += ssr;
    yy_total += yy;
    count_total += count;
  }
  if (count_total > 0) {
    out.pooled_mse = ssr_total / double(count_total);
    out.pooled_relative = yy_total > 0.0
                              ? ssr_total / yy_total
                              : (ssr_total > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return out;
}

InfoCriteria information_criteria_from(double ssr, std::size_t n, std::size_t k) {
  InfoCriteria ic;
  ic.k = k;
  ic.n = n;
  const double nd = double(n);
  const double sigma2 = n > 0 ? ssr / nd : 0.0;
  if (sigma2 <= 0.0) {
    ic.warnings.push_back("information_criteria: zero residual variance, likelihood unbounded");
    ic.loglik = std::numeric_limits<double>::infinity();
  } else {
    ic.loglik = -0.5 * nd * (std::log(2.0 * 3.14159265358979323846 * sigma2) + 1.0);
  }
  const double kd = double(k);
  ic.aic = 2.0 * kd - 2.0 * ic.loglik;
  ic.bic = kd * std::log(nd) - 2.0 * ic.loglik;
  ic.hqc = 2.0 * kd * std::log(std::log(nd)) - 2.0 * ic.loglik;
  return ic;
}

InfoCriteria information_criteria(const ModelState& state, const TrialSet& data, DfMode df_mode) {
  double ssr_total = 0.0;
  std::size_t count_total = 0;
  for (std::size_t m = 0; m < data.trials.size(); ++m) {
    const Trial& tr = data.trials[m];
    const Matrix recon =
        reconstruct(state.components, state.groups, state.traces.phi[m], tr.label);
    double ssr, yy;
    std::size_t count;
    trial_power(tr.y, tr.mask, recon, ssr, yy, count);
    ssr_total += ssr;
    count_total += count;
  }

  std::size_t k = 0;
  for (const ComponentTensor& tensor : state.components)
    for (const Matrix& v : tensor.variants)
      for (std::size_t i = 0; i < v.size(); ++i)
        if (v.data()[i] != 0.0) ++k;
  if (df_mode == DfMode::components_plus_traces)
    for (const Matrix& phi : state.traces.phi) k += phi.size();

  return information_criteria_from(ssr_total, count_total, k);
}

LooResult leave_one_out(const ModelState& state, const TrialSet& data) {
  const ChannelPower cp = channel_power(state, data);
  LooResult out;
  const double total_ssr = std::accumulate(cp.row_ssr.begin(), cp.row_ssr.end(), 0.0);
  out.baseline_mse = cp.count > 0 ? total_ssr / double(cp.count) : 0.0;
  for (std::size_t nch = 0; nch < data.n_channels; ++nch) {
    // Zeroing channel nch's rows swaps its residual power for its raw power.
    const double ssr_omit = total_ssr - cp.row_ssr[nch] + cp.row_yy[nch];
    const double mse_omit = cp.count > 0 ? ssr_omit / double(cp.count) : 0.0;
    out.channel_mse.push_back(mse_omit);
    if (out.baseline_mse > 0.0)
      out.contribution_pct.push_back(100.0 * (mse_omit - out.baseline_mse) / out.baseline_mse);
    else
      out.contribution_pct.push_back(
          mse_omit > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return out;
}

ShapleyResult shapley_approx(const ModelState& state, const TrialSet& data,
                             std::size_t n_coalitions, std::uint64_t seed) {
  if (n_coalitions == 0) throw_param("shapley_approx: need at least one coalition");
  const std::size_t n = data.n_channels;
  const ChannelPower cp = channel_power(state, data);
  const double denom = cp.count > 0 ? double(cp.count) : 1.0;

  // v(S) = -(sum_{i in S} ssr_i + sum_{i not in S} yy_i) / count; channels
  // outside the coalition contribute their unexplained raw power.
  auto value = [&](const std::vector<char>& in) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += in[i] ? cp.row_ssr[i] : cp.row_yy[i];
    return -acc / denom;
  };

  ShapleyResult out;
  out.values.assign(n, 0.0);

  if (n < 63 && (std::size_t(1) << n) <= n_coalitions) {
    out.exhaustive = true;
    // Exact weights |S|! (n-1-|S|)! / n! = 1 / (n * C(n-1, |S|)).
    std::vector<double> weight(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      double binom = 1.0;
      for (std::size_t i = 0; i < s; ++i)
        binom *= double(n - 1 - i) / double(i + 1);
      weight[s] = 1.0 / (double(n) * binom);
    }
    std::vector<char> in(n, 0);
    const std::size_t total = std::size_t(1) << n;
    for (std::size_t bits = 0; bits < total; ++bits) {
      std::size_t size = 0;
      for (std::size_t i = 0; i < n; ++i) {
        in[i] = (bits >> i) & 1;
        size += in[i];
      }
      const double v = value(in);
      for (std::size_t i = 0; i < n; ++i) {
        if (in[i]) continue;
        in[i] = 1;
        out.values[i] += weight[size] * (value(in) - v);
        in[i] = 0;
      }
    }
    return out;
  }

  std::vector<double> marginal_sum(n, 0.0);
  std::vector<std::size_t> marginal_n(n, 0);
  std::vector<std::vector<char>> subsets(n_coalitions, std::vector<char>(n, 0));
  parallel_for(n_coalitions, [&](std::size_t it) {
    Rng rng(Rng::derive(seed, {0x5AB1u, it}));
    for (std::size_t i = 0; i < n; ++i) subsets[it][i] = rng.next_u64() & 1;
  });
  for (std::size_t it = 0; it < n_coalitions; ++it) {
    std::vector<char>& in = subsets[it];
    const double v = value(in);
    for (std::size_t i = 0; i < n; ++i) {
      if (in[i]) continue;
      in[i] = 1;
      marginal_sum[i] += value(in) - v;
      in[i] = 0;
      ++marginal_n[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    out.values[i] = marginal_n[i] > 0 ? marginal_sum[i] / double(marginal_n[i]) : 0.0;
  return out;
}

PermutationReport permutation_tests(const ModelState& state, const TrialSet& data,
                                    std::size_t n_perm, std::uint64_t seed) {
  if (n_perm == 0) throw_param("permutation_tests: need at least one permutation");
  const std::size_t n = data.n_channels;
  const std::size_t p = state.groups.total;
  PermutationReport out;
  out.original_mse = pooled_mse(state.components, state.groups, state.traces, data);

  // Global moments of the tensors, for the Gaussian control.
  double mean = 0.0, sq = 0.0;
  std::size_t n_entries = 0;
  for (const ComponentTensor& tensor : state.components)
    for (const Matrix& v : tensor.variants) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        mean += v.data()[i];
        sq += v.data()[i] * v.data()[i];
      }
      n_entries += v.size();
    }
  mean /= double(n_entries);
  const double sd = std::sqrt(std::max(0.0, sq / double(n_entries) - mean * mean));

  std::vector<double> mse_rows(n_perm), mse_gauss(n_perm), mse_each(n_perm);
  Matrix mse_comp(n_perm, p);

  parallel_for(n_perm, [&](std::size_t it) {
    std::vector<std::size_t> perm(n);

    // Null 1: one channel permutation shared by every tensor.
    {
      Rng rng(Rng::derive(seed, {1, it}));
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm.data(), n);
      std::vector<ComponentTensor> shuffled = copy_components(state.components);
      for (ComponentTensor& tensor : shuffled)
        for (std::size_t vi = 0; vi < tensor.n_variants(); ++vi) {
          const Matrix& src = state.components[tensor.category].variants[vi];
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < src.cols(); ++j)
              tensor.variants[vi](i, j) = src(perm[i], j);
        }
      mse_rows[it] = pooled_mse(shuffled, state.groups, state.traces, data);
    }

    // Null 2: Gaussian tensors with the same global mean and spread.
    {
      Rng rng(Rng::derive(seed, {2, it}));
      std::vector<ComponentTensor> random = copy_components(state.components);
      for (ComponentTensor& tensor : random)
        for (Matrix& v : tensor.variants)
          for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = mean + sd * rng.normal();
      mse_gauss[it] = pooled_mse(random, state.groups, state.traces, data);
    }

    // Null 3: an independent channel permutation inside each component column
    // (shared across that component's variants so the variant structure stays
    // aligned), plus the per-component diagnostics.
    {
      Rng rng(Rng::derive(seed, {3, it}));
      std::vector<ComponentTensor> shuffled = copy_components(state.components);
      for (std::size_t j = 0; j < p; ++j) {
        std::size_t cat = 0;
        while (j >= state.groups.end(cat)) ++cat;
        const std::size_t col = j - state.groups.begin(cat);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm.data(), n);
        for (std::size_t vi = 0; vi < shuffled[cat].n_variants(); ++vi) {
          const Matrix& src = state.components[cat].variants[vi];
          for (std::size_t i = 0; i < n; ++i)
            shuffled[cat].variants[vi](i, col) = src(perm[i], col);
        }

        // Diagnostic: only this component shuffled, everything else intact.
        std::vector<ComponentTensor> solo = copy_components(state.components);
        for (std::size_t vi = 0; vi < solo[cat].n_variants(); ++vi)
          for (std::size_t i = 0; i < n; ++i)
            solo[cat].variants[vi](i, col) = shuffled[cat].variants[vi](i, col);
        mse_comp(it, j) = pooled_mse(solo, state.groups, state.traces, data);
      }
      mse_each[it] = pooled_mse(shuffled, state.groups, state.traces, data);
    }
  });

  auto pvalue = [&](const std::vector<double>& null_mse) {
    std::size_t hits = 0;
    for (double v : null_mse)
      if (v <= out.original_mse) ++hits;
    return double(hits + 1) / double(n_perm + 1);
  };
  out.p_shuffle_rows = pvalue(mse_rows);
  out.p_random_control = pvalue(mse_gauss);
  out.p_shuffle_each_component = pvalue(mse_each);
  for (std::size_t j = 0; j < p; ++j) {
    std::size_t hits = 0;
    for (std::size_t it = 0; it < n_perm; ++it)
      if (mse_comp(it, j) <= out.original_mse) ++hits;
    out.p_per_component.push_back(double(hits + 1) / double(n_perm + 1));
  }
  return out;
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw_schema("frobenius_distance: shapes differ");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    diff += d * d;
  }
  const double denom = a.frob_sq() + b.frob_sq();
  if (denom <= 0.0) return 0.0;
  return std::sqrt(diff / denom);
}

ValidationReport validate_model(const ModelState& state, const TrialSet& data, std::size_t n_perm,
                                std::size_t n_coalitions, std::uint64_t seed) {
  ValidationReport report;
  report.loo = leave_one_out(state, data);
  report.shapley = shapley_approx(state, data, n_coalitions, seed);
  report.permutation = permutation_tests(state, data, n_perm, seed);
  return report;
}

}  // namespace milcci
