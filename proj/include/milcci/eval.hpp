#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/synth.hpp"

namespace milcci {

// Alignment of estimated components to ground truth plus the correlations
// measured under that alignment. Correlations are signed; the assignment cost
// uses their absolute value so sign-flipped recoveries still pair up.
struct MatchResult {
  std::vector<std::size_t> permutation;  // estimated index -> true index
  std::vector<double> component_correlations;
  std::vector<double> trace_correlations;
  double mean_component_correlation = 0.0;
  double mean_trace_correlation = 0.0;
  std::vector<std::string> warnings;
};

MatchResult match_and_score(const ModelState& est, const GroundTruth& truth);

struct ReconstructionMetrics {
  std::vector<double> trial_mse;       // over observed entries
  std::vector<double> trial_relative;  // MSE / mean(Y^2)
  double pooled_mse = 0.0;
  double pooled_relative = 0.0;
};

ReconstructionMetrics reconstruction_metrics(const ModelState& state, const TrialSet& data);

enum class DfMode { components_nnz, components_plus_traces };

struct InfoCriteria {
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double hqc = 0.0;
  std::size_t k = 0;  // degrees of freedom used
  std::size_t n = 0;  // observed entries
  std::vector<std::string> warnings;
};

// Gaussian criteria from already-pooled quantities; the model-facing overload
// derives ssr/n from the state and k from df_mode.
InfoCriteria information_criteria_from(double ssr, std::size_t n, std::size_t k);
InfoCriteria information_criteria(const ModelState& state, const TrialSet& data, DfMode df_mode);

struct LooResult {
  double baseline_mse = 0.0;
  std::vector<double> channel_mse;         // pooled MSE with that channel's rows zeroed
  std::vector<double> contribution_pct;    // 100 * (mse_omit - mse) / mse
};

LooResult leave_one_out(const ModelState& state, const TrialSet& data);

struct ShapleyResult {
  std::vector<double> values;  // per channel
  bool exhaustive = false;     // true when all coalitions were enumerated
};

// Channel importance via coalition games on the reconstruction: the value of
// a coalition is the negative pooled MSE with all other channel rows zeroed.
// Enumerates every coalition when 2^N fits in n_coalitions, else samples
// uniform subsets with per-iteration derived seeds.
ShapleyResult shapley_approx(const ModelState& state, const TrialSet& data,
                             std::size_t n_coalitions, std::uint64_t seed);

struct PermutationReport {
  double original_mse = 0.0;
  double p_shuffle_rows = 1.0;
  double p_random_control = 1.0;
  double p_shuffle_each_component = 1.0;
  std::vector<double> p_per_component;  // channel shuffle restricted to one component
};

// Three structure nulls: a shared channel permutation across all tensors, a
// Gaussian control matched to the tensors' global moments, and independent
// channel permutations per component column. p-values use add-one smoothing:
// (#{null MSE <= original} + 1) / (n_perm + 1).
PermutationReport permutation_tests(const ModelState& state, const TrialSet& data,
                                    std::size_t n_perm, std::uint64_t seed);

// ||a - b||_F / sqrt(||a||_F^2 + ||b||_F^2), in [0, sqrt(2)]; 0 when both zero.
double frobenius_distance(const Matrix& a, const Matrix& b);

struct ValidationReport {
  LooResult loo;
  ShapleyResult shapley;
  PermutationReport permutation;
};

ValidationReport validate_model(const ModelState& state, const TrialSet& data, std::size_t n_perm,
                                std::size_t n_coalitions, std::uint64_t seed);

}  // namespace milcci
