#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "milcci/data.hpp"

namespace milcci {

// Knobs for the synthetic benchmark generator: two labeled axes (an ordinal
// "difficulty" and a categorical "choice"), sparse per-variant channel maps,
// and smooth Gaussian-process traces shared within a label combination.
struct SynthParams {
  std::size_t n_channels = 80;
  std::size_t n_timepoints = 500;
  std::size_t n_trials = 250;
  std::size_t difficulty_levels = 5;
  std::size_t choice_levels = 2;
  std::vector<std::size_t> components_per_category = {2, 2};
  double difficulty_bandwidth = 1.0;
  double map_init_lo = 0.5, map_init_hi = 1.0;
  double sparsity_percentile = 60.0;
  double amplitude_lo = 0.2, amplitude_hi = 1.533;
  double lengthscale_lo = 0.05, lengthscale_hi = 0.2;  // in normalized time
  double gp_jitter = 1e-8;
  double trial_noise_sigma = 0.15;
  std::size_t n_random_components = 1;  // trailing components redrawn per trial
  double rescale_percentile = 98.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Full-scale benchmark configuration (80 x 500 x 250).
SynthParams full_params();
// Small configuration for quick runs and CI (40 x 200 x 100).
SynthParams desk_params();

struct GroundTruth {
  std::vector<ComponentTensor> components;  // thresholded maps, one tensor per category
  GroupIndex groups;
  TraceSet traces;               // per trial, P x T
  std::vector<Label> labels;     // per trial
};

// One draw from a zero-mean GP with an RBF kernel on linspace(0,1,T):
// K_st = amplitude^2 exp(-(u_s-u_t)^2 / (2 lengthscale^2)) + jitter 1[s=t].
// A failed factorization escalates the jitter tenfold up to three times.
std::vector<double> sample_gp(std::size_t t_len, double lengthscale, double amplitude,
                              double jitter, std::uint64_t seed);

// Deterministic generator: same params (incl. seed) -> identical output.
// Observations satisfy Y = A(label) * Phi exactly; no observation noise.
std::pair<TrialSet, GroundTruth> generate(const SynthParams& params);

}  // namespace milcci
