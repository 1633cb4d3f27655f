#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/matrix.hpp"

namespace milcci {

struct InitResult {
  Matrix dictionary;          // channels x P, columns L1-normalized (or zero)
  std::vector<Matrix> codes;  // per trial, P x T_m
  std::size_t n_iters_run = 0;
  std::vector<double> recon_history;  // pooled squared error after each alternation
  std::vector<std::string> warnings;
};

// Plain dictionary learning for warm starts: alternate per-trial sparse
// coding (coordinate descent on the transposed problem, no anchor) with a
// least-squares dictionary refit and per-column L1 normalization that
// rescales the codes in compensation. Masked entries take part in neither
// step. nonneg clamps both the codes and the dictionary.
InitResult dict_learn(const TrialSet& trials, std::size_t p_total, double gamma1_init,
                      std::size_t n_iters, std::uint64_t seed, bool nonneg);

// Spreads the learned dictionary into a model: each category takes its block
// of columns in declaration order, replicated across every variant; the codes
// become the initial traces.
ModelState seed_model(const InitResult& init, const TrialSet& trials);

}  // namespace milcci
