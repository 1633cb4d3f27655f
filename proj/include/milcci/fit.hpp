#pragma once

#include <functional>
#include <string>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/graph.hpp"
#include "milcci/matrix.hpp"

namespace milcci {

struct FitReport {
  ModelState state;
  std::size_t iters = 0;
  double final_objective = 0.0;
  std::vector<double> per_iter_seconds;
  std::vector<std::string> warnings;
  // A numeric failure mid-loop leaves the last completed iteration's state
  // here instead of throwing it away; callers decide how loudly to fail.
  bool aborted = false;
};

// Called after every outer iteration with (iteration, objective, seconds).
using ProgressHook = std::function<void(std::size_t, double, double)>;

// Observation minus the reconstruction of every category except `category`
// for trial m, masked entries zeroed. What the category's own variants get
// fit against.
Matrix partial_residual(const ModelState& state, const TrialSet& data, std::size_t m,
                        std::size_t category);

// One consistency-regularized slice update: stacks the partial residuals and
// group traces of the trials labeled with this value, anchors to the
// lambda-weighted sibling average, and runs warm-started coordinate descent.
// A value with no trials and no graph mass is left untouched (warned); with
// graph mass it still gets the anchor-only solve so every slice stays defined.
void update_variant(ModelState& state, const TrialSet& data, std::size_t category,
                    std::size_t value, const SimilarityGraph& graph, const Hyperparams& hyper,
                    std::vector<std::string>& warnings);

// Scales every live component column to unit L1 norm and multiplies the
// matching trace rows so per-trial reconstructions are preserved. Dead
// columns are reported through `warnings`.
void normalize_components(ModelState& state, const TrialSet& data,
                          std::vector<std::string>& warnings);

// Per-trial trace refresh; in dynamics mode alternates the trace solve with
// the transition refit for hyper.lds_inner_iters rounds.
void update_traces(ModelState& state, const TrialSet& data, const Hyperparams& hyper,
                   std::vector<std::string>& warnings);

// Full objective: masked data fidelity + gamma1 L1 of all tensors + gamma2
// symmetrized variant distances + per-trial smoothness/dynamics and
// decorrelation terms (+ the transition ridge in dynamics mode).
double fit_objective(const ModelState& state, const TrialSet& data,
                     const std::vector<SimilarityGraph>& graphs, const Hyperparams& hyper);

// The three-stage pipeline: graphs, dictionary-learning warm start, then the
// outer loop of variant updates, normalization, and trace updates until the
// relative objective change drops below hyper.tol.
FitReport fit(const TrialSet& data, const Hyperparams& hyper, ProgressHook hook = nullptr);

}  // namespace milcci
