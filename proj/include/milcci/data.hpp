#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "milcci/matrix.hpp"

namespace milcci {

enum class CategoryKind { categorical, ordinal };
enum class Preprocess { none, tanh };

// One labeled condition axis: its admissible values, how many components it
// owns, and how its variants relate (kernel bandwidth, free variants).
struct CategorySpec {
  std::string name;
  CategoryKind kind = CategoryKind::categorical;
  std::vector<std::string> values;
  std::size_t n_components = 1;
  double bandwidth = 1.0;                  // ordinal similarity kernel width
  std::vector<std::size_t> free_variants;  // variants left out of consistency coupling

  void validate() const;
  // Numeric positions for ordinal values (validated to parse as reals).
  std::vector<double> numeric_values() const;
};

// Per-trial label: one value index per category, in declaration order.
using Label = std::vector<std::size_t>;

struct Trial {
  std::string id;
  Matrix y;   // channels x time
  Mask mask;  // empty = fully observed; else same shape, nonzero = observed
  Label label;

  std::size_t n_timepoints() const { return y.cols(); }
  bool fully_observed() const { return mask.empty(); }
};

struct TrialSet {
  std::size_t n_channels = 0;
  std::vector<std::string> channel_names;  // may be empty
  std::vector<CategorySpec> categories;
  std::vector<Trial> trials;
  Preprocess preprocess = Preprocess::none;

  void validate() const;
};

// Token -> value index within a category; unknown token is a schema error.
std::size_t value_index(const CategorySpec& category, const std::string& token);

// Contiguous component-row ranges per category inside the stacked trace
// matrix; order follows category declaration order.
struct GroupIndex {
  std::vector<std::size_t> offsets;  // one per category
  std::vector<std::size_t> sizes;    // n_components per category
  std::size_t total = 0;

  static GroupIndex build(const std::vector<CategorySpec>& categories);
  std::size_t begin(std::size_t k) const { return offsets[k]; }
  std::size_t end(std::size_t k) const { return offsets[k] + sizes[k]; }
};

// Components of one category: a channels x components matrix per label variant.
struct ComponentTensor {
  std::size_t category = 0;
  std::vector<Matrix> variants;  // one N x p matrix per value of the category

  std::size_t n_variants() const { return variants.size(); }
  std::size_t n_channels() const { return variants.empty() ? 0 : variants[0].rows(); }
  std::size_t n_components() const { return variants.empty() ? 0 : variants[0].cols(); }
};

struct TraceSet {
  std::vector<Matrix> phi;  // per trial, P x T_m
};

struct TraceSolverParams {
  std::size_t max_grad_iters = 500;
  double step_size = 0.0;  // 0 = estimate from the loading spectrum
  double huber_eps = 1e-8;
};

struct Hyperparams {
  double gamma1 = 0.05;  // component sparsity
  double gamma2 = 0.05;  // cross-variant consistency
  double gamma3 = 0.1;   // trace smoothness / dynamics fidelity
  double gamma4 = 0.0;   // trace decorrelation
  double gamma5 = 0.1;   // transition ridge toward identity
  bool nonneg_components = false;
  bool nonneg_traces = false;
  std::size_t max_outer_iters = 50;
  double tol = 1e-6;
  std::size_t cd_max_sweeps = 200;
  double cd_tol = 1e-7;
  TraceSolverParams trace_solver;
  bool lds_enabled = false;
  std::size_t lds_inner_iters = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ModelState {
  std::vector<ComponentTensor> components;  // one per category
  GroupIndex groups;
  TraceSet traces;
  std::vector<Matrix> transitions;  // per trial, P x P; empty unless dynamics prior
  std::vector<double> objective_history;
  bool converged = false;
  double noise_variance = 0.0;
  std::vector<std::string> warnings;

  std::size_t n_channels() const {
    return components.empty() ? 0 : components[0].n_channels();
  }
  std::size_t total_components() const { return groups.total; }
};

// Assembles the loading matrix for a label: each category contributes the
// variant slice the label selects, concatenated in category order. Trials
// sharing a label therefore share the loading exactly.
Matrix build_loading(const std::vector<ComponentTensor>& components, const GroupIndex& groups,
                     const Label& label);

// Fresh all-zero model skeleton shaped to the trial set.
ModelState make_model_skeleton(const TrialSet& data);

}  // namespace milcci
