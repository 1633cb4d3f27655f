#include "milcci/data.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include "milcci/error.hpp"

namespace milcci {

void CategorySpec::validate() const {
  if (name.empty()) throw_schema("category with empty name");
  if (values.empty()) throw_schema("category '" + name + "' has no values");
  if (n_components == 0) throw_schema("category '" + name + "' has zero components");
  std::set<std::string> seen(values.begin(), values.end());
  if (seen.size() != values.size())
    throw_schema("category '" + name + "' has duplicate values");
  if (kind == CategoryKind::ordinal) {
    if (!(bandwidth > 0.0))
      throw_schema("category '" + name + "': ordinal bandwidth must be positive");
    numeric_values();  // throws if any token fails to parse
  }
  for (std::size_t i : free_variants)
    if (i >= values.size())
      throw_schema("category '" + name + "': free variant index out of range");
}

std::vector<double> CategorySpec::numeric_values() const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || !std::isfinite(x))
      throw_schema("category '" + name + "': ordinal value '" + v +
                   "' does not parse as a real number");
    out.push_back(x);
  }
  return out;
}

void TrialSet::validate() const {
  if (n_channels == 0) throw_schema("trial set with zero channels");
  if (!channel_names.empty() && channel_names.size() != n_channels)
    throw_schema("channel name count does not match channel count");
  if (categories.empty()) throw_schema("trial set with no categories");
  for (const auto& c : categories) c.validate();
  for (const auto& t : trials) {
    if (t.y.rows() != n_channels)
      throw_schema("trial '" + t.id + "': row count " + std::to_string(t.y.rows()) +
                   " does not match channel count " + std::to_string(n_channels));
    if (t.y.cols() == 0) throw_schema("trial '" + t.id + "': no timepoints");
    if (!t.mask.empty() &&
        (t.mask.rows() != t.y.rows() || t.mask.cols() != t.y.cols()))
      throw_schema("trial '" + t.id + "': mask shape mismatch");
    if (t.label.size() != categories.size())
      throw_schema("trial '" + t.id + "': label arity " + std::to_string(t.label.size()) +
                   " does not match category count " + std::to_string(categories.size()));
    for (std::size_t k = 0; k < t.label.size(); ++k)
      if (t.label[k] >= categories[k].values.size())
        throw_schema("trial '" + t.id + "': label index out of range for category '" +
                     categories[k].name + "'");
    if (!t.y.all_finite()) throw_schema("trial '" + t.id + "': non-finite data values");
  }
}

std::size_t value_index(const CategorySpec& category, const std::string& token) {
  for (std::size_t i = 0; i < category.values.size(); ++i)
    if (category.values[i] == token) return i;
  throw_schema("unknown value '" + token + "' for category '" + category.name + "'");
}

GroupIndex GroupIndex::build(const std::vector<CategorySpec>& categories) {
  GroupIndex g;
  std::size_t off = 0;
  for (const auto& c : categories) {
    g.offsets.push_back(off);
    g.sizes.push_back(c.n_components);
    off += c.n_components;
  }
  g.total = off;
  return g;
}

void Hyperparams::validate() const {
  if (gamma1 < 0 || gamma2 < 0 || gamma3 < 0 || gamma4 < 0 || gamma5 < 0)
    throw_param("regularization weights must be nonnegative");
  if (!(tol > 0)) throw_param("tolerance must be positive");
  if (!(cd_tol > 0)) throw_param("coordinate-descent tolerance must be positive");
  if (cd_max_sweeps == 0) throw_param("cd_max_sweeps must be at least 1");
  if (!(trace_solver.huber_eps > 0)) throw_param("huber_eps must be positive");
  if (trace_solver.step_size < 0) throw_param("step_size must be nonnegative");
  if (lds_enabled && lds_inner_iters == 0)
    throw_param("lds_inner_iters must be at least 1");
}

Matrix build_loading(const std::vector<ComponentTensor>& components, const GroupIndex& groups,
                     const Label& label) {
  if (label.size() != components.size())
    throw_param("build_loading: label arity does not match category count");
  std::size_t n = 0;
  for (const auto& c : components)
    if (c.n_channels() > 0) n = c.n_channels();
  Matrix a(n, groups.total);
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& tensor = components[k];
    if (label[k] >= tensor.n_variants())
      throw_param("build_loading: label selects a missing variant");
    const Matrix& slice = tensor.variants[label[k]];
    const std::size_t off = groups.begin(k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < slice.cols(); ++j) a(i, off + j) = slice(i, j);
  }
  return a;
}

ModelState make_model_skeleton(const TrialSet& data) {
  ModelState m;
  m.groups = GroupIndex::build(data.categories);
  m.components.resize(data.categories.size());
  for (std::size_t k = 0; k < data.categories.size(); ++k) {
    m.components[k].category = k;
    m.components[k].variants.assign(
        data.categories[k].values.size(),
        Matrix(data.n_channels, data.categories[k].n_components));
  }
  m.traces.phi.reserve(data.trials.size());
  for (const auto& t : data.trials)
    m.traces.phi.emplace_back(m.groups.total, t.n_timepoints());
  return m;
}

}  // namespace milcci
