#include "milcci/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "milcci/error.hpp"
#include "milcci/graph.hpp"
#include "milcci/linalg.hpp"
#include "milcci/rng.hpp"

namespace milcci {

namespace {

// Linear-interpolated percentile (inclusive endpoints), pct in (0, 100).
double percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * pct / 100.0;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

Matrix rbf_kernel(std::size_t t_len, double lengthscale, double amplitude, double jitter) {
  Matrix k(t_len, t_len);
  const double step = 1.0 / static_cast<double>(t_len - 1);
  const double amp2 = amplitude * amplitude;
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  for (std::size_t s = 0; s < t_len; ++s)
    for (std::size_t t = 0; t <= s; ++t) {
      const double d = static_cast<double>(s - t) * step;
      const double v = amp2 * std::exp(-d * d * inv);
      k(s, t) = v;
      k(t, s) = v;
    }
  for (std::size_t s = 0; s < t_len; ++s) k(s, s) += jitter;
  return k;
}

// Lower Cholesky factor of the RBF kernel, escalating the jitter tenfold on
// factorization failure (three retries, then give up).
Matrix gp_chol(std::size_t t_len, double lengthscale, double amplitude, double jitter) {
  double jit = jitter;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Matrix k = rbf_kernel(t_len, lengthscale, amplitude, jit);
    if (cholesky(k)) return k;
    jit = (jit > 0.0 ? jit : 1e-12) * 10.0;
  }
  throw_numeric("gp kernel factorization failed even with escalated jitter (lengthscale " +
                std::to_string(lengthscale) + ")");
}

// x = L z for a lower-triangular L.
std::vector<double> lower_mul(const Matrix& l, const std::vector<double>& z) {
  const std::size_t n = l.rows();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* row = l.row(i);
    for (std::size_t j = 0; j <= i; ++j) acc += row[j] * z[j];
    x[i] = acc;
  }
  return x;
}

std::vector<double> draw_normals(Rng& rng, std::size_t n) {
  std::vector<double> z(n);
  for (double& v : z) v = rng.normal();
  return z;
}

std::string choice_token(std::size_t i) {
  std::string t(1, static_cast<char>('A' + i % 26));
  if (i >= 26) t += std::to_string(i / 26);
  return t;
}

// Blend coefficient of variant vi toward the reference variant 0, taken from
// the category's similarity kernel before row normalization: the ordinal
// Gaussian kernel on the numeric values, or a flat 0.5 between distinct
// categorical values.
double blend_coefficient(const CategorySpec& spec, std::size_t vi) {
  if (vi == 0) return 1.0;
  if (spec.kind == CategoryKind::categorical) return 0.5;
  const std::vector<double> vals = spec.numeric_values();
  const double d = vals[vi] - vals[0];
  return std::exp(-d * d / (2.0 * spec.bandwidth * spec.bandwidth));
}

}  // namespace

void SynthParams::validate() const {
  if (n_channels == 0) throw_param("synth: n_channels must be positive");
  if (n_timepoints < 2) throw_param("synth: n_timepoints must be at least 2");
  if (n_trials == 0) throw_param("synth: n_trials must be positive");
  if (difficulty_levels == 0 || choice_levels == 0)
    throw_param("synth: both label axes need at least one level");
  if (components_per_category.size() != 2)
    throw_param("synth: components_per_category must list exactly two categories");
  for (std::size_t p : components_per_category)
    if (p == 0) throw_param("synth: components per category must be positive");
  if (!(difficulty_bandwidth > 0.0)) throw_param("synth: difficulty bandwidth must be positive");
  if (!(map_init_lo <= map_init_hi)) throw_param("synth: map_init range must be ordered");
  if (!(amplitude_lo <= amplitude_hi)) throw_param("synth: amplitude range must be ordered");
  if (!(lengthscale_lo <= lengthscale_hi)) throw_param("synth: lengthscale range must be ordered");
  if (!(lengthscale_lo > 0.0)) throw_param("synth: lengthscales must be positive");
  if (!(sparsity_percentile > 0.0 && sparsity_percentile < 100.0))
    throw_param("synth: sparsity_percentile must lie in (0, 100)");
  if (!(rescale_percentile > 0.0 && rescale_percentile < 100.0))
    throw_param("synth: rescale_percentile must lie in (0, 100)");
  if (trial_noise_sigma < 0.0) throw_param("synth: trial_noise_sigma must be nonnegative");
  if (gp_jitter < 0.0) throw_param("synth: gp_jitter must be nonnegative");
  const std::size_t total = components_per_category[0] + components_per_category[1];
  if (n_random_components > total)
    throw_param("synth: n_random_components exceeds the total component count");
}

SynthParams full_params() { return SynthParams{}; }

SynthParams desk_params() {
  SynthParams p;
  p.n_channels = 40;
  p.n_timepoints = 200;
  p.n_trials = 100;
  return p;
}

std::vector<double> sample_gp(std::size_t t_len, double lengthscale, double amplitude,
                              double jitter, std::uint64_t seed) {
  if (t_len < 2) throw_param("sample_gp: need at least two time points");
  if (!(lengthscale > 0.0)) throw_param("sample_gp: lengthscale must be positive");
  if (jitter < 0.0) throw_param("sample_gp: jitter must be nonnegative");
  Rng rng(seed);
  const std::vector<double> z = draw_normals(rng, t_len);
  const Matrix l = gp_chol(t_len, lengthscale, amplitude, jitter);
  return lower_mul(l, z);
}

std::pair<TrialSet, GroundTruth> generate(const SynthParams& params) {
  params.validate();

  TrialSet data;
  data.n_channels = params.n_channels;
  CategorySpec difficulty;
  difficulty.name = "difficulty";
  difficulty.kind = CategoryKind::ordinal;
  difficulty.bandwidth = params.difficulty_bandwidth;
  difficulty.n_components = params.components_per_category[0];
  for (std::size_t i = 0; i < params.difficulty_levels; ++i)
    difficulty.values.push_back(std::to_string(i + 1));
  CategorySpec choice;
  choice.name = "choice";
  choice.kind = CategoryKind::categorical;
  choice.n_components = params.components_per_category[1];
  for (std::size_t i = 0; i < params.choice_levels; ++i)
    choice.values.push_back(choice_token(i));
  data.categories = {difficulty, choice};

  GroundTruth truth;
  truth.groups = GroupIndex::build(data.categories);
  const std::size_t p_total = truth.groups.total;
  const std::size_t t_len = params.n_timepoints;
  const std::size_t n = params.n_channels;

  // Labels, uniform over the level grid.
  {
    Rng rng(Rng::derive(params.seed, {0}));
    for (std::size_t m = 0; m < params.n_trials; ++m)
      truth.labels.push_back({rng.index(params.difficulty_levels), rng.index(params.choice_levels)});
  }

  // Channel maps: a reference map per category, variants blended toward it by
  // label similarity, then hard-thresholded for sparsity.
  for (std::size_t k = 0; k < 2; ++k) {
    const CategorySpec& spec = data.categories[k];
    const std::size_t p = spec.n_components;
    Matrix ref(n, p);
    {
      Rng rng(Rng::derive(params.seed, {1, k}));
      for (std::size_t i = 0; i < ref.size(); ++i)
        ref.data()[i] = rng.uniform(params.map_init_lo, params.map_init_hi);
    }
    ComponentTensor tensor;
    tensor.category = k;
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
      const double c = blend_coefficient(spec, vi);
      Matrix map = ref;
      if (c < 1.0) {
        Rng rng(Rng::derive(params.seed, {2, k, vi}));
        map.scale(c);
        for (std::size_t i = 0; i < map.size(); ++i)
          map.data()[i] += (1.0 - c) * rng.uniform(params.map_init_lo, params.map_init_hi);
      }
      std::vector<double> entries(map.data(), map.data() + map.size());
      const double thr = percentile(std::move(entries), params.sparsity_percentile);
      for (std::size_t i = 0; i < map.size(); ++i)
        if (map.data()[i] < thr) map.data()[i] = 0.0;
      tensor.variants.push_back(std::move(map));
    }
    truth.components.push_back(std::move(tensor));
  }

  // Traces: one base GP draw per (label combination, component), shared by
  // the combination's trials up to a sigma-scaled perturbation from the same
  // kernel; the trailing components are instead redrawn fresh per trial.
  truth.traces.phi.assign(params.n_trials, Matrix(p_total, t_len));
  const std::size_t first_random = p_total - params.n_random_components;
  const std::size_t n_combos = params.difficulty_levels * params.choice_levels;
  std::vector<std::vector<std::size_t>> combo_trials(n_combos);
  for (std::size_t m = 0; m < params.n_trials; ++m)
    combo_trials[truth.labels[m][0] * params.choice_levels + truth.labels[m][1]].push_back(m);

  for (std::size_t combo = 0; combo < n_combos; ++combo) {
    const auto& members = combo_trials[combo];
    if (members.empty()) continue;
    for (std::size_t j = 0; j < first_random; ++j) {
      Rng rng(Rng::derive(params.seed, {3, combo, j}));
      const double amp = rng.uniform(params.amplitude_lo, params.amplitude_hi);
      const double ls = rng.uniform(params.lengthscale_lo, params.lengthscale_hi);
      const std::vector<double> z = draw_normals(rng, t_len);
      const Matrix l = gp_chol(t_len, ls, amp, params.gp_jitter);
      const std::vector<double> base = lower_mul(l, z);
      for (std::size_t m : members) {
        double* row = truth.traces.phi[m].row(j);
        std::copy(base.begin(), base.end(), row);
        if (params.trial_noise_sigma > 0.0) {
          Rng prng(Rng::derive(params.seed, {4, m, j}));
          const std::vector<double> noise = lower_mul(l, draw_normals(prng, t_len));
          for (std::size_t t = 0; t < t_len; ++t) row[t] += params.trial_noise_sigma * noise[t];
        }
      }
    }
  }
  for (std::size_t m = 0; m < params.n_trials; ++m)
    for (std::size_t j = first_random; j < p_total; ++j) {
      Rng rng(Rng::derive(params.seed, {5, m, j}));
      const double amp = rng.uniform(params.amplitude_lo, params.amplitude_hi);
      const double ls = rng.uniform(params.lengthscale_lo, params.lengthscale_hi);
      const std::vector<double> z = draw_normals(rng, t_len);
      const Matrix l = gp_chol(t_len, ls, amp, params.gp_jitter);
      const std::vector<double> draw = lower_mul(l, z);
      std::copy(draw.begin(), draw.end(), truth.traces.phi[m].row(j));
    }

  // Shift traces nonnegative, then match their upper percentile to the maps'.
  double lo = 0.0;
  for (const Matrix& phi : truth.traces.phi)
    for (std::size_t i = 0; i < phi.size(); ++i) lo = std::min(lo, phi.data()[i]);
  if (lo < 0.0)
    for (Matrix& phi : truth.traces.phi)
      for (std::size_t i = 0; i < phi.size(); ++i) phi.data()[i] -= lo;

  {
    std::vector<double> map_entries;
    for (const ComponentTensor& tensor : truth.components)
      for (const Matrix& v : tensor.variants)
        map_entries.insert(map_entries.end(), v.data(), v.data() + v.size());
    std::vector<double> trace_entries;
    for (const Matrix& phi : truth.traces.phi)
      trace_entries.insert(trace_entries.end(), phi.data(), phi.data() + phi.size());
    const double target = percentile(std::move(map_entries), params.rescale_percentile);
    const double current = percentile(std::move(trace_entries), params.rescale_percentile);
    if (current > 0.0) {
      const double scale = target / current;
      for (Matrix& phi : truth.traces.phi) phi.scale(scale);
    }
  }

  // Observations: exact products, fully observed.
  const int width = static_cast<int>(std::to_string(params.n_trials - 1).size());
  std::vector<Matrix> loading_cache(n_combos);
  for (std::size_t m = 0; m < params.n_trials; ++m) {
    const std::size_t combo = truth.labels[m][0] * params.choice_levels + truth.labels[m][1];
    if (loading_cache[combo].empty())
      loading_cache[combo] = build_loading(truth.components, truth.groups, truth.labels[m]);
    Trial tr;
    std::string idx = std::to_string(m);
    tr.id = "t" + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx;
    tr.label = truth.labels[m];
    tr.y = matmul(loading_cache[combo], truth.traces.phi[m]);
    data.trials.push_back(std::move(tr));
  }

  return {std::move(data), std::move(truth)};
}

}  // namespace milcci
