#include "milcci/graph.hpp"

#include <cmath>

#include "milcci/error.hpp"

namespace milcci {

SimilarityGraph build_graph(const CategorySpec& category, GraphKernel kernel) {
  if (category.kind == CategoryKind::ordinal && !(category.bandwidth > 0.0))
    throw_param("graph bandwidth must be positive, got " + std::to_string(category.bandwidth));
  category.validate();
  if (kernel != GraphKernel::gaussian) throw_param("unknown graph kernel");
  const std::size_t v = category.values.size();

  SimilarityGraph g;
  g.weights.resize(v, v);

  if (category.kind == CategoryKind::categorical) {
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) g.weights(i, j) = (i == j) ? 0.0 : 1.0;
  } else {
    const std::vector<double> pos = category.numeric_values();
    const double denom = 2.0 * category.bandwidth * category.bandwidth;
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) {
        if (i == j) continue;
        const double d = pos[i] - pos[j];
        g.weights(i, j) = std::exp(-(d * d) / denom);
      }
  }

  for (std::size_t i : category.free_variants)
    for (std::size_t j = 0; j < v; ++j) g.weights(i, j) = 0.0;

  for (std::size_t i = 0; i < v; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += g.weights(i, j);
    if (s > 0.0)
      for (std::size_t j = 0; j < v; ++j) g.weights(i, j) /= s;
  }
  return g;
}

Matrix consistency_pair_weights(const SimilarityGraph& graph, const CategorySpec& category) {
  const std::size_t v = graph.weights.rows();
  std::vector<bool> free_flag(v, false);
  for (std::size_t i : category.free_variants) free_flag[i] = true;
  Matrix w(v, v);
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) {
      if (i == j || free_flag[i] || free_flag[j]) continue;
      w(i, j) = 0.5 * (graph.weights(i, j) + graph.weights(j, i));
    }
  return w;
}

}  // namespace milcci
