#pragma once

#include "milcci/data.hpp"
#include "milcci/matrix.hpp"

namespace milcci {

enum class GraphKernel { gaussian };

// Per-category label-similarity weights feeding the consistency penalty.
// Rows are L1-normalized; a free variant's row is all zero.
struct SimilarityGraph {
  std::size_t category = 0;
  Matrix weights;  // |values| x |values|, zero diagonal
};

// Categorical: constant off-diagonal affinity. Ordinal: Gaussian kernel on
// the numeric value positions, exp(-(k_i - k_j)^2 / (2 sigma^2)). In both
// cases the diagonal is zeroed and free-variant rows are zeroed before each
// remaining row is divided by its L1 sum.
SimilarityGraph build_graph(const CategorySpec& category,
                            GraphKernel kernel = GraphKernel::gaussian);

// Effective symmetric pair weights for the consistency penalty:
// 0 when either variant is free, else (w(i,j) + w(j,i)) / 2. Using the
// symmetrized weights makes each variant update an exact block-coordinate
// step on the total objective even when row normalization broke symmetry.
Matrix consistency_pair_weights(const SimilarityGraph& graph, const CategorySpec& category);

}  // namespace milcci
