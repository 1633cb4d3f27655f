#include <doctest.h>

#include <cmath>

#include "milcci/error.hpp"
#include "milcci/graph.hpp"

using namespace milcci;

namespace {

CategorySpec ordinal3(double bandwidth) {
  CategorySpec c;
  c.name = "difficulty";
  c.kind = CategoryKind::ordinal;
  c.values = {"1", "2", "3"};
  c.bandwidth = bandwidth;
  return c;
}

}  // namespace

TEST_CASE("categorical graph is uniform over the other variants") {
  CategorySpec c;
  c.name = "choice";
  c.kind = CategoryKind::categorical;
  c.values = {"a", "b", "c"};

  const SimilarityGraph g = build_graph(c);
  REQUIRE(g.weights.rows() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(g.weights(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));
}

TEST_CASE("ordinal graph applies the gaussian kernel before row normalization") {
  const SimilarityGraph g = build_graph(ordinal3(1.0));

  // Row 0 weights exp(-1/2) and exp(-4/2) normalize to these values.
  CHECK(g.weights(0, 0) == 0.0);
  CHECK(g.weights(0, 1) == doctest::Approx(0.817574).epsilon(1e-5));
  CHECK(g.weights(0, 2) == doctest::Approx(0.182426).epsilon(1e-5));
  CHECK(g.weights(1, 0) == doctest::Approx(0.5));
  CHECK(g.weights(1, 2) == doctest::Approx(0.5));

  const double near = std::exp(-0.5);
  const double far = std::exp(-2.0);
  CHECK(g.weights(0, 1) == doctest::Approx(near / (near + far)).epsilon(1e-12));

  // Rows sum to one, and closer values always weigh more.
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += g.weights(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(g.weights(2, 1) > g.weights(2, 0));
}

TEST_CASE("narrow bandwidth concentrates weight on neighbors") {
  const SimilarityGraph wide = build_graph(ordinal3(10.0));
  const SimilarityGraph tight = build_graph(ordinal3(0.3));
  CHECK(tight.weights(0, 1) > wide.weights(0, 1));
  CHECK(tight.weights(0, 2) < wide.weights(0, 2));
}

TEST_CASE("free variants get zero rows and zeroed pair weights") {
  CategorySpec c = ordinal3(1.0);
  c.free_variants = {1};
  const SimilarityGraph g = build_graph(c);

  for (std::size_t j = 0; j < 3; ++j) CHECK(g.weights(1, j) == 0.0);
  // Other rows renormalize over the remaining mass, still summing to one.
  CHECK(g.weights(0, 1) + g.weights(0, 2) == doctest::Approx(1.0).epsilon(1e-12));

  const Matrix pw = consistency_pair_weights(g, c);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(pw(1, j) == 0.0);
    CHECK(pw(j, 1) == 0.0);
  }
  CHECK(pw(0, 2) == doctest::Approx(0.5 * (g.weights(0, 2) + g.weights(2, 0))));
  CHECK(pw(0, 2) == pw(2, 0));
}

TEST_CASE("non-positive bandwidth is rejected as a parameter error") {
  try {
    build_graph(ordinal3(0.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::param);
  }
  try {
    build_graph(ordinal3(-1.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::param);
  }
}
