#include <doctest.h>

#include <limits>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/error.hpp"

using namespace milcci;

namespace {

CategorySpec ordinal_cat(std::string name, std::vector<std::string> values, std::size_t comps) {
  CategorySpec c;
  c.name = std::move(name);
  c.kind = CategoryKind::ordinal;
  c.values = std::move(values);
  c.n_components = comps;
  return c;
}

CategorySpec categorical_cat(std::string name, std::vector<std::string> values, std::size_t comps) {
  CategorySpec c;
  c.name = std::move(name);
  c.kind = CategoryKind::categorical;
  c.values = std::move(values);
  c.n_components = comps;
  return c;
}

}  // namespace

TEST_CASE("category validation catches bad declarations") {
  CategorySpec ok = categorical_cat("choice", {"L", "R"}, 2);
  CHECK_NOTHROW(ok.validate());

  CategorySpec dup = ok;
  dup.values = {"L", "L"};
  CHECK_THROWS_AS(dup.validate(), Error);

  CategorySpec none = ok;
  none.n_components = 0;
  CHECK_THROWS_AS(none.validate(), Error);

  CategorySpec word = ordinal_cat("difficulty", {"easy", "hard"}, 1);
  CHECK_THROWS_AS(word.validate(), Error);

  CategorySpec bw = ordinal_cat("difficulty", {"1", "2"}, 1);
  bw.bandwidth = 0.0;
  CHECK_THROWS_AS(bw.validate(), Error);

  CategorySpec free_oob = ok;
  free_oob.free_variants = {2};
  CHECK_THROWS_AS(free_oob.validate(), Error);
}

TEST_CASE("ordinal categories expose numeric values") {
  CategorySpec c = ordinal_cat("difficulty", {"1", "2.5", "-3"}, 1);
  const auto v = c.numeric_values();
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(2.5));
  CHECK(v[2] == doctest::Approx(-3.0));
}

TEST_CASE("group index lays out trace rows in declaration order") {
  std::vector<CategorySpec> cats = {categorical_cat("a", {"x", "y"}, 3),
                                    categorical_cat("b", {"u", "v"}, 2)};
  const GroupIndex g = GroupIndex::build(cats);
  REQUIRE(g.offsets.size() == 2);
  CHECK(g.offsets[0] == 0);
  CHECK(g.offsets[1] == 3);
  CHECK(g.sizes[0] == 3);
  CHECK(g.sizes[1] == 2);
  CHECK(g.total == 5);
  CHECK(g.begin(1) == 3);
  CHECK(g.end(1) == 5);
}

TEST_CASE("loading matrix concatenates label-selected variant slices") {
  std::vector<CategorySpec> cats = {categorical_cat("a", {"x", "y"}, 2),
                                    categorical_cat("b", {"u", "v"}, 1)};
  const GroupIndex g = GroupIndex::build(cats);

  const std::size_t n = 3;
  std::vector<ComponentTensor> comps(2);
  for (std::size_t k = 0; k < 2; ++k) {
    comps[k].category = k;
    for (std::size_t i = 0; i < 2; ++i) {
      Matrix m(n, cats[k].n_components);
      for (std::size_t r = 0; r < m.size(); ++r)
        m.data()[r] = static_cast<double>(100 * (k + 1) + 10 * i + r);
      comps[k].variants.push_back(m);
    }
  }

  const Label lab = {1, 0};
  const Matrix loading = build_loading(comps, g, lab);
  REQUIRE(loading.rows() == n);
  REQUIRE(loading.cols() == 3);
  for (std::size_t r = 0; r < n; ++r) {
    CHECK(loading(r, 0) == comps[0].variants[1](r, 0));
    CHECK(loading(r, 1) == comps[0].variants[1](r, 1));
    CHECK(loading(r, 2) == comps[1].variants[0](r, 0));
  }

  // Equal labels give byte-equal loadings by construction.
  const Matrix again = build_loading(comps, g, lab);
  for (std::size_t i = 0; i < loading.size(); ++i) CHECK(loading.data()[i] == again.data()[i]);

  CHECK_THROWS_AS(build_loading(comps, g, Label{1}), Error);
  CHECK_THROWS_AS(build_loading(comps, g, Label{1, 2}), Error);
}

TEST_CASE("trial set validation") {
  TrialSet ts;
  ts.n_channels = 2;
  ts.categories = {categorical_cat("c", {"p", "q"}, 1)};

  Trial t;
  t.id = "t0";
  t.y = Matrix(2, 4);
  t.label = {0};
  ts.trials.push_back(t);
  CHECK_NOTHROW(ts.validate());

  ts.trials[0].label = {5};
  CHECK_THROWS_AS(ts.validate(), Error);
  ts.trials[0].label = {0};

  ts.trials[0].y(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ts.validate(), Error);
  ts.trials[0].y(1, 2) = 0.0;

  ts.trials[0].mask = Mask(2, 3);  // wrong T
  CHECK_THROWS_AS(ts.validate(), Error);
  ts.trials[0].mask = Mask();

  CHECK(value_index(ts.categories[0], "q") == 1);
  CHECK_THROWS_AS(value_index(ts.categories[0], "zz"), Error);
}

TEST_CASE("hyperparameter validation") {
  Hyperparams h;
  CHECK_NOTHROW(h.validate());

  Hyperparams bad = h;
  bad.gamma2 = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);

  bad = h;
  bad.tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  bad = h;
  bad.cd_max_sweeps = 0;
  CHECK_THROWS_AS(bad.validate(), Error);

  bad = h;
  bad.lds_enabled = true;
  bad.lds_inner_iters = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
