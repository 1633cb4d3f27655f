#include <doctest.h>

#include <cmath>
#include <vector>

#include "milcci/data.hpp"
#include "milcci/error.hpp"
#include "milcci/init.hpp"
#include "milcci/rng.hpp"

using namespace milcci;

namespace {

TrialSet one_category_set(std::size_t n, std::size_t n_values, std::size_t p) {
  TrialSet ts;
  ts.n_channels = n;
  CategorySpec c;
  c.name = "cond";
  c.kind = CategoryKind::categorical;
  for (std::size_t i = 0; i < n_values; ++i) c.values.push_back("v" + std::to_string(i));
  c.n_components = p;
  ts.categories.push_back(c);
  return ts;
}

double pearson(const double* a, const double* b, std::size_t n) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("dictionary learning recovers a rank-one nonnegative factor") {
  const std::size_t n = 30, t = 60;
  Rng rng(42);
  std::vector<double> a(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (rng.uniform() < 0.4) a[i] = rng.uniform(0.5, 1.0);
  TrialSet ts = one_category_set(n, 1, 1);
  Trial tr;
  tr.id = "t0";
  tr.y = Matrix(n, t);
  tr.label = {0};
  for (std::size_t s = 0; s < t; ++s) {
    const double phi = 1.0 + std::sin(0.2 * double(s));
    for (std::size_t i = 0; i < n; ++i) tr.y(i, s) = a[i] * phi;
  }
  ts.trials.push_back(tr);

  const InitResult r = dict_learn(ts, 1, 0.01, 30, 7, true);
  std::vector<double> col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = r.dictionary(i, 0);
  CHECK(pearson(col.data(), a.data(), n) >= 0.99);
}

TEST_CASE("overcomplete unpenalized learning drives the residual to zero") {
  const std::size_t n = 6, t = 40;
  Rng rng(9);
  TrialSet ts = one_category_set(n, 1, n);
  Trial tr;
  tr.id = "t0";
  tr.y = Matrix(n, t);
  tr.label = {0};
  double ysq = 0.0;
  for (std::size_t i = 0; i < tr.y.size(); ++i) {
    tr.y.data()[i] = rng.normal();
    ysq += tr.y.data()[i] * tr.y.data()[i];
  }
  ts.trials.push_back(tr);

  const InitResult r = dict_learn(ts, n, 0.0, 10, 3, false);
  REQUIRE_FALSE(r.recon_history.empty());
  CHECK(r.recon_history.back() <= 1e-8 * ysq);
}

TEST_CASE("reconstruction error never rises across unpenalized alternations") {
  Rng rng(55);
  TrialSet ts = one_category_set(8, 2, 3);
  for (std::size_t m = 0; m < 4; ++m) {
    Trial tr;
    tr.id = "t" + std::to_string(m);
    tr.y = Matrix(8, 25);
    for (std::size_t i = 0; i < tr.y.size(); ++i) tr.y.data()[i] = rng.normal();
    tr.label = {m % 2};
    if (m == 1) {
      tr.mask = Mask(8, 25);
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t s = 0; s < 25; ++s)
          if (rng.uniform() < 0.2) {
            tr.mask(i, s) = 0;
            tr.y(i, s) = 0.0;
          }
    }
    ts.trials.push_back(tr);
  }
  const InitResult r = dict_learn(ts, 3, 0.0, 12, 21, false);
  REQUIRE(r.recon_history.size() == 12);
  for (std::size_t i = 1; i < r.recon_history.size(); ++i)
    CHECK(r.recon_history[i] <= r.recon_history[i - 1] * (1.0 + 1e-12) + 1e-12);

  // Penalized runs still have to end no worse than they started.
  const InitResult rp = dict_learn(ts, 3, 0.05, 12, 21, false);
  CHECK(rp.recon_history.back() <= rp.recon_history.front());
}

TEST_CASE("dictionary learning is bit-reproducible and validates inputs") {
  Rng rng(77);
  TrialSet ts = one_category_set(5, 1, 2);
  Trial tr;
  tr.id = "t0";
  tr.y = Matrix(5, 15);
  for (std::size_t i = 0; i < tr.y.size(); ++i) tr.y.data()[i] = rng.normal();
  tr.label = {0};
  ts.trials.push_back(tr);

  const InitResult r1 = dict_learn(ts, 2, 0.02, 8, 123, false);
  const InitResult r2 = dict_learn(ts, 2, 0.02, 8, 123, false);
  for (std::size_t i = 0; i < r1.dictionary.size(); ++i)
    CHECK(r1.dictionary.data()[i] == r2.dictionary.data()[i]);
  for (std::size_t i = 0; i < r1.codes[0].size(); ++i)
    CHECK(r1.codes[0].data()[i] == r2.codes[0].data()[i]);

  // Columns end L1-normalized (or dead).
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += std::fabs(r1.dictionary(i, j));
    CHECK((s == 0.0 || s == doctest::Approx(1.0).epsilon(1e-12)));
  }

  CHECK_THROWS_AS(dict_learn(ts, 2, 0.02, 0, 1, false), Error);
  CHECK_THROWS_AS(dict_learn(ts, 0, 0.02, 5, 1, false), Error);
}

TEST_CASE("all-zero data yields a zero dictionary and a warning") {
  TrialSet ts = one_category_set(4, 1, 2);
  Trial tr;
  tr.id = "t0";
  tr.y = Matrix(4, 10);
  tr.label = {0};
  ts.trials.push_back(tr);
  const InitResult r = dict_learn(ts, 2, 0.05, 5, 1, false);
  CHECK(r.dictionary.frob_sq() == 0.0);
  REQUIRE_FALSE(r.warnings.empty());
  CHECK(r.n_iters_run == 0);
}

TEST_CASE("seeding replicates dictionary blocks across every variant") {
  Rng rng(31);
  TrialSet ts;
  ts.n_channels = 6;
  CategorySpec a;
  a.name = "difficulty";
  a.kind = CategoryKind::ordinal;
  a.values = {"1", "2", "3", "4", "5"};
  a.n_components = 2;
  CategorySpec b;
  b.name = "choice";
  b.kind = CategoryKind::categorical;
  b.values = {"L", "R"};
  b.n_components = 2;
  ts.categories = {a, b};
  for (std::size_t m = 0; m < 3; ++m) {
    Trial tr;
    tr.id = "t" + std::to_string(m);
    tr.y = Matrix(6, 12);
    for (std::size_t i = 0; i < tr.y.size(); ++i) tr.y.data()[i] = rng.normal();
    tr.label = {m % 5, m % 2};
    ts.trials.push_back(tr);
  }

  const InitResult init = dict_learn(ts, 4, 0.02, 5, 11, false);
  const ModelState state = seed_model(init, ts);
  REQUIRE(state.components.size() == 2);
  REQUIRE(state.components[0].variants.size() == 5);
  REQUIRE(state.components[1].variants.size() == 2);

  for (const auto& tensor : state.components)
    for (const Matrix& v : tensor.variants)
      for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(v.data()[i] == tensor.variants[0].data()[i]);

  // Any label reproduces the dictionary through the loading assembly.
  const Matrix loading = build_loading(state.components, state.groups, Label{3, 1});
  REQUIRE(loading.cols() == 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(loading(i, j) == init.dictionary(i, j));

  CHECK(state.traces.phi.size() == 3);
  for (std::size_t i = 0; i < state.traces.phi[0].size(); ++i)
    CHECK(state.traces.phi[0].data()[i] == init.codes[0].data()[i]);

  InitResult wrong = init;
  wrong.dictionary = Matrix(6, 3);
  CHECK_THROWS_AS(seed_model(wrong, ts), Error);
}
