#include <doctest.h>

#include <cmath>
#include <vector>

#include "milcci/kernels.hpp"
#include "milcci/rng.hpp"

using namespace milcci;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> m(n);
  for (auto& b : m) b = rng.uniform() < 0.7 ? 1 : 0;
  return m;
}

// Reductions may be reassociated by the SIMD variants; compare against the
// scalar reference with a tolerance scaled to the magnitude of the terms.
void check_close(double got, double want, double magnitude) {
  CHECK(std::fabs(got - want) <= 1e-12 * (1.0 + magnitude));
}

}  // namespace

TEST_CASE("kernel backends agree across lengths and alignments") {
  const auto& ref = kern::scalar_ops();
  const kern::Backend original = kern::active_backend();
  if (!kern::avx2_available()) {
    MESSAGE("avx2 not available; dispatch equivalence runs scalar-vs-scalar");
  } else {
    kern::set_backend(kern::Backend::avx2);
  }

  Rng rng(42);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 12u, 15u, 16u, 17u, 31u, 64u,
                        100u, 257u, 1000u, 1003u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    const auto m = random_mask(rng, n);
    const double mag = ref.asum(a.data(), n) + ref.asum(b.data(), n) + 1.0;

    check_close(kern::dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), mag * mag);
    check_close(kern::nrm2sq(a.data(), n), ref.nrm2sq(a.data(), n), mag * mag);
    check_close(kern::asum(a.data(), n), ref.asum(a.data(), n), mag);
    check_close(kern::sum(a.data(), n), ref.sum(a.data(), n), mag);
    check_close(kern::nrm2sq_mask(a.data(), m.data(), n), ref.nrm2sq_mask(a.data(), m.data(), n),
                mag * mag);
    check_close(kern::diff_nrm2sq(a.data(), b.data(), n), ref.diff_nrm2sq(a.data(), b.data(), n),
                mag * mag);

    auto y1 = b, y2 = b;
    kern::axpy(0.37, a.data(), y1.data(), n);
    ref.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::fabs(y1[i] - y2[i]) <= 1e-13 * (1.0 + std::fabs(y2[i])));

    auto s1 = a, s2 = a;
    kern::scal(-1.7, s1.data(), n);
    ref.scal(-1.7, s2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-14));

    auto ym1 = b, ym2 = b;
    kern::axpy_mask(1.3, a.data(), m.data(), ym1.data(), n);
    ref.axpy_mask(1.3, a.data(), m.data(), ym2.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::fabs(ym1[i] - ym2[i]) <= 1e-13 * (1.0 + std::fabs(ym2[i])));
  }

  kern::set_backend(original);
}

TEST_CASE("kernel dispatch reports a backend and honors overrides") {
  CHECK(kern::backend_name() != nullptr);
  const kern::Backend original = kern::active_backend();

  kern::set_backend(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  const double v[] = {1.0, 2.0, 3.0};
  CHECK(kern::sum(v, 3) == doctest::Approx(6.0));

  if (kern::avx2_available()) {
    kern::set_backend(kern::Backend::avx2);
    CHECK(kern::active_backend() == kern::Backend::avx2);
    CHECK(kern::sum(v, 3) == doctest::Approx(6.0));
  }
  kern::set_backend(original);
}

TEST_CASE("scalar kernels compute the definitions") {
  const double a[] = {1.0, -2.0, 3.0};
  const double b[] = {4.0, 5.0, -6.0};
  const auto& ref = kern::scalar_ops();
  CHECK(ref.dot(a, b, 3) == doctest::Approx(4.0 - 10.0 - 18.0));
  CHECK(ref.nrm2sq(a, 3) == doctest::Approx(14.0));
  CHECK(ref.asum(a, 3) == doctest::Approx(6.0));
  CHECK(ref.sum(a, 3) == doctest::Approx(2.0));
  CHECK(ref.diff_nrm2sq(a, b, 3) == doctest::Approx(9.0 + 49.0 + 81.0));
}
