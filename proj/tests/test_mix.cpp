#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hyperleaf/mix.hpp"
#include "test_util.hpp"

using namespace hyperleaf;

namespace {

EndmemberMatrix random_endmembers(int l, int n, Rng& rng) {
  EndmemberMatrix s(l, n);
  for (double& v : s.values) v = rng.uniform(0.05, 1.0);
  return s;
}

}  // namespace

TEST_CASE("single endmember replicates its spectrum") {
  EndmemberMatrix s(4, 1);
  s.at(0, 0) = 0.1;
  s.at(1, 0) = 0.5;
  s.at(2, 0) = 0.9;
  s.at(3, 0) = 0.3;
  const AbundanceMap a(Tensor3(1, 3, 3, 1.0), true);
  const Tensor3 cube = mix(s, a);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int l = 0; l < 4; ++l) CHECK(cube.at(l, i, j) == s.at(l, 0));
    }
  }
}

TEST_CASE("identity endmembers echo the abundances") {
  Rng rng(7);
  const int n = 3;
  EndmemberMatrix eye(n, n);
  for (int k = 0; k < n; ++k) eye.at(k, k) = 1.0;
  const AbundanceMap a = testutil::random_abundance(n, 5, 4, rng);
  const Tensor3 cube = mix(eye, a);
  CHECK(testutil::max_abs_diff(cube, a.inner) == 0.0);
}

TEST_CASE("hand-computed mixing example") {
  EndmemberMatrix s(3, 2);
  s.at(0, 0) = 1.0;
  s.at(0, 1) = 0.0;
  s.at(1, 0) = 0.0;
  s.at(1, 1) = 1.0;
  s.at(2, 0) = 1.0;
  s.at(2, 1) = 1.0;
  Tensor3 t(2, 1, 1);
  t.at(0, 0, 0) = 0.25;
  t.at(1, 0, 0) = 0.75;
  const Tensor3 cube = mix(s, AbundanceMap(t, true));
  CHECK(cube.at(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(cube.at(1, 0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(cube.at(2, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("channel mismatch is a dimension error") {
  Rng rng(9);
  const EndmemberMatrix s = random_endmembers(5, 3, rng);
  const AbundanceMap a = testutil::random_abundance(4, 2, 2, rng);
  CHECK_THROWS_AS(mix(s, a), Error);
}

TEST_CASE("mix is linear in the abundances") {
  Rng rng(13);
  const EndmemberMatrix s = random_endmembers(6, 3, rng);
  const Tensor3 a = testutil::random_tensor(3, 4, 4, rng);
  const Tensor3 b = testutil::random_tensor(3, 4, 4, rng);
  const double alpha = 0.6, beta = 0.4;
  Tensor3 combo(3, 4, 4);
  for (size_t p = 0; p < combo.data.size(); ++p) {
    combo.data[p] = alpha * a.data[p] + beta * b.data[p];
  }
  const Tensor3 lhs = mix(s, AbundanceMap(combo, false));
  const Tensor3 ma = mix(s, AbundanceMap(a, false));
  const Tensor3 mb = mix(s, AbundanceMap(b, false));
  double worst = 0.0;
  for (size_t p = 0; p < lhs.data.size(); ++p) {
    worst = std::max(worst, std::fabs(lhs.data[p] - (alpha * ma.data[p] + beta * mb.data[p])));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("normalized abundances give convex-combination bounds per band") {
  Rng rng(15);
  const EndmemberMatrix s = random_endmembers(8, 4, rng);
  const AbundanceMap a = testutil::random_abundance(4, 6, 6, rng);
  const Tensor3 cube = mix(s, a);
  for (int l = 0; l < 8; ++l) {
    double mx = 0.0;
    for (int n = 0; n < 4; ++n) mx = std::max(mx, s.at(l, n));
    for (size_t p = 0; p < cube.plane_size(); ++p) {
      REQUIRE(cube.band(l)[p] <= mx + 1e-12);
    }
  }
}

TEST_CASE("unmix oracle recovers mixed abundances") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const EndmemberMatrix s = random_endmembers(16, 4, rng);
    const AbundanceMap a = testutil::random_abundance(4, 5, 5, rng);
    const Tensor3 cube = mix(s, a);
    const AbundanceMap rec = unmix_oracle(s, cube);
    REQUIRE(testutil::max_abs_diff(rec.inner, a.inner) <= 1e-6);

    // Round trip the other way too.
    const Tensor3 cube2 = mix(s, rec);
    REQUIRE(testutil::rms_diff(cube2, cube) <= 1e-6);
  }
}

TEST_CASE("unmix with identity endmembers normalizes the cube") {
  Rng rng(19);
  EndmemberMatrix eye(3, 3);
  for (int k = 0; k < 3; ++k) eye.at(k, k) = 1.0;
  const AbundanceMap a = testutil::random_abundance(3, 4, 4, rng);
  const AbundanceMap rec = unmix_oracle(eye, a.inner);
  CHECK(testutil::max_abs_diff(rec.inner, a.inner) <= 1e-12);
}

TEST_CASE("duplicated endmember columns are a singularity error") {
  Rng rng(21);
  EndmemberMatrix s(6, 3);
  for (int l = 0; l < 6; ++l) {
    const double v = rng.uniform01();
    s.at(l, 0) = v;
    s.at(l, 1) = v;  // duplicate column
    s.at(l, 2) = rng.uniform01();
  }
  const Tensor3 cube(6, 2, 2, 0.5);
  try {
    unmix_oracle(s, cube);
    FAIL("expected singularity_error");
  } catch (const Error& e) {
    CHECK(e.code() == "singularity_error");
  }
}

TEST_CASE("mix is linear in the endmembers") {
  Rng rng(23);
  EndmemberMatrix s1 = random_endmembers(6, 3, rng);
  EndmemberMatrix s2 = random_endmembers(6, 3, rng);
  const AbundanceMap a = testutil::random_abundance(3, 4, 4, rng);
  const double alpha = 0.3, beta = 0.7;
  EndmemberMatrix combo(6, 3);
  for (size_t k = 0; k < combo.values.size(); ++k) {
    combo.values[k] = alpha * s1.values[k] + beta * s2.values[k];
  }
  const Tensor3 lhs = mix(combo, a);
  const Tensor3 m1 = mix(s1, a);
  const Tensor3 m2 = mix(s2, a);
  double worst = 0.0;
  for (size_t p = 0; p < lhs.data.size(); ++p) {
    worst = std::max(worst, std::fabs(lhs.data[p] - (alpha * m1.data[p] + beta * m2.data[p])));
  }
  CHECK(worst <= 1e-10);
}
