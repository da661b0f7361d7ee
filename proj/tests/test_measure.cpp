#include <doctest.h>

#include "mvldp/measure.hpp"
#include "mvldp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mvldp;
using measure::EmpiricalMeasure;

namespace {

EmpiricalMeasure random_cloud(Xoshiro256& rng, std::size_t n, int d, double shift = 0.0) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n * d);
  for (double& x : v) x = normal(rng) + shift;
  return EmpiricalMeasure(std::move(v), d);
}

// Brute-force W2 over all permutations.
double w2_brute(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += (a.atom(i) - b.atom(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / a.size());
}

}  // namespace

TEST_CASE("one-dimensional W2 of a shift") {
  const auto a = EmpiricalMeasure::from_points({Vector::Constant(1, 0.0), Vector::Constant(1, 2.0)});
  const auto b = EmpiricalMeasure::from_points({Vector::Constant(1, 3.5), Vector::Constant(1, 1.5)});
  CHECK(measure::wasserstein2(a, b) == doctest::Approx(1.5));
  CHECK(measure::mean(a)[0] == doctest::Approx(1.0));
  CHECK(measure::second_moment(a) == doctest::Approx(2.0));
}

TEST_CASE("Hungarian assignment matches brute force") {
  Xoshiro256 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = random_cloud(rng, 6, 2);
    const auto b = random_cloud(rng, 6, 2, 0.5);
    CHECK(measure::wasserstein2(a, b) == doctest::Approx(w2_brute(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("W2 metric axioms on random clouds") {
  Xoshiro256 rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 3;
    const auto x = random_cloud(rng, 25, d);
    const auto y = random_cloud(rng, 25, d, 0.3);
    const auto z = random_cloud(rng, 25, d, -0.7);
    const double xy = measure::wasserstein2(x, y);
    CHECK(measure::wasserstein2(x, x) == doctest::Approx(0.0));
    CHECK(xy > 0.0);
    CHECK(xy == doctest::Approx(measure::wasserstein2(y, x)).epsilon(1e-12));
    CHECK(xy <= measure::wasserstein2(x, z) + measure::wasserstein2(z, y) + 1e-12);
  }
}

TEST_CASE("coupling inequality holds on 1000 aligned clouds") {
  Xoshiro256 rng(2024);
  int violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = 1 + rep % 3;
    const auto x = random_cloud(rng, 20, d);
    const auto y = random_cloud(rng, 20, d, 0.2);
    try {
      const auto r = measure::coupling_bound_check(x, y);
      if (r.w2 > r.coupling_rms + 1e-12) ++violations;
    } catch (const Error&) {
      ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("large clouds use a flagged upper bound") {
  Xoshiro256 rng(8);
  const auto x = random_cloud(rng, 300, 2);
  const auto y = random_cloud(rng, 300, 2, 1.0);
  const auto r = measure::wasserstein2_detailed(x, y);
  CHECK(r.upper_bound);
  CHECK_NOTHROW(measure::coupling_bound_check(x, y));
  // Lower bound: distance of the means.
  CHECK(r.value >= (measure::mean(x) - measure::mean(y)).norm() - 1e-12);
}

TEST_CASE("unequal sizes are unsupported") {
  Xoshiro256 rng(1);
  const auto x = random_cloud(rng, 5, 1);
  const auto y = random_cloud(rng, 6, 1);
  try {
    (void)measure::wasserstein2(x, y);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
}
