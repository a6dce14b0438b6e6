#include <doctest.h>

#include <cmath>
#include <random>

#include "bne/math_special.hpp"
#include "bne/metrics.hpp"
#include "bne/rng.hpp"
#include "bne/synthetic.hpp"

using namespace bne;

TEST_CASE("rmse basics and shift invariance") {
  Eigen::VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 3.0, 4.0;
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(std::sqrt(12.5) == doctest::Approx(3.5355).epsilon(1e-4));

  // constant offset c: rmse = |c|, and rmse(a+c, b+c) = rmse(a, b)
  Eigen::VectorXd c2 = a.array() + 2.5;
  CHECK(rmse(c2, a) == doctest::Approx(2.5));
  Eigen::VectorXd as = a.array() + 7.0, bs = b.array() + 7.0;
  CHECK(rmse(as, bs) == rmse(a, b));

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS(rmse(a, wrong));
}

TEST_CASE("l1 cdf distance: identity, step gap, additivity") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(4001, -2.0, 3.0);
  const CdfFn gauss = [](const Eigen::VectorXd&, double y) { return normal_cdf(y); };
  Eigen::MatrixXd one_loc(1, 1);
  one_loc << 0.0;
  CHECK(l1_cdf_distance(gauss, gauss, one_loc, grid) == 0.0);

  // unit steps at 0 and 1: area between them is exactly 1
  const CdfFn step0 = [](const Eigen::VectorXd&, double y) { return y >= 0.0 ? 1.0 : 0.0; };
  const CdfFn step1 = [](const Eigen::VectorXd&, double y) { return y >= 1.0 ? 1.0 : 0.0; };
  CHECK(l1_cdf_distance(step0, step1, one_loc, grid) == doctest::Approx(1.0).epsilon(1e-3));

  // two identical locations double the value
  Eigen::MatrixXd two_locs(2, 1);
  two_locs << 0.0, 0.0;
  const CdfFn shifted = [](const Eigen::VectorXd&, double y) { return normal_cdf(y - 0.3); };
  const double single = l1_cdf_distance(gauss, shifted, one_loc, grid);
  CHECK(l1_cdf_distance(gauss, shifted, two_locs, grid) == doctest::Approx(2.0 * single));
}

TEST_CASE("l1 cdf distance satisfies the triangle inequality on random cdf triples") {
  std::mt19937 gen(33);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -6.0, 6.0);
  Eigen::MatrixXd loc(1, 1);
  loc << 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const double m1 = unif(gen), m2 = unif(gen), m3 = unif(gen);
    const double s1 = 0.5 + std::fabs(unif(gen)), s2 = 0.5 + std::fabs(unif(gen)),
                 s3 = 0.5 + std::fabs(unif(gen));
    const CdfFn f1 = [=](const Eigen::VectorXd&, double y) { return normal_cdf((y - m1) / s1); };
    const CdfFn f2 = [=](const Eigen::VectorXd&, double y) { return normal_cdf((y - m2) / s2); };
    const CdfFn f3 = [=](const Eigen::VectorXd&, double y) { return normal_cdf((y - m3) / s3); };
    const double d12 = l1_cdf_distance(f1, f2, loc, grid);
    const double d23 = l1_cdf_distance(f2, f3, loc, grid);
    const double d13 = l1_cdf_distance(f1, f3, loc, grid);
    CHECK(d13 <= d12 + d23 + 1e-9);
  }
}

TEST_CASE("coverage index: oracle intervals, fixed offsets, degenerate intervals") {
  // oracle intervals from the true generating CDF on a large sample
  SyntheticSpec spec;
  spec.n = 2000;
  spec.seed = 12;
  spec.alpha_const = 1.5;
  const auto sim = simulate(spec);
  const TruthHandle& truth = sim.truth;
  const IntervalFn oracle = [&truth](const Eigen::VectorXd& x, double level) {
    Interval iv;
    iv.lo = truth.quantile(0.5 * (1.0 - level), x[0]);
    iv.hi = truth.quantile(0.5 * (1.0 + level), x[0]);
    if (iv.lo > iv.hi) std::swap(iv.lo, iv.hi);
    return iv;
  };
  CHECK(coverage_index(oracle, sim.data) <= 0.15);

  // phat off by exactly 0.1 at each of 9 levels sums to 0.9
  {
    double ci = 0.0;
    for (double p : default_coverage_levels()) ci += std::fabs((p + 0.1) - p);
    CHECK(ci == doctest::Approx(0.9));
  }

  // width-zero intervals never cover a continuous response
  const IntervalFn degenerate = [](const Eigen::VectorXd&, double) {
    return Interval{1e300, 1e300, false};
  };
  Dataset small = sim.data.rows({0, 1, 2, 3, 4});
  CHECK(coverage_index(degenerate, small) == doctest::Approx(4.5));

  Dataset empty;
  empty.x.resize(0, 1);
  empty.y.resize(0);
  empty.base_preds.resize(0, 0);
  CHECK_THROWS(coverage_index(oracle, empty));
}

TEST_CASE("metrics are permutation invariant") {
  std::mt19937 gen(44);
  std::normal_distribution<double> norm;
  Eigen::VectorXd a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = norm(gen);
    b[i] = norm(gen);
  }
  Eigen::VectorXd ap(20), bp(20);
  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[i] = (i * 7) % 20;
  for (int i = 0; i < 20; ++i) {
    ap[i] = a[perm[i]];
    bp[i] = b[perm[i]];
  }
  CHECK(rmse(a, b) == doctest::Approx(rmse(ap, bp)).epsilon(1e-12));
}
