#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rankkd/error.hpp"
#include "rankkd/numeric.hpp"
#include "test_util.hpp"

using namespace rankkd;

TEST(LogitVector, RejectsNonFiniteAndTooShort) {
  EXPECT_THROW(LogitVector({1.0}), InputError);
  EXPECT_THROW(LogitVector({1.0, NAN}), InputError);
  EXPECT_THROW(LogitVector({INFINITY, 0.0}), InputError);
  EXPECT_NO_THROW(LogitVector({0.0, 1.0}));
}

TEST(Softmax, UniformForEqualLogits) {
  const auto q = softmax_with_temperature(LogitVector{0.0, 0.0, 0.0}, 1.0);
  for (double p : q.values()) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
}

TEST(Softmax, MatchesExtendedPrecisionReference) {
  // 40-digit evaluation of exp(z_i/2) / sum_j exp(z_j/2) for z = [1, 2, 3].
  const double expected[] = {0.18632372322584757702, 0.30719588571849839707,
                             0.5064803910556540259};
  const auto q = softmax_with_temperature(LogitVector{1.0, 2.0, 3.0}, 2.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], expected[i], 1e-15);
}

TEST(Softmax, ParameterErrors) {
  EXPECT_THROW(softmax_with_temperature(LogitVector{0.0, 1.0}, 0.0), InputError);
  EXPECT_THROW(softmax_with_temperature(LogitVector{0.0, 1.0}, -1.0), InputError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t c = 2 + rng.below(60);
    std::vector<double> z(c);
    for (double& v : z) v = rng.uniform(-1e3, 1e3);
    const double t = std::exp(rng.uniform(std::log(0.1), std::log(100.0)));
    const auto q = softmax(z, t);
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-9);

    // Shift by a modest constant: all entries stay within 1e-12.
    std::vector<double> small(c);
    for (double& v : small) v = rng.uniform(-5.0, 5.0);
    auto shifted = small;
    const double shift = rng.uniform(-50.0, 50.0);
    for (double& v : shifted) v += shift;
    const auto a = softmax(small, 1.0);
    const auto b = softmax(shifted, 1.0);
    for (std::size_t i = 0; i < c; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Zscore, ConstantInputGivesZeros) {
  const auto n = zscore_normalize(LogitVector{5.0, 5.0, 5.0});
  for (double v : n.values) EXPECT_EQ(v, 0.0);
  const auto m = zscore_normalize(LogitVector{0.1, 0.1, 0.1, 0.1});
  for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(Zscore, MatchesIndependentMeanStd) {
  // mean 2.5, population std sqrt(1.25); 40-digit evaluation with eps = 1e-6.
  const double expected[] = {-1.3416395865009471295, -0.44721319550031570984,
                             0.44721319550031570984, 1.3416395865009471295};
  const auto n = zscore_normalize(LogitVector{1.0, 2.0, 3.0, 4.0}, 1e-6);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(n.values[i], expected[i], 1e-14);
}

TEST(Zscore, AffineInvariantAndIdempotent) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = test::random_logits(rng, 2 + rng.below(30), 3.0);
    const auto base = zscore_normalize(z, 1e-6);
    const double a = std::exp(rng.uniform(-2.0, 4.0));
    const double b = rng.uniform(-20.0, 20.0);
    std::vector<double> t(z);
    for (double& v : t) v = a * v + b;
    const auto moved = zscore_normalize(t, 1e-6);
    // Idempotence is exact only as eps -> 0; a second pass at eps = 1e-6 moves
    // entries by about |zhat| * 1e-6, so it is checked at eps = 1e-9.
    const auto fine = zscore_normalize(z, 1e-9);
    const auto twice = zscore_normalize(fine.values, 1e-9);
    double mean = 0.0, ss = 0.0;
    for (double v : base.values) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : base.values) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(z.size())), 1.0, 1e-5);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_NEAR(moved.values[i], base.values[i], 1e-5);
      EXPECT_NEAR(twice.values[i], fine.values[i], 1e-6);
    }
  }
}

TEST(Zscore, BackwardMatchesFiniteDifferences) {
  // C = 2 is excluded: its z-score is +-1 up to eps, so the gradient is pure
  // eps-scale noise and a relative comparison is meaningless.
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 3 + rng.below(20);
    const auto z = test::random_logits(rng, c, 2.0);
    const auto w = test::random_logits(rng, c);
    // Scalar probe f(z) = <w, zscore(z)>.
    auto f = [&](std::span<const double> x) {
      const auto n = zscore_normalize(x, 1e-6);
      return std::inner_product(w.begin(), w.end(), n.values.begin(), 0.0);
    };
    const auto fwd = zscore_normalize(z, 1e-6);
    const auto analytic = zscore_backward(z, fwd, w);
    const auto numeric = finite_difference_gradient(f, z, 1e-5);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-6);
  }
}

TEST(FiniteDifference, Quadratic) {
  auto f = [](std::span<const double> z) {
    double s = 0.0;
    for (double v : z) s += v * v;
    return s;
  };
  const std::vector<double> z{1.0, -2.0};
  const auto g = finite_difference_gradient(f, z, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], -4.0, 1e-6);
}

TEST(FiniteDifference, ConstantIsZero) {
  auto f = [](std::span<const double>) { return 3.5; };
  const std::vector<double> z{0.3, 1.0, -7.0};
  for (double g : finite_difference_gradient(f, z, 1e-5)) EXPECT_NEAR(g, 0.0, 1e-9);
}

TEST(FiniteDifference, PolynomialRelativeError) {
  // f = sum_i c_i z_i^3 + z_0 z_1, symbolic gradient alongside.
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto coef = test::random_logits(rng, 5);
    const auto z = test::random_logits(rng, 5);
    auto f = [&](std::span<const double> x) {
      double s = x[0] * x[1];
      for (std::size_t i = 0; i < x.size(); ++i) s += coef[i] * x[i] * x[i] * x[i];
      return s;
    };
    std::vector<double> sym(5);
    for (std::size_t i = 0; i < 5; ++i) sym[i] = 3.0 * coef[i] * z[i] * z[i];
    sym[0] += z[1];
    sym[1] += z[0];
    EXPECT_LT(max_relative_error(finite_difference_gradient(f, z, 1e-5), sym), 1e-6);
  }
}

TEST(FiniteDifference, NonFiniteIsOracleError) {
  auto f = [](std::span<const double> z) { return z[0] > 0.0 ? std::log(-1.0) : 0.0; };
  const std::vector<double> z{0.0, 1.0};
  EXPECT_THROW(finite_difference_gradient(f, z, 1e-5), OracleError);
  EXPECT_THROW(finite_difference_gradient(f, z, 0.0), InputError);
}
