#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sgdflow/schedules.hpp"

using namespace sgdflow;

namespace {

TEST(Schedule, ClosedFormValues) {
  EXPECT_EQ(Schedule::constant(1.0).eval(5.0), 1.0);
  EXPECT_NEAR(Schedule::exponential(1.0, 0.5).eval(2.0), std::exp(-1.0), 1e-15);
  EXPECT_DOUBLE_EQ(Schedule::polynomial(0.5, 1.0).eval(3.0), 0.125);
}

TEST(Schedule, ClosedFormDerivatives) {
  EXPECT_EQ(Schedule::constant(0.9).derivative(7.0), 0.0);
  EXPECT_DOUBLE_EQ(Schedule::exponential(1.0, 0.5).derivative(0.0), -0.5);
  EXPECT_DOUBLE_EQ(Schedule::polynomial(0.5, 1.0).derivative(0.0), -0.5);
}

TEST(Schedule, NegativeTimeIsDomainError) {
  EXPECT_THROW(Schedule::constant(1.0).eval(-0.1), DomainError);
  EXPECT_THROW(Schedule::exponential(1.0, 1.0).derivative(-1.0), DomainError);
}

std::vector<Schedule> builtins() {
  return {Schedule::constant(0.7), Schedule::exponential(1.0, 0.3), Schedule::polynomial(0.8, 1.5),
          Schedule::tabulated({0.0, 1.0, 2.0, 3.0}, {1.0, 0.8, 0.6, 0.4})};
}

TEST(Schedule, RangeAndMonotoneOnGrid) {
  for (const auto& s : builtins()) {
    ASSERT_TRUE(validate(s).empty());
    for (int k = 0; k <= 1000; ++k) {
      const double t = 0.1 * k;
      ASSERT_GT(s.eval(t), 0.0);
      ASSERT_LE(s.eval(t), 1.0);
      ASSERT_LE(s.derivative(t), 0.0);
    }
  }
}

TEST(Schedule, DerivativeMatchesCentralDifference) {
  for (const auto& s : {Schedule::exponential(1.0, 0.7), Schedule::polynomial(0.9, 2.0)}) {
    for (double t : {0.5, 1.0, 4.0}) {
      const double e1 = 1e-3, e2 = 1e-4;
      const double d1 = std::abs(s.derivative(t) - (s.eval(t + e1) - s.eval(t - e1)) / (2 * e1));
      const double d2 = std::abs(s.derivative(t) - (s.eval(t + e2) - s.eval(t - e2)) / (2 * e2));
      EXPECT_LE(d1, 10.0 * e1 * e1);
      EXPECT_LE(d2, 10.0 * e2 * e2 + 1e-10);
    }
  }
}

TEST(Schedule, TabulatedInterpolatesKnotsAndHoldsTail) {
  const auto s = Schedule::tabulated({0.0, 1.0, 2.0}, {1.0, 0.6, 0.5});
  EXPECT_DOUBLE_EQ(s.eval(0.0), 1.0);
  EXPECT_DOUBLE_EQ(s.eval(1.0), 0.6);
  EXPECT_DOUBLE_EQ(s.eval(2.0), 0.5);
  EXPECT_EQ(s.eval(10.0), 0.5);
  EXPECT_EQ(s.derivative(10.0), 0.0);
  EXPECT_TRUE(s.eventually_constant());
  EXPECT_FALSE(Schedule::exponential(1.0, 1.0).eventually_constant());
  // derivative of the interpolant against finite differences
  for (double t : {0.3, 1.4}) EXPECT_NEAR(s.derivative(t), (s.eval(t + 1e-6) - s.eval(t - 1e-6)) / 2e-6, 1e-7);
}

TEST(Schedule, ValidationReportsViolations) {
  const auto too_big = validate(Schedule::constant(1.5));
  ASSERT_EQ(too_big.size(), 1u);
  EXPECT_NE(too_big.front().find("value > 1"), std::string::npos);
  EXPECT_TRUE(validate(Schedule::exponential(1.0, 0.1)).empty());
  const auto increasing = validate(Schedule::tabulated({0.0, 1.0}, {0.5, 0.8}));
  ASSERT_FALSE(increasing.empty());
  EXPECT_NE(increasing.front().find("not nonincreasing"), std::string::npos);
  EXPECT_FALSE(validate(Schedule::exponential(1.0, -0.5)).empty());
  EXPECT_FALSE(validate(Schedule::tabulated({0.0, 0.0}, {1.0, 0.5})).empty());
  EXPECT_FALSE(validate(Schedule::tabulated({0.0}, {1.0, 0.5})).empty());
}

TEST(Schedule, ValidationCatchesSplineOvershoot) {
  // nonincreasing knots, but the clamped cubic rises after the middle knot
  const auto problems = validate(Schedule::tabulated({0.0, 1.0, 2.0}, {1.0, 0.6, 0.5}));
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems.front().find("interpolant not nonincreasing"), std::string::npos);
}

TEST(Schedule, InvalidTabulatedRefusesEvaluation) {
  const auto s = Schedule::tabulated({1.0, 0.0}, {1.0, 0.5});
  EXPECT_THROW(s.eval(0.5), std::logic_error);
}

TEST(RateMatrix, Examples) {
  const std::vector<Schedule> one{Schedule::constant(1.0)};
  const auto m1 = rate_matrix(one, 0.1, 3);
  ASSERT_EQ(m1.dimension(), 1u);
  EXPECT_DOUBLE_EQ(m1[0], 0.1);

  const std::vector<Schedule> two{Schedule::constant(1.0), Schedule::constant(0.5)};
  const auto m2 = rate_matrix(two, 0.2, 0);
  EXPECT_DOUBLE_EQ(m2[0], 0.2);
  EXPECT_DOUBLE_EQ(m2[1], 0.1);

  const std::vector<Schedule> decay{Schedule::exponential(1.0, 1.0)};
  EXPECT_NEAR(rate_matrix(decay, 0.1, 10)[0], 0.1 * std::exp(-1.0), 1e-15);
}

TEST(RateMatrix, RejectsStepOutsideUnitInterval) {
  const std::vector<Schedule> one{Schedule::constant(1.0)};
  EXPECT_THROW(rate_matrix(one, 0.0, 0), InvalidStepError);
  EXPECT_THROW(rate_matrix(one, 1.0, 0), InvalidStepError);
  EXPECT_THROW(rate_matrix(one, -0.1, 0), InvalidStepError);
}

TEST(RateMatrix, LinearInStepScale) {
  const std::vector<Schedule> one{Schedule::constant(0.3)};
  EXPECT_EQ(rate_matrix(one, 0.4, 0)[0] / rate_matrix(one, 0.2, 0)[0], 2.0);
}

TEST(RateMatrix, EntriesInRange) {
  const std::vector<Schedule> s{Schedule::exponential(1.0, 0.5), Schedule::polynomial(0.4, 1.0)};
  for (std::int64_t n = 0; n < 200; ++n)
    for (double e : rate_matrix(s, 0.05, n).entries) {
      ASSERT_GT(e, 0.0);
      ASSERT_LE(e, 0.05);
    }
}

}  // namespace
