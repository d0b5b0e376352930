#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "sgdflow/moments.hpp"

using namespace sgdflow;

namespace {

DiscreteConfig two_member(double h, double horizon, double x0) {
  DiscreteConfig cfg;
  cfg.h = h;
  cfg.horizon = horizon;
  cfg.x0 = Vector::Constant(1, x0);
  cfg.family = std::make_shared<GradientFamily>(make_scalar_linear_family({1.0, 2.0}, {0.5, -0.3}, {0.4, 0.6}));
  cfg.rates = {Schedule::exponential(1.0, 0.4)};
  cfg.momenta = {Schedule::constant(0.5)};
  return cfg;
}

// E g over all |Γ|^N member sequences.
template <class Step>
std::pair<double, double> enumerate(const DiscreteConfig& cfg, int steps, Vector state, Step step) {
  double m1 = 0.0, m2 = 0.0;
  const int m = static_cast<int>(cfg.family->size());
  int total = 1;
  for (int k = 0; k < steps; ++k) total *= m;
  for (int code = 0; code < total; ++code) {
    Vector z = state;
    double weight = 1.0;
    int c = code;
    for (int n = 0; n < steps; ++n) {
      const int member = c % m;
      c /= m;
      weight *= cfg.family->probability(member);
      z = step(z, n, member);
    }
    m1 += weight * z[0];
    m2 += weight * z[0] * z[0];
  }
  return {m1, m2};
}

TEST(DiscreteMoments, SgdMatchesEnumeration) {
  const auto cfg = two_member(0.1, 1.0, 1.5);
  const auto [m1, m2] = enumerate(cfg, 10, cfg.x0, [&](const Vector& z, int n, int i) {
    return detail::sgd_update(z, n, cfg, i);
  });
  const auto mom = discrete_affine_moments(cfg, Mode::sgd);
  EXPECT_NEAR(mom.mean[0], m1, 1e-13);
  EXPECT_NEAR(mom.second(0, 0), m2, 1e-13);
}

TEST(DiscreteMoments, MomentumAndAugmentedMatchEnumeration) {
  const auto cfg = two_member(0.1, 1.0, -0.7);
  Vector start(2);
  start << cfg.x0, cfg.x0;
  const auto [m1, m2] = enumerate(cfg, 10, start, [&](const Vector& z, int n, int i) {
    Vector out(2);
    out << detail::momentum_update(z.head(1), z.tail(1), n, cfg, i), z[0];
    return out;
  });
  for (Mode mode : {Mode::momentum, Mode::augmented}) {
    const auto mom = discrete_affine_moments(cfg, mode);
    EXPECT_NEAR(mom.mean[0], m1, 1e-13) << to_string(mode);
    EXPECT_NEAR(mom.second(0, 0), m2, 1e-13) << to_string(mode);
  }
}

TEST(DiscreteMoments, DeterministicPower) {
  DiscreteConfig cfg = two_member(0.1, 1.0, 1.0);
  cfg.family = std::make_shared<GradientFamily>(make_scalar_linear_family({1.0}, {}, {1.0}));
  cfg.rates = {Schedule::constant(1.0)};
  const auto mom = discrete_affine_moments(cfg, Mode::sgd);
  EXPECT_NEAR(mom.mean[0], std::pow(0.9, 10), 1e-15);
  EXPECT_NEAR(mom.covariance()(0, 0), 0.0, 1e-15);
}

TEST(DiscreteMoments, RejectsNonAffineFamily) {
  DiscreteConfig cfg = two_member(0.1, 1.0, 1.0);
  TanhFamilySpec spec;
  spec.amplitudes = {1.0};
  spec.centers = {Vector::Zero(1)};
  cfg.family = std::make_shared<GradientFamily>(make_tanh_family(spec));
  EXPECT_THROW(discrete_affine_moments(cfg, Mode::sgd), UnsupportedError);
}

TEST(Expectation, Forms) {
  Moments m{Vector::Constant(2, 1.0), Matrix::Identity(2, 2) * 3.0};
  m.second(0, 1) = m.second(1, 0) = 0.5;
  EXPECT_EQ(*expectation(constant_observable(2.5), m), 2.5);
  EXPECT_EQ(*expectation(coordinate_observable(1), m), 1.0);
  EXPECT_DOUBLE_EQ(*expectation(squared_norm_observable(2), m), 6.0);
  Matrix w(2, 2);
  w << 0.0, 1.0, 0.0, 0.0;
  EXPECT_DOUBLE_EQ(*expectation(quadratic_observable(w), m), 0.5);
  EXPECT_FALSE(expectation(bump_observable(Vector::Zero(2), 1.0), m).has_value());
}

SurrogateSpec ou_spec(SurrogateKind kind, double sigma, double h) {
  SurrogateSpec spec;
  spec.kind = kind;
  spec.family = std::make_shared<GradientFamily>(make_ou_benchmark(sigma));
  spec.rates = {Schedule::constant(1.0)};
  spec.h = h;
  spec.substep = std::min(1e-3, h / 4.0);
  return spec;
}

TEST(SurrogateMoments, OrnsteinUhlenbeckClosedForm) {
  const double sigma = 1.3, h = 0.1, x = 2.0, span = 1.5;
  const auto m = surrogate_affine_moments(ou_spec(SurrogateKind::sde1, sigma, h), Vector::Constant(1, x), 0.0, span);
  const double mean = x * std::exp(-span);
  const double var = h * sigma * sigma * (1.0 - std::exp(-2.0 * span)) / 2.0;
  EXPECT_NEAR(m.mean[0], mean, 1e-12);
  EXPECT_NEAR(m.covariance()(0, 0), var, 1e-12);
}

TEST(SurrogateMoments, SecondOrderOrnsteinUhlenbeck) {
  // drift -(1 + h/2) x with unchanged diffusion
  const double sigma = 1.0, h = 0.2, x = 1.0;
  const auto m = surrogate_affine_moments(ou_spec(SurrogateKind::sde2, sigma, h), Vector::Constant(1, x), 0.0, 1.0);
  const double k = 1.0 + 0.5 * h;
  EXPECT_NEAR(m.mean[0], x * std::exp(-k), 1e-12);
  EXPECT_NEAR(m.covariance()(0, 0), h * sigma * sigma * (1.0 - std::exp(-2.0 * k)) / (2.0 * k), 1e-12);
}

TEST(SurrogateMoments, OdeHasNoSpread) {
  const auto m = surrogate_affine_moments(ou_spec(SurrogateKind::ode, 1.0, 0.1), Vector::Constant(1, 1.0), 0.0, 1.0);
  EXPECT_NEAR(m.mean[0], std::exp(-1.0), 1e-12);
  EXPECT_NEAR(m.covariance()(0, 0), 0.0, 1e-12);
}

TEST(SurrogateMoments, MatchesMonteCarlo) {
  auto spec = ou_spec(SurrogateKind::sde1, 1.0, 0.1);
  spec.family = std::make_shared<GradientFamily>(make_scalar_linear_family({1.0, 2.0}, {0.5, -0.3}, {0.4, 0.6}));
  spec.rates = {Schedule::polynomial(0.9, 1.0)};
  spec.substep = 0.01;
  const Vector x = Vector::Constant(1, 1.2);
  const auto m = surrogate_affine_moments(spec, x, 0.0, 1.0);
  const int n = 40000;
  std::vector<double> v1(n), v2(n);
  for (int i = 0; i < n; ++i) {
    RandomStream rng(13, i);
    const double e = sde_sample(spec, x, 0.0, 1.0, rng)[0];
    v1[i] = e;
    v2[i] = e * e;
  }
  const auto e1 = summarize(v1), e2 = summarize(v2);
  EXPECT_LE(std::abs(e1.value - m.mean[0]), 4.0 * e1.standard_error + 1e-4);
  EXPECT_LE(std::abs(e2.value - m.second(0, 0)), 4.0 * e2.standard_error + 1e-4);
}

}  // namespace
