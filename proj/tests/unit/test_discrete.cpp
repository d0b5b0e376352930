#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "sgdflow/discrete.hpp"
#include "sgdflow/stats.hpp"

using namespace sgdflow;

namespace {

DiscreteConfig linear_config(std::vector<double> slopes, std::vector<double> probs, double h, double horizon,
                             double x0) {
  DiscreteConfig cfg;
  cfg.h = h;
  cfg.horizon = horizon;
  cfg.x0 = Vector::Constant(1, x0);
  cfg.family = std::make_shared<GradientFamily>(make_scalar_linear_family(slopes, {}, probs));
  cfg.rates = {Schedule::constant(1.0)};
  cfg.seed = 123;
  return cfg;
}

TEST(HorizonSteps, IntegerRatiosOnly) {
  EXPECT_EQ(horizon_steps(1.0, 0.1), 10);
  EXPECT_EQ(horizon_steps(1.0, 0.5), 2);
  try {
    horizon_steps(1.0, 0.3);
    FAIL() << "expected InvalidStepError";
  } catch (const InvalidStepError& e) {
    EXPECT_NE(std::string(e.what()).find("T/h not an integer"), std::string::npos);
  }
  EXPECT_THROW(horizon_steps(1.0, 1.0), InvalidStepError);
  EXPECT_THROW(horizon_steps(0.0, 0.1), InvalidStepError);
}

TEST(SgdStep, DeterministicLinearStep) {
  auto cfg = linear_config({1.0}, {1.0}, 0.1, 1.0, 1.0);
  RandomStream rng(1, 0);
  EXPECT_DOUBLE_EQ(sgd_step(cfg.x0, 0, cfg, rng)[0], 0.9);
  EXPECT_DOUBLE_EQ(bootstrap_first_iterate(cfg.x0, cfg, rng)[0], 0.9);
}

TEST(SgdStep, TenStepsGivePower) {
  auto cfg = linear_config({1.0}, {1.0}, 0.1, 1.0, 1.0);
  EXPECT_NEAR(run_trajectory(cfg, Mode::sgd).endpoint()[0], 0.3486784401, 1e-15);
}

TEST(SgdStep, ReproducibleUnderSeed) {
  auto cfg = linear_config({1.0, 2.0}, {0.5, 0.5}, 0.1, 1.0, 1.0);
  RandomStream a(9, 4), b(9, 4);
  EXPECT_EQ(sgd_step(cfg.x0, 0, cfg, a)[0], sgd_step(cfg.x0, 0, cfg, b)[0]);
  const auto t1 = run_trajectory(cfg, Mode::sgd, 3);
  const auto t2 = run_trajectory(cfg, Mode::sgd, 3);
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t k = 0; k < t1.size(); ++k) EXPECT_EQ(t1.iterates[k][0], t2.iterates[k][0]);
  EXPECT_EQ(t1.gamma, t2.gamma);
}

TEST(MomentumStep, HandExamples) {
  auto cfg = linear_config({1.0}, {1.0}, 0.1, 1.0, 1.0);
  cfg.momenta = {Schedule::constant(0.5)};
  RandomStream rng(1, 0);
  EXPECT_NEAR(momentum_step(Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), 0, cfg, rng)[0], 0.4, 1e-15);
  cfg.momenta = {Schedule::constant(0.9)};
  EXPECT_DOUBLE_EQ(momentum_step(Vector::Constant(1, 1.0), Vector::Constant(1, 1.0), 0, cfg, rng)[0], 0.9);
}

TEST(MomentumStep, ZeroMomentumEqualsSgd) {
  auto cfg = linear_config({1.0, 3.0}, {0.3, 0.7}, 0.05, 1.0, 2.0);
  auto mom = cfg;
  mom.momenta = {Schedule::constant(0.0)};
  const auto a = run_trajectory(cfg, Mode::sgd, 1);
  const auto b = run_trajectory(mom, Mode::momentum, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(a.iterates[k][0], b.iterates[k][0]);
}

TEST(RunTrajectory, StoresAllIterates) {
  auto cfg = linear_config({1.0}, {1.0}, 0.5, 1.0, 1.0);
  const auto traj = run_trajectory(cfg, Mode::sgd);
  EXPECT_EQ(traj.size(), 3u);
  EXPECT_EQ(traj.steps.back(), 2);
}

TEST(RunTrajectory, SingletonIgnoresSeed) {
  auto cfg = linear_config({1.5}, {1.0}, 0.1, 2.0, -1.0);
  const double a = run_trajectory(cfg, Mode::sgd, 0).endpoint()[0];
  cfg.seed = 999;
  EXPECT_EQ(run_trajectory(cfg, Mode::sgd, 17).endpoint()[0], a);
}

TEST(RunTrajectory, AugmentedFirstBlockMatchesMomentum) {
  DiscreteConfig cfg;
  cfg.h = 0.05;
  cfg.horizon = 2.0;
  cfg.x0 = Vector::Constant(2, 1.0);
  cfg.family = std::make_shared<GradientFamily>(make_random_quadratic_family(2, 3, 0.2, 2.0, 8));
  cfg.rates = {Schedule::constant(1.0), Schedule::exponential(1.0, 0.5)};
  cfg.momenta = {Schedule::constant(0.6), Schedule::polynomial(0.9, 1.0)};
  cfg.seed = 77;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto mom = run_trajectory(cfg, Mode::momentum, s);
    const auto aug = run_trajectory(cfg, Mode::augmented, s);
    ASSERT_EQ(mom.size(), aug.size());
    EXPECT_EQ(mom.gamma, aug.gamma);
    for (std::size_t k = 0; k < mom.size(); ++k)
      ASSERT_LE((aug.iterates[k].head(2) - mom.iterates[k]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RunTrajectory, ExplicitSecondIterate) {
  auto cfg = linear_config({1.0}, {1.0}, 0.1, 0.3, 1.0);
  cfg.momenta = {Schedule::constant(0.5)};
  cfg.x1 = Vector::Constant(1, 2.0);
  const auto traj = run_trajectory(cfg, Mode::momentum);
  ASSERT_EQ(traj.size(), 4u);
  EXPECT_EQ(traj.iterates[1][0], 2.0);
  // x2 = 2 - 0.2 + 0.5 * (2 - 1)
  EXPECT_NEAR(traj.iterates[2][0], 2.3, 1e-15);
}

TEST(RunTrajectory, DivergenceCarriesPartialPath) {
  auto cfg = linear_config({-50.0}, {1.0}, 0.5, 100.0, 1.0);
  try {
    run_trajectory(cfg, Mode::sgd);
    FAIL() << "expected divergence";
  } catch (const TrajectoryDivergence& e) {
    EXPECT_GT(e.step(), 0);
    EXPECT_EQ(static_cast<std::int64_t>(e.partial().size()), e.step());
  }
}

TEST(MeanStep, MatchesMeanDrift) {
  for (const auto& probs : {std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}}) {
    const std::vector<double> slopes = probs.size() == 1 ? std::vector<double>{1.0} : std::vector<double>{1.0, 2.0};
    auto cfg = linear_config(slopes, probs, 0.1, 1.0, 1.5);
    const int n = 1'000'000;
    std::vector<double> inc(n);
    RandomStream rng(5, 0);
    for (int i = 0; i < n; ++i) inc[i] = sgd_step(cfg.x0, 0, cfg, rng)[0] - cfg.x0[0];
    const auto est = summarize(inc);
    const double expected = 0.1 * mean_drift(*cfg.family, cfg.x0)[0];
    EXPECT_LE(std::abs(est.value - expected), 4.0 * est.standard_error + 1e-15);
  }
}

TEST(MomentBound, SupNormControlledByInitialPoint) {
  // C fitted once over these families, starts and steps
  constexpr double kC = 1.2;
  auto sup_mean = [](const DiscreteConfig& cfg) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) total += simulate_path(cfg, Mode::sgd, s).sup_norm_squared;
    return total / 1000.0;
  };
  for (double x0 : {0.0, 0.5, 1.0, 3.0, 10.0}) {
    for (double h : {0.1, 0.05, 0.025}) {
      auto two = linear_config({1.0, 2.0}, {0.5, 0.5}, h, 1.0, x0);
      auto ou = two;
      ou.family = std::make_shared<GradientFamily>(make_ou_benchmark(1.0));
      for (const auto& cfg : {two, ou})
        EXPECT_LE(sup_mean(cfg), kC * (1.0 + x0) * (1.0 + x0)) << "x0 = " << x0 << ", h = " << h;
    }
  }
}

TEST(TrajectoryCsv, ColumnsAndPrecision) {
  auto cfg = linear_config({1.0, 2.0}, {0.5, 0.5}, 0.5, 1.0, 1.0);
  const auto traj = run_trajectory(cfg, Mode::sgd);
  std::ostringstream out;
  write_trajectory_csv(out, traj, cfg.h);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,t,x_1,gamma");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 6), "0,0,1,");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

}  // namespace
