#include <gtest/gtest.h>

#include <string>

#include "sgdflow/config.hpp"

using namespace sgdflow;

namespace {

const std::string kMinimal = R"({
  "problem": {"kind": "linear", "slopes": [1.0]},
  "schedules": 1.0,
  "T": 1.0,
  "h_grid": [0.1, 0.05],
  "x0": [1.0]
})";

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.messages();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& messages, const std::string& needle) {
  for (const auto& m : messages)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

TEST(Config, MinimalDefaults) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.mode, Mode::sgd);
  EXPECT_EQ(cfg.surrogate, SurrogateKind::ode);
  EXPECT_EQ(cfg.samples, 10000u);
  EXPECT_EQ(cfg.observable.form, ObservableForm::coordinate);
  EXPECT_DOUBLE_EQ(cfg.substep, 1e-3);
  EXPECT_EQ(cfg.discrete(0.05).steps(), 20);
}

TEST(Config, SubstepDefaultsToQuarterOfSmallestStep) {
  auto text = kMinimal;
  text.replace(text.find("[0.1, 0.05]"), 11, "[0.01, 0.002]");
  EXPECT_DOUBLE_EQ(parse_config(text).substep, 0.0005);
}

TEST(Config, RejectsNonIntegerHorizonRatio) {
  auto text = kMinimal;
  text.replace(text.find("[0.1, 0.05]"), 11, "[0.3]");
  const auto messages = errors_of(text);
  ASSERT_EQ(messages.size(), 1u);
  EXPECT_NE(messages[0].find("T/h not an integer"), std::string::npos);
  EXPECT_EQ(messages[0].rfind("cfg.json:5: h_grid: h_grid[0]", 0), 0u) << messages[0];
}

TEST(Config, CollectsEveryProblem) {
  const std::string text = R"({
  "problem": {"kind": "linear", "slopes": [1.0]},
  "schedules": 1.5,
  "momentum": 1.2,
  "T": 1.0,
  "h_grid": [0.05, 0.1],
  "x0": [1.0, 2.0],
  "samples": 5,
  "colour": "blue"
})";
  const auto m = errors_of(text);
  EXPECT_TRUE(any_contains(m, "cfg.json:9: colour: unknown key"));
  EXPECT_TRUE(any_contains(m, "cfg.json:3: schedules: coordinate 0: value > 1"));
  EXPECT_TRUE(any_contains(m, "cfg.json:4: momentum: coordinate 0: momentum value outside [0, 1)"));
  EXPECT_TRUE(any_contains(m, "strictly descending"));
  EXPECT_TRUE(any_contains(m, "cfg.json:7: x0: x0 must have 1 entries"));
  EXPECT_TRUE(any_contains(m, "cfg.json:8: samples: must be an integer >= 100"));
  EXPECT_GE(m.size(), 6u);
}

TEST(Config, MissingRequiredKeys) {
  const auto m = errors_of("{}");
  for (const char* key : {"problem", "T", "h_grid", "x0"})
    EXPECT_TRUE(any_contains(m, std::string(key) + ": missing required key")) << key;
}

TEST(Config, InvalidJsonNamesLine) {
  const auto m = errors_of("{\n  \"T\": 1.0,\n  oops\n}");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].rfind("cfg.json:3: invalid JSON", 0), 0u) << m[0];
}

TEST(Config, SecondOrderNeedsJacobian) {
  auto text = kMinimal;
  text.replace(text.find("\"slopes\": [1.0]"), 15, "\"slopes\": [1.0, 2.0], \"jacobian\": false");
  text.replace(text.find("\"T\""), 0, "\"surrogate\": \"sde2\",\n  ");
  const auto m = errors_of(text);
  EXPECT_TRUE(any_contains(m, "second-order drift requires Jacobian or FD fallback enabled"));
  text.replace(text.find("\"T\""), 0, "\"fd_fallback\": true,\n  ");
  EXPECT_TRUE(errors_of(text).empty());
}

TEST(Config, MomentumModeNeedsMomentum) {
  auto text = kMinimal;
  text.replace(text.find("\"T\""), 0, "\"mode\": \"momentum\",\n  ");
  EXPECT_TRUE(any_contains(errors_of(text), "momentum modes need a 'momentum' entry"));
}

TEST(Config, ExactMethodNeedsAffineProblem) {
  const std::string text = R"({
  "problem": {"kind": "tanh", "amplitudes": [1.0], "centers": [[0.0]]},
  "schedules": 1.0, "T": 1.0, "h_grid": [0.1], "x0": [1.0],
  "discrete_method": "exact"
})";
  EXPECT_TRUE(any_contains(errors_of(text), "exact discrete moments need an affine problem"));
}

TEST(Config, SchedulesBroadcastAndObservables) {
  const std::string text = R"({
  "problem": {"kind": "random_quadratic", "d": 3, "m": 2, "eig_min": 0.5, "eig_max": 1.0, "seed": 1},
  "schedules": {"kind": "polynomial", "a": 0.9, "exponent": 1.0},
  "momentum": [0.5, 0.0, {"kind": "exponential", "a": 0.9, "rate": 1.0}],
  "mode": "augmented",
  "T": 1.0, "h_grid": [0.1], "x0": [1, 2, 3],
  "observable": {"kind": "quadratic", "weights": [[1, 0], [0, 2]]}
})";
  const auto cfg = parse_config(text);
  ASSERT_EQ(cfg.rates.size(), 3u);
  EXPECT_EQ(cfg.rates[2].kind(), ScheduleKind::polynomial_decay);
  EXPECT_EQ(cfg.momenta[1].eval(0.0), 0.0);
  EXPECT_EQ(cfg.observable.arity(), 2);
  EXPECT_EQ(cfg.surrogate_spec().dimension(), 6);
}

TEST(Config, ObservableArityChecked) {
  auto text = kMinimal;
  text.replace(text.find("\"T\""), 0, "\"observable\": {\"kind\": \"coordinate\", \"index\": 2},\n  ");
  EXPECT_TRUE(any_contains(errors_of(text), "observable reads more coordinates"));
}

TEST(Config, SdeSubstepChecked) {
  auto text = kMinimal;
  text.replace(text.find("\"T\""), 0, "\"surrogate\": \"sde1\", \"substep\": 0.02,\n  ");
  EXPECT_TRUE(any_contains(errors_of(text), "substep 0.02 exceeds h/4 for h = 0.05"));
}

TEST(Config, AnchoredMessages) {
  const auto cfg = parse_config(kMinimal, "file.json");
  EXPECT_EQ(anchored(cfg, "x0", "bad"), "file.json:6: x0: bad");
}

TEST(Config, SampleConfigsParse) {
  for (const char* name : {"linear_ode", "two_member_ode", "ou_sde1", "two_member_sde2", "momentum_augmented",
                           "tanh_nonconvex"}) {
    EXPECT_NO_THROW(load_config(std::string(SGDFLOW_CONFIG_DIR) + "/" + name + ".json")) << name;
  }
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

}  // namespace
