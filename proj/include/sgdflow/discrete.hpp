#pragma once

// Discrete recursions:
//   sgd       χ_{n+1} = χ_n + η_n H_γ(n)(χ_n)
//   momentum  χ_{n+1} = χ_n + η_n H_γ(n)(χ_n) + ζ_n (χ_n - χ_{n-1})
//   augmented z_{n+1} = z_n + U_n J_γ(n)(z_n),  z_n = (χ_n, χ_{n-1})
//
// Without an explicit x1 the momentum run starts from χ_{-1} = χ_0, so its
// first step is exactly one plain SGD step.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdflow/augment.hpp"
#include "sgdflow/problems.hpp"
#include "sgdflow/rng.hpp"
#include "sgdflow/schedules.hpp"

namespace sgdflow {

enum class Mode { sgd, momentum, augmented };

inline const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::sgd: return "sgd";
    case Mode::momentum: return "momentum";
    case Mode::augmented: return "augmented";
  }
  return "unknown";
}

constexpr double kDivergenceBound = 1e12;
constexpr std::int64_t kMaxStoredIterates = 1'000'000;

/// Number of steps T/h; throws unless T/h is a positive integer.
inline std::int64_t horizon_steps(double horizon, double h) {
  check_step_scale(h);
  if (!(horizon > 0.0)) throw InvalidStepError("horizon T must be positive");
  const double ratio = horizon / h;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream msg;
    msg << "T/h not an integer (T = " << horizon << ", h = " << h << ")";
    throw InvalidStepError(msg.str());
  }
  return static_cast<std::int64_t>(rounded);
}

struct DiscreteConfig {
  double h = 0.1;
  double horizon = 1.0;
  Vector x0;
  std::optional<Vector> x1;
  FamilyPtr family;
  std::vector<Schedule> rates;
  std::vector<Schedule> momenta;  // empty: no momentum
  std::uint64_t seed = 0;

  std::int64_t steps() const { return horizon_steps(horizon, h); }
  int dimension() const { return family ? family->dimension() : 0; }
  bool has_momentum() const { return !momenta.empty(); }

  void validate() const {
    horizon_steps(horizon, h);
    if (!family) throw std::invalid_argument("discrete config has no family");
    const auto d = static_cast<std::size_t>(family->dimension());
    if (static_cast<std::size_t>(x0.size()) != d) throw std::invalid_argument("x0 has wrong dimension");
    if (x1 && static_cast<std::size_t>(x1->size()) != d) throw std::invalid_argument("x1 has wrong dimension");
    if (rates.size() != d) throw std::invalid_argument("need one learning-rate schedule per coordinate");
    if (!momenta.empty() && momenta.size() != d)
      throw std::invalid_argument("need one momentum schedule per coordinate");
  }

  AugmentedSystem augmented_system() const {
    if (!has_momentum()) throw std::invalid_argument("augmented mode needs momentum schedules");
    return AugmentedSystem(family, rates, momenta);
  }
};

struct Trajectory {
  std::vector<std::int64_t> steps;  // step index of each stored iterate
  std::vector<Vector> iterates;
  std::vector<int> gamma;  // member used to leave step n; -1 when no draw was made
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  Mode mode = Mode::sgd;

  std::size_t size() const { return iterates.size(); }
  const Vector& endpoint() const { return iterates.back(); }
};

class TrajectoryDivergence : public DivergenceError {
 public:
  TrajectoryDivergence(const std::string& what, std::int64_t step, Trajectory partial)
      : DivergenceError(what, step), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

namespace detail {

inline Vector rate_vector(const DiscreteConfig& cfg, std::int64_t n) {
  const double t = static_cast<double>(n) * cfg.h;
  Vector out(cfg.dimension());
  for (int i = 0; i < out.size(); ++i) out[i] = cfg.h * cfg.rates[i].eval(t);
  return out;
}

inline Vector momentum_vector(const DiscreteConfig& cfg, std::int64_t n) {
  const double t = static_cast<double>(n) * cfg.h;
  Vector out(cfg.dimension());
  for (int i = 0; i < out.size(); ++i) out[i] = cfg.momenta[i].eval(t);
  return out;
}

inline bool escaped(const Vector& x) { return !x.allFinite() || x.norm() > kDivergenceBound; }

inline Vector sgd_update(const Vector& x, std::int64_t n, const DiscreteConfig& cfg, std::size_t member) {
  return x + rate_vector(cfg, n).cwiseProduct(cfg.family->drift(member, x));
}

inline Vector momentum_update(const Vector& x, const Vector& x_prev, std::int64_t n, const DiscreteConfig& cfg,
                              std::size_t member) {
  return x + rate_vector(cfg, n).cwiseProduct(cfg.family->drift(member, x)) +
         momentum_vector(cfg, n).cwiseProduct(x - x_prev);
}

// Drives one path, calling visit(step, state, gamma_used_to_reach_step).
// States are d-dimensional except in augmented mode (2d).
template <class Visitor>
void simulate(const DiscreteConfig& cfg, Mode mode, RandomStream& rng, Visitor&& visit) {
  const std::int64_t total = cfg.steps();
  auto check = [&](const Vector& state, std::int64_t n) {
    if (escaped(state)) {
      std::ostringstream msg;
      msg << "iterate diverged at step " << n << " (|x| > " << kDivergenceBound << " or non-finite)";
      throw DivergenceError(msg.str(), n);
    }
  };
  switch (mode) {
    case Mode::sgd: {
      Vector x = cfg.x0;
      visit(0, x, -1);
      for (std::int64_t n = 0; n < total; ++n) {
        const std::size_t member = sample_index(*cfg.family, rng);
        x = sgd_update(x, n, cfg, member);
        check(x, n + 1);
        visit(n + 1, x, static_cast<int>(member));
      }
      return;
    }
    case Mode::momentum: {
      if (!cfg.has_momentum()) throw std::invalid_argument("momentum mode needs momentum schedules");
      Vector prev = cfg.x0;
      Vector x = cfg.x0;
      visit(0, x, -1);
      std::int64_t n = 0;
      if (cfg.x1) {
        x = *cfg.x1;
        check(x, 1);
        visit(1, x, -1);
        n = 1;
      }
      for (; n < total; ++n) {
        const std::size_t member = sample_index(*cfg.family, rng);
        Vector next = momentum_update(x, prev, n, cfg, member);
        prev = std::move(x);
        x = std::move(next);
        check(x, n + 1);
        visit(n + 1, x, static_cast<int>(member));
      }
      return;
    }
    case Mode::augmented: {
      const AugmentedSystem sys = cfg.augmented_system();
      const int d = cfg.dimension();
      Vector z(2 * d);
      z << cfg.x0, cfg.x0;
      visit(0, z, -1);
      std::int64_t n = 0;
      if (cfg.x1) {
        z.head(d) = *cfg.x1;
        check(z, 1);
        visit(1, z, -1);
        n = 1;
      }
      for (; n < total; ++n) {
        const std::size_t member = sample_index(*cfg.family, rng);
        z = sys.step(cfg.h, n, z, member);
        check(z, n + 1);
        visit(n + 1, z, static_cast<int>(member));
      }
      return;
    }
  }
}

}  // namespace detail

inline Vector sgd_step(const Vector& x, std::int64_t n, const DiscreteConfig& cfg, RandomStream& rng) {
  const std::size_t member = sample_index(*cfg.family, rng);
  Vector out = detail::sgd_update(x, n, cfg, member);
  if (detail::escaped(out)) throw DivergenceError("sgd step diverged", n + 1);
  return out;
}

inline Vector momentum_step(const Vector& x_curr, const Vector& x_prev, std::int64_t n, const DiscreteConfig& cfg,
                            RandomStream& rng) {
  if (!cfg.has_momentum()) throw std::invalid_argument("momentum_step needs momentum schedules");
  const std::size_t member = sample_index(*cfg.family, rng);
  Vector out = detail::momentum_update(x_curr, x_prev, n, cfg, member);
  if (detail::escaped(out)) throw DivergenceError("momentum step diverged", n + 1);
  return out;
}

/// x1 from a single plain SGD step at n = 0.
inline Vector bootstrap_first_iterate(const Vector& x0, const DiscreteConfig& cfg, RandomStream& rng) {
  return sgd_step(x0, 0, cfg, rng);
}

/// Full path for (cfg.seed, stream_id). Paths longer than 10^6 steps keep a
/// strided subset that always includes the endpoint.
inline Trajectory run_trajectory(const DiscreteConfig& cfg, Mode mode, std::uint64_t stream_id = 0) {
  cfg.validate();
  const std::int64_t total = cfg.steps();
  const std::int64_t stride = total <= kMaxStoredIterates ? 1 : (total + kMaxStoredIterates - 1) / kMaxStoredIterates;
  Trajectory traj;
  traj.seed = cfg.seed;
  traj.stream_id = stream_id;
  traj.mode = mode;
  RandomStream rng(cfg.seed, stream_id);
  try {
    detail::simulate(cfg, mode, rng, [&](std::int64_t n, const Vector& state, int gamma) {
      if (n > 0 && stride == 1) traj.gamma.back() = gamma;
      if (n % stride == 0 || n == total) {
        traj.steps.push_back(n);
        traj.iterates.push_back(state);
        traj.gamma.push_back(-1);
      }
    });
  } catch (const DivergenceError& e) {
    throw TrajectoryDivergence(e.what(), e.step(), std::move(traj));
  }
  return traj;
}

/// Endpoint and running max of |state|² without storing the path.
struct PathSummary {
  Vector endpoint;
  double sup_norm_squared = 0.0;
};

inline PathSummary simulate_path(const DiscreteConfig& cfg, Mode mode, std::uint64_t stream_id) {
  RandomStream rng(cfg.seed, stream_id);
  PathSummary out;
  detail::simulate(cfg, mode, rng, [&](std::int64_t, const Vector& state, int) {
    out.sup_norm_squared = std::max(out.sup_norm_squared, state.squaredNorm());
    out.endpoint = state;
  });
  return out;
}

/// CSV with columns step, t, x_1..x_k, gamma (gamma = member drawn to leave that step).
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, double h) {
  const Eigen::Index width = traj.iterates.empty() ? 0 : traj.iterates.front().size();
  out << "step,t";
  for (Eigen::Index i = 0; i < width; ++i) out << ",x_" << (i + 1);
  out << ",gamma\n";
  char buffer[64];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << traj.steps[k];
    std::snprintf(buffer, sizeof buffer, ",%.17g", static_cast<double>(traj.steps[k]) * h);
    out << buffer;
    for (Eigen::Index i = 0; i < width; ++i) {
      std::snprintf(buffer, sizeof buffer, ",%.17g", traj.iterates[k][i]);
      out << buffer;
    }
    out << ',';
    if (traj.gamma[k] >= 0) out << traj.gamma[k];
    out << '\n';
  }
}

}  // namespace sgdflow
