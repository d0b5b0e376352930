#pragma once

// First and second moments for families whose members are all affine.
//
// Discrete: each member's one-step map is affine, z -> M_i z + c_i, so
//   m' = Σ p_i (M_i m + c_i)
//   S' = Σ p_i (M_i S M_i^T + M_i m c_i^T + c_i m^T M_i^T + c_i c_i^T)
// propagates the mean and E[zz^T] exactly.
//
// Continuous: the drift is affine, b = A(t) x + c(t), and σσ^T is quadratic
// in x, so
//   m' = A m + c
//   S' = A S + S A^T + c m^T + m c^T + E[σσ^T](m, S)
// which is integrated with RK4.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sgdflow/continuous.hpp"
#include "sgdflow/discrete.hpp"
#include "sgdflow/observables.hpp"

namespace sgdflow {

struct Moments {
  Vector mean;
  Matrix second;  // E[z z^T]

  Matrix covariance() const { return second - mean * mean.transpose(); }
};

/// E g(Z) from the first two moments; empty when g is not a polynomial of degree ≤ 2.
inline std::optional<double> expectation(const Observable& g, const Moments& m) {
  switch (g.form) {
    case ObservableForm::constant: return g.constant;
    case ObservableForm::coordinate: return m.mean[g.index];
    case ObservableForm::quadratic: {
      const auto k = g.weights.rows();
      return g.weights.cwiseProduct(m.second.topLeftCorner(k, k)).sum();
    }
    case ObservableForm::bump: return std::nullopt;
  }
  return std::nullopt;
}

inline bool moments_available(const FamilyPtr& family, const Observable& g) {
  return family && family->is_affine() && g.form != ObservableForm::bump;
}

namespace detail {

struct AffineStep {
  Matrix slope;
  Vector offset;
};

template <class Map>
AffineStep probe_affine(const Map& map, int n) {
  AffineStep out;
  out.offset = map(Vector::Zero(n));
  out.slope.resize(out.offset.size(), n);
  for (int j = 0; j < n; ++j) out.slope.col(j) = map(Vector::Unit(n, j)) - out.offset;
  return out;
}

inline void propagate(const std::vector<AffineStep>& steps, const std::vector<double>& probs, Moments& m) {
  Vector mean = Vector::Zero(m.mean.size());
  Matrix second = Matrix::Zero(m.second.rows(), m.second.cols());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const Vector mapped = s.slope * m.mean;
    mean += probs[i] * (mapped + s.offset);
    const Matrix cross = mapped * s.offset.transpose();
    second += probs[i] * (s.slope * m.second * s.slope.transpose() + cross + cross.transpose() +
                          s.offset * s.offset.transpose());
  }
  m.mean = std::move(mean);
  m.second = 0.5 * (second + second.transpose());
}

}  // namespace detail

/// Exact moments of the discrete endpoint. The state is χ_N for sgd and
/// (χ_N, χ_{N-1}) for momentum and augmented modes.
inline Moments discrete_affine_moments(const DiscreteConfig& cfg, Mode mode) {
  cfg.validate();
  if (!cfg.family->is_affine()) throw UnsupportedError("exact moments need an affine family");
  const auto& f = *cfg.family;
  const int d = cfg.dimension();
  const std::int64_t total = cfg.steps();
  Moments m;
  std::int64_t n = 0;
  if (mode == Mode::sgd) {
    m.mean = cfg.x0;
  } else {
    if (!cfg.has_momentum()) throw std::invalid_argument("momentum moments need momentum schedules");
    m.mean.resize(2 * d);
    m.mean << (cfg.x1 ? *cfg.x1 : cfg.x0), cfg.x0;
    if (cfg.x1) n = 1;
  }
  m.second = m.mean * m.mean.transpose();
  std::optional<AugmentedSystem> sys;
  if (mode == Mode::augmented) sys.emplace(cfg.augmented_system());
  std::vector<detail::AffineStep> steps(f.size());
  for (; n < total; ++n) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      switch (mode) {
        case Mode::sgd:
          steps[i] = detail::probe_affine([&](const Vector& x) { return detail::sgd_update(x, n, cfg, i); }, d);
          break;
        case Mode::momentum:
          steps[i] = detail::probe_affine(
              [&](const Vector& z) {
                Vector out(2 * d);
                out << detail::momentum_update(z.head(d), z.tail(d), n, cfg, i), z.head(d);
                return out;
              },
              2 * d);
          break;
        case Mode::augmented:
          steps[i] = detail::probe_affine([&](const Vector& z) { return sys->step(cfg.h, n, z, i); }, 2 * d);
          break;
      }
    }
    detail::propagate(steps, f.probabilities(), m);
  }
  return m;
}

namespace detail {

// E[σσ^T] at time t for a state with moments (m, S); Σ(x) = Σ p_i (L_i x + e_i)(L_i x + e_i)^T
// with L_i x + e_i = H_i(x) - H̄(x).
inline Matrix expected_diffusion_covariance(const SurrogateSpec& spec, double t, const Vector& mean,
                                            const Matrix& second) {
  const auto& f = *spec.family;
  const int d = spec.base_dimension();
  Matrix slope_bar = Matrix::Zero(d, d);
  Vector offset_bar = Vector::Zero(d);
  for (std::size_t i = 0; i < f.size(); ++i) {
    slope_bar += f.probability(i) * f.member(i).affine->slope;
    offset_bar += f.probability(i) * f.member(i).affine->offset;
  }
  const Vector mx = mean.head(d);
  const Matrix sx = second.topLeftCorner(d, d);
  Matrix sigma = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Matrix l = f.member(i).affine->slope - slope_bar;
    const Vector e = f.member(i).affine->offset - offset_bar;
    const Matrix cross = l * mx * e.transpose();
    sigma += f.probability(i) * (l * sx * l.transpose() + cross + cross.transpose() + e * e.transpose());
  }
  const Vector u = schedule_values(spec.rates, t);
  Matrix out = Matrix::Zero(spec.dimension(), spec.dimension());
  out.topLeftCorner(d, d) = spec.h * u.asDiagonal() * sigma * u.asDiagonal();
  return out;
}

}  // namespace detail

/// Moments of the surrogate endpoint X_{t1} started from the point x at t0.
/// The drift is probed as an affine map at each RK4 stage; the ode kind has
/// no diffusion term.
inline Moments surrogate_affine_moments(const SurrogateSpec& spec, const Vector& x, double t0, double t1,
                                        double max_step = 1e-3) {
  spec.validate();
  if (!spec.family->is_affine()) throw UnsupportedError("closed-form surrogate moments need an affine family");
  if (t0 > t1 || t0 < 0.0) throw std::invalid_argument("surrogate moments need 0 <= t0 <= t1");
  const int n = spec.dimension();
  using State = std::pair<Vector, Matrix>;
  auto rhs = [&](double t, const State& s) {
    const auto a = detail::probe_affine([&](const Vector& p) { return drift(spec, t, p); }, n);
    const Vector& m = s.first;
    const Matrix& second = s.second;
    Matrix ds = a.slope * second + second * a.slope.transpose();
    const Matrix cm = a.offset * m.transpose();
    ds += cm + cm.transpose();
    if (is_stochastic(spec.kind)) ds += detail::expected_diffusion_covariance(spec, t, m, second);
    return State{a.slope * m + a.offset, ds};
  };
  State s{x, x * x.transpose()};
  const std::int64_t steps = detail::substep_count(t1 - t0, std::min(max_step, spec.substep));
  if (steps > 0) {
    const double dt = (t1 - t0) / static_cast<double>(steps);
    auto axpy = [](const State& base, double c, const State& k) {
      return State{base.first + c * k.first, base.second + c * k.second};
    };
    for (std::int64_t k = 0; k < steps; ++k) {
      const double t = t0 + static_cast<double>(k) * dt;
      const State k1 = rhs(t, s);
      const State k2 = rhs(t + 0.5 * dt, axpy(s, 0.5 * dt, k1));
      const State k3 = rhs(t + 0.5 * dt, axpy(s, 0.5 * dt, k2));
      const State k4 = rhs(t + dt, axpy(s, dt, k3));
      s.first += dt / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first);
      s.second += dt / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);
    }
  }
  return {s.first, 0.5 * (s.second + s.second.transpose())};
}

}  // namespace sgdflow
