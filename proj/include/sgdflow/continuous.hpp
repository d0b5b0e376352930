#pragma once

// Continuous surrogates of the discrete recursions.
//
//   ode   dX = b(t, X) dt
//   sde1  dX = b(t, X) dt + U_t sqrt(h Σ(X)) dW
//   sde2  dX = [b - ½h (∇b b + ∂_t b)](t, X) dt + U_t sqrt(h Σ(X)) dW
//
// b = U_t H̄ for plain SGD (U_t = diag(u_t)). With momentum the state is
// (x, y) ∈ ℝ^{2d} and b = (u H̄(x) + (v/h)(x - y), (x - y)/h), which is U_t J̄
// with U_t = diag(u, -u/v) and the coupling ζ/η = v/(h u) written out so that
// no division by v is needed. For scalar u and no momentum the sde2 drift is
// u J̄ - ½h (u² ∇J̄ J̄ + u̇ J̄) (the u-squared correction).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdflow/errors.hpp"
#include "sgdflow/observables.hpp"
#include "sgdflow/problems.hpp"
#include "sgdflow/rng.hpp"
#include "sgdflow/schedules.hpp"
#include "sgdflow/stats.hpp"

namespace sgdflow {

enum class SurrogateKind { ode, sde1, sde2 };

inline const char* to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::ode: return "ode";
    case SurrogateKind::sde1: return "sde1";
    case SurrogateKind::sde2: return "sde2";
  }
  return "unknown";
}

inline bool is_stochastic(SurrogateKind kind) { return kind != SurrogateKind::ode; }

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::ode;
  FamilyPtr family;
  std::vector<Schedule> rates;
  std::vector<Schedule> momenta;  // nonempty: augmented (x, y) state
  double h = 0.0;                 // diffusion scale and momentum coupling; may be 0 for a plain ode
  double substep = 1e-3;
  bool fd_jacobian_fallback = false;
  double fd_jacobian_step = 1e-5;

  int base_dimension() const { return family ? family->dimension() : 0; }
  bool augmented() const { return !momenta.empty(); }
  int dimension() const { return augmented() ? 2 * base_dimension() : base_dimension(); }

  void validate() const {
    if (!family) throw std::invalid_argument("surrogate has no family");
    const auto d = static_cast<std::size_t>(family->dimension());
    if (rates.size() != d) throw std::invalid_argument("need one learning-rate schedule per coordinate");
    if (augmented() && momenta.size() != d) throw std::invalid_argument("need one momentum schedule per coordinate");
    if (!(substep > 0.0)) throw InvalidStepError("integrator substep must be positive");
    if (is_stochastic(kind) || augmented()) check_step_scale(h);
    if (is_stochastic(kind) && substep > h / 4.0 * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "integrator substep must satisfy delta <= h/4 for sde surrogates (delta = " << substep << ", h = " << h
          << ")";
      throw InvalidStepError(msg.str());
    }
    if (kind == SurrogateKind::ode && h > 0.0 && substep > h * (1.0 + 1e-12))
      throw InvalidStepError("integrator substep must satisfy delta <= h for the ode surrogate");
    if (kind == SurrogateKind::sde2 && !family->has_jacobians() && !fd_jacobian_fallback)
      throw UnsupportedError("second-order drift requires Jacobian or FD fallback enabled");
  }
};

namespace detail {

inline Vector schedule_values(const std::vector<Schedule>& s, double t) {
  Vector out(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) out[static_cast<Eigen::Index>(i)] = s[i].eval(t);
  return out;
}

inline Vector schedule_rates(const std::vector<Schedule>& s, double t) {
  Vector out(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) out[static_cast<Eigen::Index>(i)] = s[i].derivative(t);
  return out;
}

inline Matrix mean_drift_jacobian(const SurrogateSpec& spec, const Vector& x) {
  const auto& f = *spec.family;
  if (f.has_jacobians()) return jacobian_mean_drift(f, x);
  if (!spec.fd_jacobian_fallback) throw UnsupportedError("second-order drift requires Jacobian or FD fallback enabled");
  return finite_difference_jacobian([&](const Vector& p) { return mean_drift(f, p); }, x, spec.fd_jacobian_step);
}

}  // namespace detail

/// b(t, x): U_t H̄(x), or the augmented U_t J̄(z).
inline Vector first_order_drift(const SurrogateSpec& spec, double t, const Vector& x) {
  const int d = spec.base_dimension();
  const Vector u = detail::schedule_values(spec.rates, t);
  if (!spec.augmented()) return u.cwiseProduct(mean_drift(*spec.family, x));
  const Vector v = detail::schedule_values(spec.momenta, t);
  const Vector gap = x.head(d) - x.tail(d);
  Vector out(2 * d);
  out.head(d) = u.cwiseProduct(mean_drift(*spec.family, x.head(d))) + v.cwiseProduct(gap) / spec.h;
  out.tail(d) = gap / spec.h;
  return out;
}

/// ∇b(t, x).
inline Matrix drift_jacobian(const SurrogateSpec& spec, double t, const Vector& x) {
  const int d = spec.base_dimension();
  const Vector u = detail::schedule_values(spec.rates, t);
  if (!spec.augmented()) return u.asDiagonal() * detail::mean_drift_jacobian(spec, x);
  const Vector v = detail::schedule_values(spec.momenta, t);
  Matrix out = Matrix::Zero(2 * d, 2 * d);
  const Matrix coupling = (v / spec.h).asDiagonal();
  out.topLeftCorner(d, d) = u.asDiagonal() * detail::mean_drift_jacobian(spec, x.head(d)) + coupling;
  out.topRightCorner(d, d) = -coupling;
  out.bottomLeftCorner(d, d) = Matrix::Identity(d, d) / spec.h;
  out.bottomRightCorner(d, d) = -Matrix::Identity(d, d) / spec.h;
  return out;
}

/// ∂_t b(t, x).
inline Vector drift_time_derivative(const SurrogateSpec& spec, double t, const Vector& x) {
  const int d = spec.base_dimension();
  const Vector du = detail::schedule_rates(spec.rates, t);
  if (!spec.augmented()) return du.cwiseProduct(mean_drift(*spec.family, x));
  const Vector dv = detail::schedule_rates(spec.momenta, t);
  Vector out = Vector::Zero(2 * d);
  out.head(d) = du.cwiseProduct(mean_drift(*spec.family, x.head(d))) + dv.cwiseProduct(x.head(d) - x.tail(d)) / spec.h;
  return out;
}

/// b - ½h (∇b b + ∂_t b).
inline Vector second_order_drift(const SurrogateSpec& spec, double t, const Vector& x) {
  const Vector b = first_order_drift(spec, t, x);
  return b - 0.5 * spec.h * (drift_jacobian(spec, t, x) * b + drift_time_derivative(spec, t, x));
}

/// Drift used by the surrogate of kind spec.kind.
inline Vector drift(const SurrogateSpec& spec, double t, const Vector& x) {
  return spec.kind == SurrogateKind::sde2 ? second_order_drift(spec, t, x) : first_order_drift(spec, t, x);
}

/// σ(t, x) = U_t sqrt(h Σ(x)), shape dimension × d. In augmented mode only
/// the top block is nonzero because Σ sits in the top-left block of E.
inline Matrix diffusion(const SurrogateSpec& spec, double t, const Vector& x) {
  const int d = spec.base_dimension();
  const Vector u = detail::schedule_values(spec.rates, t);
  const Vector base = x.head(d);
  Matrix root;
  if (d == 1) {
    const double s = spec.h * covariance(*spec.family, base)(0, 0);
    if (s < -kPsdTolerance) throw NotPsdError("covariance has a negative eigenvalue");
    root = Matrix::Constant(1, 1, std::sqrt(std::max(0.0, s)));
  } else {
    root = sqrt_psd(spec.h * covariance(*spec.family, base));
  }
  Matrix out = Matrix::Zero(spec.dimension(), d);
  out.topRows(d) = u.asDiagonal() * root;
  return out;
}

/// h U_t Σ(x) U_t in the top-left block: the diffusion second moment σσ^T.
inline Matrix diffusion_covariance(const SurrogateSpec& spec, double t, const Vector& x) {
  const int d = spec.base_dimension();
  const Vector u = detail::schedule_values(spec.rates, t);
  Matrix out = Matrix::Zero(spec.dimension(), spec.dimension());
  out.topLeftCorner(d, d) = spec.h * u.asDiagonal() * covariance(*spec.family, x.head(d)) * u.asDiagonal();
  return out;
}

namespace detail {

inline std::int64_t substep_count(double span, double delta) {
  if (span == 0.0) return 0;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(std::abs(span) / delta - 1e-9)));
}

template <class Field>
Vector rk4_step(const Field& b, double t, const Vector& x, double dt) {
  const Vector k1 = b(t, x);
  const Vector k2 = b(t + 0.5 * dt, x + 0.5 * dt * k1);
  const Vector k3 = b(t + 0.5 * dt, x + 0.5 * dt * k2);
  const Vector k4 = b(t + dt, x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void guard(const Vector& x, std::int64_t k) {
  if (!x.allFinite() || x.norm() > 1e12) {
    std::ostringstream msg;
    msg << "surrogate path diverged at substep " << k;
    throw DivergenceError(msg.str(), k);
  }
}

// Deterministic flow of the spec's drift in either time direction. Backward
// flows only serve finite-difference stencils that step past T.
inline Vector flow(const SurrogateSpec& spec, const Vector& x, double t0, double t1, std::int64_t n) {
  if (n == 0 || t0 == t1) return x;
  const double dt = (t1 - t0) / static_cast<double>(n);
  auto b = [&](double t, const Vector& p) { return drift(spec, std::max(t, 0.0), p); };
  Vector state = x;
  for (std::int64_t k = 0; k < n; ++k) {
    state = rk4_step(b, t0 + static_cast<double>(k) * dt, state, dt);
    guard(state, k + 1);
  }
  return state;
}

inline Vector flow(const SurrogateSpec& spec, const Vector& x, double t0, double t1) {
  return flow(spec, x, t0, t1, substep_count(t1 - t0, spec.substep));
}

}  // namespace detail

/// Fixed-step classical RK4 from t0 to t1 with ceil((t1 - t0)/δ) equal steps.
inline Vector ode_flow(const SurrogateSpec& spec, const Vector& x, double t0, double t1) {
  if (spec.kind != SurrogateKind::ode) throw std::invalid_argument("ode_flow needs an ode surrogate");
  if (t0 > t1) throw std::invalid_argument("ode_flow needs t0 <= t1");
  if (t0 < 0.0) throw DomainError("ode_flow needs t0 >= 0");
  return detail::flow(spec, x, t0, t1);
}

/// One path endpoint. Each substep advances the drift with an RK4 stage and
/// adds σ(t_k, X_k) ΔW_k, so a zero diffusion reproduces ode_flow exactly.
inline Vector sde_sample(const SurrogateSpec& spec, const Vector& x, double t0, double t1, RandomStream& rng) {
  if (!is_stochastic(spec.kind)) throw std::invalid_argument("sde_sample needs an sde surrogate");
  if (t0 > t1) throw std::invalid_argument("sde_sample needs t0 <= t1");
  if (t0 < 0.0) throw DomainError("sde_sample needs t0 >= 0");
  const std::int64_t n = detail::substep_count(t1 - t0, spec.substep);
  if (n == 0) return x;
  const double dt = (t1 - t0) / static_cast<double>(n);
  const double root_dt = std::sqrt(dt);
  const int d = spec.base_dimension();
  auto b = [&](double t, const Vector& p) { return drift(spec, t, p); };
  Vector state = x;
  Vector noise(d);
  for (std::int64_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    for (int i = 0; i < d; ++i) noise[i] = rng.normal();
    const Matrix sigma = diffusion(spec, t, state);
    state = detail::rk4_step(b, t, state, dt) + root_dt * (sigma * noise);
    detail::guard(state, k + 1);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Value function and expansion densities

struct ValueFunctionProbe {
  Observable g;
  double t = 0.0;
  double horizon = 1.0;
  Vector x;
  double eps_x = 1e-4;
  double eps_t = 1e-4;
  std::size_t mc_samples = 10000;
  std::uint64_t seed = 0;
};

/// y_t(x) = g(X_T^{t,x}) for the ode, E g(X_T^{t,x}) with its standard error
/// for the sde kinds.
inline Estimate value_function(const ValueFunctionProbe& probe, const SurrogateSpec& spec) {
  if (probe.t > probe.horizon) throw DomainError("value_function needs t <= T");
  if (probe.t == probe.horizon) return {probe.g(probe.x), 0.0};
  if (!is_stochastic(spec.kind)) return {probe.g(ode_flow(spec, probe.x, probe.t, probe.horizon)), 0.0};
  if (probe.mc_samples < 2) throw std::invalid_argument("value_function needs at least 2 samples");
  std::vector<double> values(probe.mc_samples);
  for (std::size_t i = 0; i < probe.mc_samples; ++i) {
    RandomStream rng(probe.seed, i);
    values[i] = probe.g(sde_sample(spec, probe.x, probe.t, probe.horizon, rng));
  }
  return summarize(values);
}

namespace detail {

inline void require_ode(const SurrogateSpec& spec, const char* what) {
  if (spec.kind != SurrogateKind::ode) throw UnsupportedError(std::string(what) + " is only available for the ode surrogate");
}

// y(t, x) for any t (including t > T) by deterministic flow. Every stencil
// point uses the step count of the probe time, so the integrator error is a
// smooth function of (t, x) and does not leak into the differences.
struct ValueSampler {
  const SurrogateSpec& spec;
  const Observable& g;
  double horizon;
  std::int64_t steps;

  ValueSampler(const SurrogateSpec& s, const Observable& obs, double T, double t_probe)
      : spec(s), g(obs), horizon(T), steps(std::max<std::int64_t>(1, substep_count(T - t_probe, s.substep))) {}

  double operator()(double t, const Vector& x) const { return g(flow(spec, x, t, horizon, steps)); }
};

// Derivatives of y at (t, x). Time stencils are central unless t - ε_t
// would fall below 0, in which case second-order forward stencils are used.
struct ValueDerivatives {
  double dt = 0.0;
  Vector grad;
  Matrix hessian;
  Vector dt_grad;
  double dtt = 0.0;
};

inline Vector fd_gradient(const ValueSampler& y, double t, const Vector& x, double eps) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    out[i] = (y(t, plus) - y(t, minus)) / (2.0 * eps);
  }
  return out;
}

inline Matrix fd_hessian(const ValueSampler& y, double t, const Vector& x, double eps) {
  const Eigen::Index n = x.size();
  Matrix out(n, n);
  const double center = y(t, x);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    out(i, i) = (y(t, plus) - 2.0 * center + y(t, minus)) / (eps * eps);
    for (Eigen::Index j = 0; j < i; ++j) {
      Vector pp = x, pm = x, mp = x, mm = x;
      pp[i] += eps, pp[j] += eps;
      pm[i] += eps, pm[j] -= eps;
      mp[i] -= eps, mp[j] += eps;
      mm[i] -= eps, mm[j] -= eps;
      out(i, j) = out(j, i) = (y(t, pp) - y(t, pm) - y(t, mp) + y(t, mm)) / (4.0 * eps * eps);
    }
  }
  return out;
}

inline bool forward_time_stencil(double t, double eps_t) { return t - eps_t < 0.0; }

inline double fd_time(const ValueSampler& y, double t, const Vector& x, double e) {
  if (forward_time_stencil(t, e)) return (-3.0 * y(t, x) + 4.0 * y(t + e, x) - y(t + 2.0 * e, x)) / (2.0 * e);
  return (y(t + e, x) - y(t - e, x)) / (2.0 * e);
}

inline ValueDerivatives value_derivatives(const ValueSampler& y, double t, const Vector& x, double eps_x, double eps_t,
                                          bool second_order) {
  if (!(eps_x > 0.0) || !(eps_t > 0.0)) throw std::invalid_argument("finite-difference steps must be positive");
  ValueDerivatives out;
  out.dt = fd_time(y, t, x, eps_t);
  out.grad = fd_gradient(y, t, x, eps_x);
  if (!second_order) return out;
  out.hessian = fd_hessian(y, t, x, eps_x);
  const double e = eps_t;
  if (forward_time_stencil(t, e)) {
    const Vector g0 = out.grad, g1 = fd_gradient(y, t + e, x, eps_x), g2 = fd_gradient(y, t + 2.0 * e, x, eps_x);
    out.dt_grad = (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * e);
    const double y0 = y(t, x), y1 = y(t + e, x), y2 = y(t + 2.0 * e, x), y3 = y(t + 3.0 * e, x);
    out.dtt = (2.0 * y0 - 5.0 * y1 + 4.0 * y2 - y3) / (e * e);
  } else {
    out.dt_grad = (fd_gradient(y, t + e, x, eps_x) - fd_gradient(y, t - e, x, eps_x)) / (2.0 * e);
    out.dtt = (y(t + e, x) - 2.0 * y(t, x) + y(t - e, x)) / (e * e);
  }
  return out;
}

inline void check_probe(const ValueFunctionProbe& probe, const SurrogateSpec& spec) {
  if (probe.x.size() != spec.dimension()) throw std::invalid_argument("probe point has wrong dimension");
  if (probe.g.arity() > spec.dimension()) throw std::invalid_argument("observable reads more coordinates than the state has");
  if (probe.t < 0.0) throw DomainError("probe time must be nonnegative");
}

}  // namespace detail

/// ∂_t y + ∇y^T b at (t, x) by finite differences.
inline double fk_residual(const ValueFunctionProbe& probe, const SurrogateSpec& spec) {
  detail::require_ode(spec, "fk_residual");
  detail::check_probe(probe, spec);
  const detail::ValueSampler y(spec, probe.g, probe.horizon, probe.t);
  const auto dy = detail::value_derivatives(y, probe.t, probe.x, probe.eps_x, probe.eps_t, false);
  return dy.dt + dy.grad.dot(first_order_drift(spec, probe.t, probe.x));
}

/// φ_t(x) = ½ tr[∇²y b b^T] + ∂_t∇y^T b + ½ ∂_t² y with b = U_t H̄.
inline double phi_density(const ValueFunctionProbe& probe, const SurrogateSpec& spec) {
  detail::require_ode(spec, "phi_density");
  detail::check_probe(probe, spec);
  const detail::ValueSampler y(spec, probe.g, probe.horizon, probe.t);
  const auto dy = detail::value_derivatives(y, probe.t, probe.x, probe.eps_x, probe.eps_t, true);
  const Vector b = first_order_drift(spec, probe.t, probe.x);
  return 0.5 * b.dot(dy.hessian * b) + dy.dt_grad.dot(b) + 0.5 * dy.dtt;
}

/// Φ_t(x) = φ_t(x) + ½ tr[∇²y U_t Σ U_t]. For scalar u this is the U_t U_t Σ
/// weighting; for per-coordinate rates U Σ U is the symmetric form that the
/// one-step Taylor expansion produces.
inline double capital_phi_density(const ValueFunctionProbe& probe, const SurrogateSpec& spec) {
  detail::require_ode(spec, "capital_phi_density");
  detail::check_probe(probe, spec);
  const detail::ValueSampler y(spec, probe.g, probe.horizon, probe.t);
  const auto dy = detail::value_derivatives(y, probe.t, probe.x, probe.eps_x, probe.eps_t, true);
  const Vector b = first_order_drift(spec, probe.t, probe.x);
  const double phi = 0.5 * b.dot(dy.hessian * b) + dy.dt_grad.dot(b) + 0.5 * dy.dtt;
  const int d = spec.base_dimension();
  const Vector u = detail::schedule_values(spec.rates, probe.t);
  const Matrix weighted = u.asDiagonal() * covariance(*spec.family, probe.x.head(d)) * u.asDiagonal();
  return phi + 0.5 * (dy.hessian.topLeftCorner(d, d).cwiseProduct(weighted)).sum();
}

struct QuadratureOptions {
  int nodes = 101;  // odd, >= 101
  double eps_x = 1e-4;
  double eps_t = 1e-4;
};

struct DensityProfile {
  std::vector<double> times;
  std::vector<double> values;
};

/// Φ_t(X_t) on an even grid of [t0, T] along the ode trajectory from x.
inline DensityProfile capital_phi_profile(const SurrogateSpec& spec, const Observable& g, const Vector& x, double t0,
                                          double horizon, const QuadratureOptions& opt = {}) {
  detail::require_ode(spec, "capital_phi_profile");
  if (opt.nodes < 101 || opt.nodes % 2 == 0) throw std::invalid_argument("quadrature needs an odd node count >= 101");
  if (!(horizon > t0)) throw std::invalid_argument("quadrature needs T > t0");
  DensityProfile out;
  const double step = (horizon - t0) / (opt.nodes - 1);
  Vector state = x;
  ValueFunctionProbe probe{g, t0, horizon, x, opt.eps_x, opt.eps_t};
  for (int k = 0; k < opt.nodes; ++k) {
    const double t = k + 1 == opt.nodes ? horizon : t0 + k * step;
    if (k > 0) state = ode_flow(spec, state, out.times.back(), t);
    probe.t = t;
    probe.x = state;
    out.times.push_back(t);
    out.values.push_back(capital_phi_density(probe, spec));
  }
  return out;
}

/// ∫_{t0}^T Φ_t(X_t) dt by composite Simpson; callers multiply by h.
inline double leading_error_integral(const SurrogateSpec& spec, const Observable& g, const Vector& x, double horizon,
                                     const QuadratureOptions& opt = {}, double t0 = 0.0) {
  if (g.form == ObservableForm::constant) return 0.0;
  const auto profile = capital_phi_profile(spec, g, x, t0, horizon, opt);
  const auto& v = profile.values;
  const double step = (horizon - t0) / (opt.nodes - 1);
  double odd = 0.0, even = 0.0;
  for (int k = 1; k + 1 < opt.nodes; ++k) (k % 2 ? odd : even) += v[k];
  return step / 3.0 * (v.front() + 4.0 * odd + 2.0 * even + v.back());
}

}  // namespace sgdflow
