#pragma once

// Weak errors E g(χ_{T/h}) - E g(X_T) over an h-grid, log-log order fits and
// the residual left after subtracting the leading h ∫Φ term.

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgdflow/continuous.hpp"
#include "sgdflow/discrete.hpp"
#include "sgdflow/moments.hpp"
#include "sgdflow/observables.hpp"
#include "sgdflow/stats.hpp"

namespace sgdflow {

enum class DiscreteMethod { monte_carlo, exact_moments };

struct WeakErrorOptions {
  std::size_t samples = 100000;
  unsigned threads = 1;
  bool common_random_numbers = true;  // every grid point reuses streams 0..N-1
  DiscreteMethod discrete_method = DiscreteMethod::monte_carlo;
  std::size_t surrogate_samples = 0;  // sde paths when no closed form exists; 0 means `samples`
  QuadratureOptions quadrature;
};

// Surrogate Monte Carlo paths draw from a stream range disjoint from the
// discrete paths.
constexpr std::uint64_t kSurrogateStreamBase = std::uint64_t{1} << 40;

/// Mean of g at N independent endpoints (streams first_stream .. first_stream + N - 1).
inline Estimate estimate_discrete_expectation(const DiscreteConfig& cfg, Mode mode, const Observable& g,
                                              std::size_t samples, unsigned threads = 1,
                                              std::uint64_t first_stream = 0) {
  if (samples < 100) throw std::invalid_argument("discrete expectation needs at least 100 samples");
  cfg.validate();
  std::vector<double> values(samples);
  parallel_for(samples, threads, [&](std::size_t i) {
    values[i] = g(simulate_path(cfg, mode, first_stream + i).endpoint);
  });
  return summarize(values);
}

/// Exact E g(χ_N) from the affine moment recursion.
inline Estimate exact_discrete_expectation(const DiscreteConfig& cfg, Mode mode, const Observable& g) {
  const auto value = expectation(g, discrete_affine_moments(cfg, mode));
  if (!value) throw UnsupportedError("observable is not a polynomial of degree <= 2");
  return {*value, 0.0};
}

/// The surrogate that matches `cfg` in `mode`: family, schedules and h come
/// from the discrete config; kind, substep and Jacobian fallback from `base`.
inline SurrogateSpec matched_surrogate(const SurrogateSpec& base, const DiscreteConfig& cfg, Mode mode) {
  SurrogateSpec spec = base;
  spec.family = cfg.family;
  spec.rates = cfg.rates;
  spec.momenta = mode == Mode::sgd ? std::vector<Schedule>{} : cfg.momenta;
  spec.h = cfg.h;
  return spec;
}

/// Surrogate start matching the discrete initial data: x0 at t = 0, or the
/// augmented (x0, x0) at t = 0, or (x1, x0) at t = h when x1 is given.
inline std::pair<Vector, double> surrogate_start(const DiscreteConfig& cfg, Mode mode) {
  if (mode == Mode::sgd) return {cfg.x0, 0.0};
  const int d = cfg.dimension();
  Vector z(2 * d);
  z << (cfg.x1 ? *cfg.x1 : cfg.x0), cfg.x0;
  return {z, cfg.x1 ? cfg.h : 0.0};
}

/// E g(X_T) started from x at t0: deterministic for the ode, closed-form
/// moments for affine families, Monte Carlo otherwise.
inline Estimate surrogate_expectation(const SurrogateSpec& spec, const Observable& g, const Vector& x, double t0,
                                      double horizon, std::size_t mc_samples, std::uint64_t seed,
                                      unsigned threads = 1) {
  spec.validate();
  if (!is_stochastic(spec.kind)) return {g(detail::flow(spec, x, t0, horizon)), 0.0};
  if (moments_available(spec.family, g)) {
    const auto value = expectation(g, surrogate_affine_moments(spec, x, t0, horizon));
    return {*value, 0.0};
  }
  if (mc_samples < 100) throw std::invalid_argument("surrogate Monte Carlo needs at least 100 samples");
  std::vector<double> values(mc_samples);
  parallel_for(mc_samples, threads, [&](std::size_t i) {
    RandomStream rng(seed, kSurrogateStreamBase + i);
    values[i] = g(sde_sample(spec, x, t0, horizon, rng));
  });
  return summarize(values);
}

struct WeakErrorPoint {
  double h = 0.0;
  std::int64_t steps = 0;
  Estimate discrete;
  Estimate surrogate;
  double error = 0.0;
  double standard_error = 0.0;  // discrete and surrogate SEs combined in quadrature
  bool excluded = false;
};

inline WeakErrorPoint weak_error(const DiscreteConfig& cfg, Mode mode, const SurrogateSpec& base, const Observable& g,
                                 const WeakErrorOptions& opt = {}, std::uint64_t first_stream = 0) {
  cfg.validate();
  const SurrogateSpec spec = matched_surrogate(base, cfg, mode);
  WeakErrorPoint p;
  p.h = cfg.h;
  p.steps = cfg.steps();
  p.discrete = opt.discrete_method == DiscreteMethod::exact_moments
                   ? exact_discrete_expectation(cfg, mode, g)
                   : estimate_discrete_expectation(cfg, mode, g, opt.samples, opt.threads, first_stream);
  const auto [start, t0] = surrogate_start(cfg, mode);
  p.surrogate = surrogate_expectation(spec, g, start, t0, cfg.horizon,
                                      opt.surrogate_samples ? opt.surrogate_samples : opt.samples, cfg.seed,
                                      opt.threads);
  p.error = p.discrete.value - p.surrogate.value;
  p.standard_error = std::hypot(p.discrete.standard_error, p.surrogate.standard_error);
  return p;
}

inline void check_grid(std::span<const double> grid, double horizon) {
  if (grid.empty()) throw std::invalid_argument("h-grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    horizon_steps(horizon, grid[k]);
    if (k > 0 && !(grid[k] < grid[k - 1])) throw std::invalid_argument("h-grid must be strictly decreasing");
  }
}

/// One weak-error point per h (cfg.h is replaced by each grid value).
inline std::vector<WeakErrorPoint> weak_error_grid(const DiscreteConfig& cfg, Mode mode, const SurrogateSpec& base,
                                                   const Observable& g, std::span<const double> grid,
                                                   const WeakErrorOptions& opt = {}) {
  check_grid(grid, cfg.horizon);
  std::vector<WeakErrorPoint> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    DiscreteConfig local = cfg;
    local.h = grid[k];
    const std::uint64_t first = opt.common_random_numbers ? 0 : k * opt.samples;
    out.push_back(weak_error(local, mode, base, g, opt, first));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Order fits

struct FitOptions {
  std::size_t min_points = 4;
  double exclusion_factor = 3.0;  // exclude points with |error| <= factor * SE
  double confidence = 0.95;
};

struct ConvergenceFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<std::size_t> used;
  std::vector<std::size_t> excluded;
};

class InsufficientPointsError : public Error {
 public:
  using Error::Error;
};

/// Least squares of log|error| on log h. Confidence bounds come from the
/// residual variance with a Student-t quantile (infinite with 2 points).
inline ConvergenceFit fit_power_law(std::span<const double> h, std::span<const double> error,
                                    std::span<const double> se = {}, const FitOptions& opt = {}) {
  if (h.size() != error.size() || (!se.empty() && se.size() != h.size()))
    throw std::invalid_argument("fit inputs have mismatched lengths");
  ConvergenceFit fit;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double noise = se.empty() ? 0.0 : se[k];
    if (!(std::abs(error[k]) > opt.exclusion_factor * noise) || !std::isfinite(error[k]) || !(h[k] > 0.0))
      fit.excluded.push_back(k);
    else
      fit.used.push_back(k);
  }
  const std::size_t n = fit.used.size();
  if (n < std::max<std::size_t>(opt.min_points, 2)) {
    std::ostringstream msg;
    msg << "order fit needs at least " << std::max<std::size_t>(opt.min_points, 2) << " usable points, got " << n;
    throw InsufficientPointsError(msg.str());
  }
  double mx = 0.0, my = 0.0;
  for (auto k : fit.used) {
    mx += std::log(h[k]);
    my += std::log(std::abs(error[k]));
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (auto k : fit.used) {
    const double dx = std::log(h[k]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(std::abs(error[k])) - my);
  }
  if (!(sxx > 0.0)) throw InsufficientPointsError("order fit needs distinct h values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n < 3) {
    fit.ci_low = -std::numeric_limits<double>::infinity();
    fit.ci_high = std::numeric_limits<double>::infinity();
    return fit;
  }
  double rss = 0.0;
  for (auto k : fit.used) {
    const double r = std::log(std::abs(error[k])) - (fit.intercept + fit.slope * std::log(h[k]));
    rss += r * r;
  }
  const double slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  const boost::math::students_t dist(static_cast<double>(n - 2));
  const double q = boost::math::quantile(boost::math::complement(dist, (1.0 - opt.confidence) / 2.0));
  fit.ci_low = fit.slope - q * slope_se;
  fit.ci_high = fit.slope + q * slope_se;
  return fit;
}

/// Fits the points and flags the excluded ones in place.
inline ConvergenceFit convergence_fit(std::vector<WeakErrorPoint>& points, const FitOptions& opt = {}) {
  std::vector<double> h, err, se;
  for (const auto& p : points) {
    h.push_back(p.h);
    err.push_back(p.error);
    se.push_back(p.standard_error);
  }
  for (std::size_t k = 0; k < points.size(); ++k)
    points[k].excluded = !(std::abs(err[k]) > opt.exclusion_factor * se[k]) || !std::isfinite(err[k]);
  return fit_power_law(h, err, se, opt);
}

// ---------------------------------------------------------------------------
// Reports

struct WeakErrorReport {
  std::string command;
  std::string surrogate;
  std::string mode;
  std::string observable;
  double horizon = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<WeakErrorPoint> points;
  std::optional<ConvergenceFit> fit;
  std::string fit_note;
  // expansion check only
  std::optional<double> leading_integral;
  std::vector<double> residuals;
  std::optional<ConvergenceFit> residual_fit;
  std::string residual_fit_note;
};

/// Residual error(h) - h ∫Φ for each grid point (ode surrogate only).
inline WeakErrorReport expansion_residual(const DiscreteConfig& cfg, Mode mode, const SurrogateSpec& base,
                                          const Observable& g, std::span<const double> grid,
                                          const WeakErrorOptions& opt = {}, const FitOptions& fit_opt = {}) {
  if (base.kind != SurrogateKind::ode) throw UnsupportedError("expansion check needs the ode surrogate");
  if (mode != Mode::sgd) throw UnsupportedError("expansion check supports the sgd mode only");
  WeakErrorReport report;
  report.command = "expansion-check";
  report.surrogate = to_string(base.kind);
  report.mode = to_string(mode);
  report.observable = g.name;
  report.horizon = cfg.horizon;
  report.samples = opt.samples;
  report.seed = cfg.seed;
  report.points = weak_error_grid(cfg, mode, base, g, grid, opt);
  DiscreteConfig first = cfg;
  first.h = grid.front();
  const SurrogateSpec spec = matched_surrogate(base, first, mode);
  const double integral = leading_error_integral(spec, g, cfg.x0, cfg.horizon, opt.quadrature);
  report.leading_integral = integral;
  std::vector<double> h, se;
  for (const auto& p : report.points) {
    report.residuals.push_back(p.error - p.h * integral);
    h.push_back(p.h);
    se.push_back(p.standard_error);
  }
  try {
    report.fit = convergence_fit(report.points, fit_opt);
  } catch (const InsufficientPointsError& e) {
    report.fit_note = e.what();
  }
  try {
    report.residual_fit = fit_power_law(h, report.residuals, se, fit_opt);
  } catch (const InsufficientPointsError& e) {
    report.residual_fit_note = e.what();
  }
  return report;
}

inline WeakErrorReport weak_error_report(const DiscreteConfig& cfg, Mode mode, const SurrogateSpec& base,
                                         const Observable& g, std::span<const double> grid,
                                         const WeakErrorOptions& opt = {}, const FitOptions& fit_opt = {}) {
  WeakErrorReport report;
  report.command = "weak-error";
  report.surrogate = to_string(base.kind);
  report.mode = to_string(mode);
  report.observable = g.name;
  report.horizon = cfg.horizon;
  report.samples = opt.samples;
  report.seed = cfg.seed;
  report.points = weak_error_grid(cfg, mode, base, g, grid, opt);
  try {
    report.fit = convergence_fit(report.points, fit_opt);
  } catch (const InsufficientPointsError& e) {
    report.fit_note = e.what();
  }
  return report;
}

namespace detail {

inline nlohmann::json fit_json(const std::optional<ConvergenceFit>& fit) {
  if (!fit) return nullptr;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"slope", fit->slope},
          {"intercept", fit->intercept},
          {"ci", {finite_or_null(fit->ci_low), finite_or_null(fit->ci_high)}},
          {"used", fit->used},
          {"excluded", fit->excluded}};
}

}  // namespace detail

/// JSON with the top-level keys grid, errors, se, slope, ci, excluded plus
/// per-point detail.
inline nlohmann::json to_json(const WeakErrorReport& r) {
  nlohmann::json j;
  j["command"] = r.command;
  j["surrogate"] = r.surrogate;
  j["mode"] = r.mode;
  j["observable"] = r.observable;
  j["horizon"] = r.horizon;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  auto& grid = j["grid"] = nlohmann::json::array();
  auto& errors = j["errors"] = nlohmann::json::array();
  auto& se = j["se"] = nlohmann::json::array();
  auto& excluded = j["excluded"] = nlohmann::json::array();
  auto& points = j["points"] = nlohmann::json::array();
  for (const auto& p : r.points) {
    grid.push_back(p.h);
    errors.push_back(p.error);
    se.push_back(p.standard_error);
    if (p.excluded) excluded.push_back(p.h);
    points.push_back({{"h", p.h},
                      {"steps", p.steps},
                      {"discrete_mean", p.discrete.value},
                      {"discrete_se", p.discrete.standard_error},
                      {"surrogate_value", p.surrogate.value},
                      {"surrogate_se", p.surrogate.standard_error},
                      {"error", p.error},
                      {"se", p.standard_error},
                      {"excluded", p.excluded}});
  }
  const auto fit = detail::fit_json(r.fit);
  j["slope"] = r.fit ? fit["slope"] : nlohmann::json(nullptr);
  j["ci"] = r.fit ? fit["ci"] : nlohmann::json(nullptr);
  j["fit"] = fit;
  if (!r.fit_note.empty()) j["fit_note"] = r.fit_note;
  if (r.leading_integral) {
    j["leading_integral"] = *r.leading_integral;
    j["residuals"] = r.residuals;
    j["residual_fit"] = detail::fit_json(r.residual_fit);
    if (!r.residual_fit_note.empty()) j["residual_fit_note"] = r.residual_fit_note;
  }
  return j;
}

namespace detail {

inline std::string number(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const WeakErrorReport& r) {
  out << "h,steps,discrete_mean,discrete_se,surrogate_value,surrogate_se,error,se,excluded";
  if (r.leading_integral) out << ",residual";
  out << '\n';
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const auto& p = r.points[k];
    out << detail::number(p.h) << ',' << p.steps << ',' << detail::number(p.discrete.value) << ','
        << detail::number(p.discrete.standard_error) << ',' << detail::number(p.surrogate.value) << ','
        << detail::number(p.surrogate.standard_error) << ',' << detail::number(p.error) << ','
        << detail::number(p.standard_error) << ',' << (p.excluded ? 1 : 0);
    if (r.leading_integral) out << ',' << detail::number(r.residuals[k]);
    out << '\n';
  }
}

/// Plot data: natural-log h against natural-log |error|.
inline void write_loglog_csv(std::ostream& out, const WeakErrorReport& r) {
  out << "log_h,log_abs_error,excluded\n";
  for (const auto& p : r.points) {
    const double e = std::abs(p.error);
    out << detail::number(std::log(p.h)) << ',' << (e > 0.0 ? detail::number(std::log(e)) : std::string("-inf"))
        << ',' << (p.excluded ? 1 : 0) << '\n';
  }
}

}  // namespace sgdflow
