#pragma once

// Learning-rate and momentum schedules u(t), v(t) and the diagonal step matrix
// eta_n = diag(h * u^i(n h)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdflow/errors.hpp"

namespace sgdflow {

enum class ScheduleKind { constant, exponential_decay, polynomial_decay, tabulated };

inline const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::exponential_decay: return "exponential";
    case ScheduleKind::polynomial_decay: return "polynomial";
    case ScheduleKind::tabulated: return "tabulated";
  }
  return "unknown";
}

/// A scalar, nonincreasing function of time with values in (0, 1].
///
/// Closed-form kinds:
///   constant     u(t) = a
///   exponential  u(t) = a exp(-rate t)
///   polynomial   u(t) = a (1 + t)^(-exponent)
/// Tabulated schedules interpolate knots with a clamped cubic spline (zero end
/// slopes) and hold the last value past the final knot.
///
/// Immutable after construction.
class Schedule {
 public:
  static Schedule constant(double a) { return Schedule(ScheduleKind::constant, a, 0.0); }
  static Schedule exponential(double a, double rate) {
    return Schedule(ScheduleKind::exponential_decay, a, rate);
  }
  static Schedule polynomial(double a, double exponent) {
    return Schedule(ScheduleKind::polynomial_decay, a, exponent);
  }
  static Schedule tabulated(std::vector<double> times, std::vector<double> values) {
    Schedule s(ScheduleKind::tabulated, values.empty() ? 0.0 : values.front(), 0.0);
    s.times_ = std::move(times);
    s.values_ = std::move(values);
    s.knots_ok_ = s.knot_problems().empty();
    if (s.knots_ok_) s.build_spline();
    return s;
  }

  ScheduleKind kind() const { return kind_; }
  double initial_value() const { return a_; }
  /// Decay rate for exponential kinds, exponent for polynomial kinds.
  double decay() const { return decay_; }
  const std::vector<double>& knot_times() const { return times_; }
  const std::vector<double>& knot_values() const { return values_; }

  /// Tabulated schedules become constant after their final knot.
  bool eventually_constant() const {
    return kind_ == ScheduleKind::tabulated || kind_ == ScheduleKind::constant || decay_ == 0.0;
  }

  double eval(double t) const {
    check_time(t);
    switch (kind_) {
      case ScheduleKind::constant: return a_;
      case ScheduleKind::exponential_decay: return a_ * std::exp(-decay_ * t);
      case ScheduleKind::polynomial_decay: return a_ * std::pow(1.0 + t, -decay_);
      case ScheduleKind::tabulated: return spline(t, false);
    }
    return a_;
  }

  double derivative(double t) const {
    check_time(t);
    switch (kind_) {
      case ScheduleKind::constant: return 0.0;
      case ScheduleKind::exponential_decay: return -decay_ * a_ * std::exp(-decay_ * t);
      case ScheduleKind::polynomial_decay: return -decay_ * a_ * std::pow(1.0 + t, -decay_ - 1.0);
      case ScheduleKind::tabulated: return spline(t, true);
    }
    return 0.0;
  }

  /// Structural problems with the knot table (empty for closed-form kinds).
  std::vector<std::string> knot_problems() const {
    std::vector<std::string> out;
    if (kind_ != ScheduleKind::tabulated) return out;
    if (times_.size() != values_.size()) {
      out.push_back("tabulated schedule: knot times and values differ in length");
      return out;
    }
    if (times_.size() < 2) {
      out.push_back("tabulated schedule: needs at least two knots");
      return out;
    }
    if (times_.front() != 0.0) out.push_back("tabulated schedule: first knot must be at t = 0");
    for (std::size_t i = 0; i < times_.size(); ++i) {
      if (!std::isfinite(times_[i]) || !std::isfinite(values_[i])) {
        out.push_back("tabulated schedule: non-finite knot");
        break;
      }
      if (i > 0 && !(times_[i] > times_[i - 1])) {
        out.push_back("tabulated schedule: knot times not strictly increasing");
        break;
      }
    }
    return out;
  }

 private:
  Schedule(ScheduleKind kind, double a, double decay) : kind_(kind), a_(a), decay_(decay) {}

  static void check_time(double t) {
    if (!(t >= 0.0)) {
      std::ostringstream msg;
      msg << "schedule evaluated at negative or non-finite time t = " << t;
      throw DomainError(msg.str());
    }
  }

  // Clamped cubic spline with zero first derivative at both ends; solves for
  // the knot second derivatives with the Thomas algorithm.
  void build_spline() {
    const std::size_t n = times_.size();
    second_.assign(n, 0.0);
    std::vector<double> diag(n), upper(n), rhs(n);
    auto width = [&](std::size_t i) { return times_[i + 1] - times_[i]; };
    auto slope = [&](std::size_t i) { return (values_[i + 1] - values_[i]) / width(i); };
    diag[0] = 2.0 * width(0);
    upper[0] = width(0);
    rhs[0] = 6.0 * slope(0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      diag[i] = 2.0 * (width(i - 1) + width(i));
      upper[i] = width(i);
      rhs[i] = 6.0 * (slope(i) - slope(i - 1));
    }
    diag[n - 1] = 2.0 * width(n - 2);
    rhs[n - 1] = -6.0 * slope(n - 2);
    // lower[i] == width(i - 1) == upper[i - 1]
    for (std::size_t i = 1; i < n; ++i) {
      const double factor = upper[i - 1] / diag[i - 1];
      diag[i] -= factor * upper[i - 1];
      rhs[i] -= factor * rhs[i - 1];
    }
    second_[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) second_[i] = (rhs[i] - upper[i] * second_[i + 1]) / diag[i];
  }

  double spline(double t, bool derivative) const {
    if (!knots_ok_) throw std::logic_error("tabulated schedule has invalid knots; validate it first");
    if (t >= times_.back()) return derivative ? 0.0 : values_.back();
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - times_.begin()) - 1;
    const double w = times_[i + 1] - times_[i];
    const double left = (times_[i + 1] - t) / w;
    const double right = (t - times_[i]) / w;
    if (derivative) {
      return (values_[i + 1] - values_[i]) / w +
             w / 6.0 * (-(3.0 * left * left - 1.0) * second_[i] + (3.0 * right * right - 1.0) * second_[i + 1]);
    }
    return left * values_[i] + right * values_[i + 1] +
           w * w / 6.0 * ((left * left * left - left) * second_[i] + (right * right * right - right) * second_[i + 1]);
  }

  ScheduleKind kind_;
  double a_;
  double decay_;
  std::vector<double> times_;
  std::vector<double> values_;
  std::vector<double> second_;
  bool knots_ok_ = true;
};

/// Checks range, monotonicity and knot structure. Samples 1001 uniform points
/// on [0, t_max]. Never throws; an empty result means the schedule is valid.
inline std::vector<std::string> validate(const Schedule& s, double t_max = 100.0) {
  std::vector<std::string> out;
  auto fmt = [](const std::string& text, double value) {
    std::ostringstream msg;
    msg << text << value;
    return msg.str();
  };
  switch (s.kind()) {
    case ScheduleKind::constant:
    case ScheduleKind::exponential_decay:
    case ScheduleKind::polynomial_decay:
      if (!std::isfinite(s.initial_value()) || s.initial_value() <= 0.0)
        out.push_back(fmt("value must be positive, got a = ", s.initial_value()));
      else if (s.initial_value() > 1.0)
        out.push_back(fmt("value > 1: a = ", s.initial_value()));
      if (!std::isfinite(s.decay()) || s.decay() < 0.0)
        out.push_back(fmt("decay parameter must be >= 0 (increasing schedules are not allowed), got ", s.decay()));
      return out;
    case ScheduleKind::tabulated: {
      out = s.knot_problems();
      if (!out.empty()) return out;
      const auto& values = s.knot_values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0 && values[i] <= 1.0)) {
          out.push_back(fmt("tabulated schedule: knot value outside (0, 1]: ", values[i]));
          break;
        }
      }
      for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[i - 1]) {
          out.push_back("tabulated schedule: knot values not nonincreasing");
          break;
        }
      }
      if (!out.empty()) return out;
      break;
    }
  }

  constexpr int kGrid = 1001;
  double previous = s.eval(0.0);
  for (int k = 0; k < kGrid; ++k) {
    const double t = t_max * static_cast<double>(k) / (kGrid - 1);
    const double value = s.eval(t);
    if (!(value > 0.0 && value <= 1.0)) {
      out.push_back(fmt("interpolant leaves (0, 1] at t = ", t));
      break;
    }
    if (value > previous + 1e-15 || s.derivative(t) > 1e-15) {
      out.push_back(fmt("interpolant not nonincreasing near t = ", t));
      break;
    }
    previous = value;
  }
  return out;
}

/// eta_n = diag(h * u^i(n h)); off-diagonal entries are zero and not stored.
struct DiagonalRateMatrix {
  double h = 0.0;
  std::vector<double> entries;

  std::size_t dimension() const { return entries.size(); }
  double operator[](std::size_t i) const { return entries[i]; }
};

inline void check_step_scale(double h) {
  if (!(h > 0.0 && h < 1.0)) {
    std::ostringstream msg;
    msg << "step scale h must lie in (0, 1), got " << h;
    throw InvalidStepError(msg.str());
  }
}

inline std::vector<double> evaluate_all(std::span<const Schedule> schedules, double t) {
  std::vector<double> out;
  out.reserve(schedules.size());
  for (const auto& s : schedules) out.push_back(s.eval(t));
  return out;
}

inline DiagonalRateMatrix rate_matrix(std::span<const Schedule> schedules, double h, std::int64_t n) {
  check_step_scale(h);
  if (schedules.empty()) throw std::invalid_argument("rate_matrix needs at least one schedule");
  if (n < 0) throw DomainError("step index must be nonnegative");
  DiagonalRateMatrix out{h, {}};
  const double t = static_cast<double>(n) * h;
  out.entries.reserve(schedules.size());
  for (const auto& s : schedules) out.entries.push_back(h * s.eval(t));
  return out;
}

}  // namespace sgdflow
