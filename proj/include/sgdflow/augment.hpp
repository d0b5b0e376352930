#pragma once

// Momentum SGD as a first-order recursion on ℝ^{2d}.
//
// The state z = (x, y) holds the current and previous iterate. With
// eta_i = h u_i(nh) and zeta_i = v_i(nh), one momentum step is
//
//   z_{n+1} = z_n + U_n J_γ(z_n),   U_n = diag(eta, -eta / zeta),
//   J_γ(z)  = ( H_γ(x) + (zeta/eta) (x - y),  (zeta/eta) (y - x) ).
//
// J_γ is the gradient of -f_γ(x) + Σ_i zeta_i (x_i - y_i)² / (2 eta_i), which
// is the coupling objective j written in the ascent convention H = -∇f.
// `objective` / `objective_gradient` evaluate j exactly as it is usually
// displayed (f + (1+ζ)x²/2η + ζy²/2η - ζxy/η); the step itself is driven by
// `member_drift`, which reproduces the heavy-ball recursion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sgdflow/problems.hpp"
#include "sgdflow/schedules.hpp"

namespace sgdflow {

struct StepCoefficients {
  Vector eta;   // h u_i(nh)
  Vector zeta;  // v_i(nh)
};

class AugmentedSystem {
 public:
  AugmentedSystem(FamilyPtr base, std::vector<Schedule> rates, std::vector<Schedule> momenta)
      : base_(std::move(base)), rates_(std::move(rates)), momenta_(std::move(momenta)) {
    if (!base_) throw std::invalid_argument("augmented system needs a base family");
    const auto d = static_cast<std::size_t>(base_->dimension());
    if (rates_.size() != d || momenta_.size() != d)
      throw std::invalid_argument("augmented system needs one rate and one momentum schedule per coordinate");
  }

  int base_dimension() const { return base_->dimension(); }
  int dimension() const { return 2 * base_->dimension(); }
  const GradientFamily& family() const { return *base_; }
  const FamilyPtr& family_ptr() const { return base_; }
  std::span<const Schedule> rates() const { return rates_; }
  std::span<const Schedule> momenta() const { return momenta_; }

  StepCoefficients coefficients(double h, std::int64_t n) const {
    check_step_scale(h);
    const double t = static_cast<double>(n) * h;
    const int d = base_dimension();
    StepCoefficients c{Vector(d), Vector(d)};
    for (int i = 0; i < d; ++i) {
      c.eta[i] = h * rates_[i].eval(t);
      c.zeta[i] = momenta_[i].eval(t);
    }
    return c;
  }

  bool degenerate_at(double h, std::int64_t n) const { return (coefficients(h, n).zeta.array() == 0.0).any(); }

  /// j^(n)(z) = f_γ(x) + Σ_i [(1+ζ_i) x_i²/(2η_i) + ζ_i y_i²/(2η_i) - ζ_i x_i y_i/η_i]
  double objective(double h, std::int64_t n, const Vector& z, std::size_t member) const {
    const auto c = checked(h, n, z);
    const int d = base_dimension();
    const Vector x = z.head(d), y = z.tail(d);
    double out = base_->potential(member, x);
    for (int i = 0; i < d; ++i) {
      out += (1.0 + c.zeta[i]) * x[i] * x[i] / (2.0 * c.eta[i]) + c.zeta[i] * y[i] * y[i] / (2.0 * c.eta[i]) -
             c.zeta[i] * x[i] * y[i] / c.eta[i];
    }
    return out;
  }

  /// Exact gradient of `objective`.
  Vector objective_gradient(double h, std::int64_t n, const Vector& z, std::size_t member) const {
    const auto c = checked(h, n, z);
    const int d = base_dimension();
    const Vector x = z.head(d), y = z.tail(d);
    Vector out(2 * d);
    const Vector grad_f = -base_->drift(member, x);
    for (int i = 0; i < d; ++i) {
      out[i] = grad_f[i] + ((1.0 + c.zeta[i]) * x[i] - c.zeta[i] * y[i]) / c.eta[i];
      out[d + i] = c.zeta[i] * (y[i] - x[i]) / c.eta[i];
    }
    return out;
  }

  /// J_γ(z): the member drift that, scaled by U_n, advances the momentum recursion.
  Vector member_drift(double h, std::int64_t n, const Vector& z, std::size_t member) const {
    return assemble(coefficients(h, n), z, base_->drift(member, z.head(base_dimension())));
  }

  /// J̄(z) = Σ p_γ J_γ(z)
  Vector mean_drift(double h, std::int64_t n, const Vector& z) const {
    return assemble(coefficients(h, n), z, sgdflow::mean_drift(*base_, z.head(base_dimension())));
  }

  /// E(z) = E(J_γ - J̄)(J_γ - J̄)^T: Σ(x) in the top-left block, zero elsewhere.
  Matrix covariance(const Vector& z) const {
    const int d = base_dimension();
    Matrix out = Matrix::Zero(2 * d, 2 * d);
    out.topLeftCorner(d, d) = sgdflow::covariance(*base_, z.head(d));
    return out;
  }

  /// U_n = diag(h u_i, -h u_i / v_i) at t = n h.
  DiagonalRateMatrix rate_matrix(double h, std::int64_t n) const {
    const auto c = coefficients(h, n);
    const int d = base_dimension();
    DiagonalRateMatrix out{h, std::vector<double>(2 * d)};
    for (int i = 0; i < d; ++i) {
      if (c.zeta[i] == 0.0) throw DegenerateMomentumError("momentum value is zero; U_t lower block undefined");
      out.entries[i] = c.eta[i];
      out.entries[d + i] = -c.eta[i] / c.zeta[i];
    }
    return out;
  }

  /// z + U_n J_γ(z). Coordinates with zeta_i = 0 bypass the division and take
  /// the plain SGD update (x_i + eta_i H_i, x_i).
  Vector step(double h, std::int64_t n, const Vector& z, std::size_t member) const {
    const auto c = coefficients(h, n);
    const int d = base_dimension();
    const Vector hx = base_->drift(member, z.head(d));
    const Vector drift = assemble(c, z, hx);
    Vector out(2 * d);
    for (int i = 0; i < d; ++i) {
      if (c.zeta[i] == 0.0) {
        out[i] = z[i] + c.eta[i] * hx[i];
        out[d + i] = z[i];
      } else {
        out[i] = z[i] + c.eta[i] * drift[i];
        out[d + i] = z[d + i] + (-c.eta[i] / c.zeta[i]) * drift[d + i];
      }
    }
    return out;
  }

 private:
  StepCoefficients checked(double h, std::int64_t n, const Vector& z) const {
    if (z.size() != dimension()) throw std::invalid_argument("augmented state has wrong dimension");
    auto c = coefficients(h, n);
    if ((c.zeta.array() == 0.0).any())
      throw DegenerateMomentumError("augmented objective undefined for zero momentum");
    return c;
  }

  Vector assemble(const StepCoefficients& c, const Vector& z, const Vector& hx) const {
    const int d = base_dimension();
    Vector out(2 * d);
    for (int i = 0; i < d; ++i) {
      const double coupling = c.zeta[i] / c.eta[i] * (z[i] - z[d + i]);
      out[i] = hx[i] + coupling;
      out[d + i] = -coupling;
    }
    return out;
  }

  FamilyPtr base_;
  std::vector<Schedule> rates_;
  std::vector<Schedule> momenta_;
};

/// Max componentwise gap between one augmented step and one direct heavy-ball
/// step (x + eta H(x) + zeta (x - y), x).
inline double step_equivalence_check(const AugmentedSystem& sys, double h, std::int64_t n, const Vector& z,
                                     std::size_t member) {
  const int d = sys.base_dimension();
  const auto c = sys.coefficients(h, n);
  const Vector x = z.head(d), y = z.tail(d);
  Vector direct(2 * d);
  direct.head(d) = x + c.eta.cwiseProduct(sys.family().drift(member, x)) + c.zeta.cwiseProduct(x - y);
  direct.tail(d) = x;
  return (sys.step(h, n, z, member) - direct).cwiseAbs().maxCoeff();
}

}  // namespace sgdflow
