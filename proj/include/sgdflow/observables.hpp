#pragma once

// Terminal observables g. Each reads the leading coordinates of a state, so
// an observable defined on ℝ^d also applies to augmented states in ℝ^{2d}.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "sgdflow/problems.hpp"

namespace sgdflow {

enum class ObservableForm { constant, coordinate, quadratic, bump };

struct Observable {
  std::string name;
  ObservableForm form = ObservableForm::constant;
  double constant = 0.0;  // constant form
  int index = 0;          // coordinate form
  Matrix weights;         // quadratic form: g(x) = x_k^T W x_k on the leading k coordinates
  Vector center;          // bump form
  double width = 1.0;     // bump form

  double operator()(const Vector& x) const {
    switch (form) {
      case ObservableForm::constant: return constant;
      case ObservableForm::coordinate: return x[index];
      case ObservableForm::quadratic: {
        const auto lead = x.head(weights.rows());
        return lead.dot(weights * lead);
      }
      case ObservableForm::bump: {
        const double r2 = (x.head(center.size()) - center).squaredNorm();
        return std::exp(-r2 / (2.0 * width * width));
      }
    }
    return 0.0;
  }

  /// Number of leading coordinates the observable reads.
  int arity() const {
    switch (form) {
      case ObservableForm::constant: return 0;
      case ObservableForm::coordinate: return index + 1;
      case ObservableForm::quadratic: return static_cast<int>(weights.rows());
      case ObservableForm::bump: return static_cast<int>(center.size());
    }
    return 0;
  }
};

inline Observable constant_observable(double value) {
  Observable g;
  g.name = "constant";
  g.form = ObservableForm::constant;
  g.constant = value;
  return g;
}

inline Observable coordinate_observable(int index) {
  if (index < 0) throw std::invalid_argument("coordinate index must be nonnegative");
  Observable g;
  g.name = "coordinate";
  g.form = ObservableForm::coordinate;
  g.index = index;
  return g;
}

inline Observable quadratic_observable(Matrix weights) {
  if (weights.rows() != weights.cols() || weights.rows() == 0)
    throw std::invalid_argument("quadratic observable needs a nonempty square weight matrix");
  Observable g;
  g.name = "quadratic";
  g.form = ObservableForm::quadratic;
  g.weights = 0.5 * (weights + weights.transpose());
  return g;
}

/// g(x) = |x|² on the leading d coordinates.
inline Observable squared_norm_observable(int d) { return quadratic_observable(Matrix::Identity(d, d)); }

inline Observable bump_observable(Vector center, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("bump width must be positive");
  Observable g;
  g.name = "bump";
  g.form = ObservableForm::bump;
  g.center = std::move(center);
  g.width = width;
  return g;
}

}  // namespace sgdflow
