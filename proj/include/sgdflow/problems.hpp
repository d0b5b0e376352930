#pragma once

// Gradient families {H_i} with a sampling law, their mean drift H̄ and
// covariance Σ, and a small zoo of built-in test problems.
//
// Sign convention: members are ascent-form drifts, H_i = -∇f_i, so a step is
// x + eta * H_i(x).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdflow/errors.hpp"
#include "sgdflow/rng.hpp"

namespace sgdflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// H(x) = slope * x + offset.
struct AffineMap {
  Matrix slope;
  Vector offset;
};

struct FamilyMember {
  std::function<Vector(const Vector&)> drift;
  std::function<Matrix(const Vector&)> jacobian;  // may be empty
  std::function<double(const Vector&)> potential;  // f_i with H_i = -∇f_i; may be empty
  std::optional<AffineMap> affine;
};

class GradientFamily {
 public:
  GradientFamily(int dimension, std::vector<FamilyMember> members, std::vector<double> probabilities,
                 double growth_constant, std::string name = "custom")
      : dimension_(dimension),
        members_(std::move(members)),
        probabilities_(std::move(probabilities)),
        growth_constant_(growth_constant),
        name_(std::move(name)) {
    if (dimension_ <= 0) throw std::invalid_argument("family dimension must be positive");
    if (members_.empty()) throw std::invalid_argument("family needs at least one member");
    if (members_.size() != probabilities_.size())
      throw std::invalid_argument("one probability per family member is required");
    double total = 0.0;
    for (double p : probabilities_) {
      if (!(p >= 0.0)) throw std::invalid_argument("member probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("member probabilities must sum to 1");
    cumulative_.reserve(probabilities_.size());
    double running = 0.0;
    for (double p : probabilities_) cumulative_.push_back(running += p);
  }

  int dimension() const { return dimension_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<double>& probabilities() const { return probabilities_; }
  double probability(std::size_t i) const { return probabilities_[i]; }
  double growth_constant() const { return growth_constant_; }
  const std::string& name() const { return name_; }
  const FamilyMember& member(std::size_t i) const { return members_.at(i); }

  bool has_jacobians() const {
    for (const auto& m : members_)
      if (!m.jacobian) return false;
    return true;
  }
  bool has_potentials() const {
    for (const auto& m : members_)
      if (!m.potential) return false;
    return true;
  }
  bool is_affine() const {
    for (const auto& m : members_)
      if (!m.affine) return false;
    return true;
  }

  Vector drift(std::size_t i, const Vector& x) const { return members_[i].drift(x); }
  Matrix jacobian(std::size_t i, const Vector& x) const {
    if (!members_[i].jacobian) throw UnsupportedError("family member has no Jacobian");
    return members_[i].jacobian(x);
  }
  double potential(std::size_t i, const Vector& x) const {
    if (!members_[i].potential) throw UnsupportedError("family member has no potential");
    return members_[i].potential(x);
  }

  /// Same members without Jacobians, for exercising finite-difference fallbacks.
  GradientFamily without_jacobians() const {
    GradientFamily copy = *this;
    for (auto& m : copy.members_) m.jacobian = nullptr;
    return copy;
  }

  /// Categorical index for uniform u in [0, 1).
  std::size_t index_for(double u) const {
    for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
      if (u < cumulative_[i]) return i;
    return cumulative_.size() - 1;
  }

 private:
  int dimension_;
  std::vector<FamilyMember> members_;
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
  double growth_constant_;
  std::string name_;
};

using FamilyPtr = std::shared_ptr<const GradientFamily>;

namespace detail {

inline void require_finite(const Vector& x, const char* where) {
  if (!x.allFinite()) throw DomainError(std::string(where) + ": non-finite input point");
}

inline void require_dimension(const GradientFamily& f, const Vector& x) {
  if (x.size() != f.dimension()) throw std::invalid_argument("point dimension does not match family");
}

}  // namespace detail

/// H̄(x) = Σ p_i H_i(x)
inline Vector mean_drift(const GradientFamily& f, const Vector& x) {
  detail::require_finite(x, "mean_drift");
  detail::require_dimension(f, x);
  Vector out = Vector::Zero(f.dimension());
  for (std::size_t i = 0; i < f.size(); ++i) out += f.probability(i) * f.drift(i, x);
  return out;
}

/// Σ(x) = Σ p_i (H_i - H̄)(H_i - H̄)^T, accumulated from deviations so it is
/// symmetric positive semidefinite up to rounding.
inline Matrix covariance(const GradientFamily& f, const Vector& x) {
  detail::require_finite(x, "covariance");
  detail::require_dimension(f, x);
  std::vector<Vector> values;
  values.reserve(f.size());
  Vector mean = Vector::Zero(f.dimension());
  for (std::size_t i = 0; i < f.size(); ++i) {
    values.push_back(f.drift(i, x));
    mean += f.probability(i) * values.back();
  }
  Matrix out = Matrix::Zero(f.dimension(), f.dimension());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vector dev = values[i] - mean;
    out.noalias() += f.probability(i) * dev * dev.transpose();
  }
  return 0.5 * (out + out.transpose());
}

constexpr double kPsdTolerance = 1e-10;

/// Principal square root of a symmetric PSD matrix. Eigenvalues below
/// -kPsdTolerance are rejected; smaller negatives are clipped to zero.
inline Matrix sqrt_psd(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("sqrt_psd needs a square matrix");
  if (!sigma.allFinite()) throw DomainError("sqrt_psd: non-finite matrix");
  const double scale = 1.0 + sigma.cwiseAbs().maxCoeff();
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > kPsdTolerance * scale)
    throw NotPsdError("sqrt_psd: matrix is not symmetric");
  if (sigma.size() == 1) {
    const double v = sigma(0, 0);
    if (v < -kPsdTolerance) throw NotPsdError("sqrt_psd: negative variance");
    return Matrix::Constant(1, 1, std::sqrt(std::max(v, 0.0)));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (sigma + sigma.transpose()));
  Vector eig = solver.eigenvalues();
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (eig[i] < -kPsdTolerance) {
      std::ostringstream msg;
      msg << "sqrt_psd: eigenvalue " << eig[i] << " below -" << kPsdTolerance;
      throw NotPsdError(msg.str());
    }
    eig[i] = std::sqrt(std::max(eig[i], 0.0));
  }
  const Matrix& v = solver.eigenvectors();
  Matrix root = v * eig.asDiagonal() * v.transpose();
  return 0.5 * (root + root.transpose());
}

inline Matrix sqrt_covariance(const GradientFamily& f, const Vector& x) { return sqrt_psd(covariance(f, x)); }

/// ∇H̄(x) = Σ p_i ∇H_i(x); throws UnsupportedError if a member lacks a Jacobian.
inline Matrix jacobian_mean_drift(const GradientFamily& f, const Vector& x) {
  detail::require_finite(x, "jacobian_mean_drift");
  detail::require_dimension(f, x);
  if (!f.has_jacobians()) throw UnsupportedError("family does not provide member Jacobians");
  Matrix out = Matrix::Zero(f.dimension(), f.dimension());
  for (std::size_t i = 0; i < f.size(); ++i) out += f.probability(i) * f.jacobian(i, x);
  return out;
}

/// Central finite-difference Jacobian of an arbitrary vector field.
template <class Field>
Matrix finite_difference_jacobian(const Field& field, const Vector& x, double step = 1e-5) {
  const Vector base = field(x);
  Matrix out(base.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector plus = x, minus = x;
    plus[j] += step;
    minus[j] -= step;
    out.col(j) = (field(plus) - field(minus)) / (2.0 * step);
  }
  return out;
}

inline std::size_t sample_index(const GradientFamily& f, RandomStream& rng) {
  if (f.size() == 1) return 0;
  return f.index_for(rng.uniform());
}

// ---------------------------------------------------------------------------
// Built-in families

/// Members H_i(x) = -A_i (x - c_i) with symmetric A_i (quadratic objectives).
struct QuadraticFamilySpec {
  std::vector<Matrix> matrices;
  std::vector<Vector> centers;
  std::vector<double> probabilities;
};

inline GradientFamily make_quadratic_family(const QuadraticFamilySpec& spec, std::string name = "quadratic") {
  const std::size_t m = spec.matrices.size();
  if (m == 0) throw std::invalid_argument("quadratic family needs at least one matrix");
  if (spec.centers.size() != m) throw std::invalid_argument("quadratic family: one center per matrix");
  const int d = static_cast<int>(spec.matrices.front().rows());
  std::vector<FamilyMember> members;
  double growth = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Matrix a = spec.matrices[i];
    const Vector c = spec.centers[i];
    if (a.rows() != d || a.cols() != d || c.size() != d)
      throw std::invalid_argument("quadratic family: inconsistent dimensions");
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("quadratic family: matrices must be symmetric");
    const double norm = a.operatorNorm();
    growth = std::max(growth, std::max(norm, norm * c.norm()));
    FamilyMember member;
    member.drift = [a, c](const Vector& x) -> Vector { return -a * (x - c); };
    member.jacobian = [a](const Vector&) -> Matrix { return -a; };
    member.potential = [a, c](const Vector& x) { return 0.5 * (x - c).dot(a * (x - c)); };
    member.affine = AffineMap{-a, a * c};
    members.push_back(std::move(member));
  }
  std::vector<double> probs = spec.probabilities;
  if (probs.empty()) probs.assign(m, 1.0 / static_cast<double>(m));
  return GradientFamily(d, std::move(members), std::move(probs), growth, std::move(name));
}

/// One-dimensional members H_i(x) = -slope_i (x - center_i).
inline GradientFamily make_scalar_linear_family(const std::vector<double>& slopes, const std::vector<double>& centers,
                                                const std::vector<double>& probabilities) {
  QuadraticFamilySpec spec;
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    spec.matrices.push_back(Matrix::Constant(1, 1, slopes[i]));
    spec.centers.push_back(Vector::Constant(1, centers.empty() ? 0.0 : centers.at(i)));
  }
  spec.probabilities = probabilities;
  return make_quadratic_family(spec, "scalar_linear");
}

/// H_1 = -x, H_2 = -2x with equal weight: the scalar two-member benchmark.
inline GradientFamily make_two_member_benchmark() { return make_scalar_linear_family({1.0, 2.0}, {}, {0.5, 0.5}); }

/// H_± = -(x ∓ sigma) with equal weight: H̄ = -x, Σ = sigma² (OU benchmark).
inline GradientFamily make_ou_benchmark(double sigma) {
  return make_scalar_linear_family({1.0, 1.0}, {sigma, -sigma}, {0.5, 0.5});
}

/// m random symmetric matrices with eigenvalues uniform in [eig_min, eig_max]
/// and standard normal centers.
inline QuadraticFamilySpec random_quadratic_spec(int d, int m, double eig_min, double eig_max, std::uint64_t seed) {
  if (d <= 0 || m <= 0) throw std::invalid_argument("random quadratic family: d and m must be positive");
  RandomStream rng(seed, 0x51ADull);
  QuadraticFamilySpec spec;
  for (int i = 0; i < m; ++i) {
    Matrix g(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
    const Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix q = qr.householderQ();
    Vector eig(d);
    for (int k = 0; k < d; ++k) eig[k] = eig_min + (eig_max - eig_min) * rng.uniform();
    Matrix a = q * eig.asDiagonal() * q.transpose();
    spec.matrices.push_back(0.5 * (a + a.transpose()));
    Vector c(d);
    for (int k = 0; k < d; ++k) c[k] = rng.normal();
    spec.centers.push_back(c);
  }
  spec.probabilities.assign(m, 1.0 / m);
  return spec;
}

inline GradientFamily make_random_quadratic_family(int d, int m, double eig_min, double eig_max, std::uint64_t seed) {
  return make_quadratic_family(random_quadratic_spec(d, m, eig_min, eig_max, seed), "random_quadratic");
}

/// Smoothed nonconvex members
///   H_i(x) = -k x + a_i tanh(b (x - c_i))      (elementwise tanh)
/// i.e. f_i(x) = k|x|²/2 - (a_i/b) Σ log cosh(b (x - c_i)). Nonconvex when
/// a_i b > k; derivatives of every order are bounded.
struct TanhFamilySpec {
  double confinement = 1.0;
  double sharpness = 1.0;
  std::vector<double> amplitudes;
  std::vector<Vector> centers;
  std::vector<double> probabilities;
};

inline GradientFamily make_tanh_family(const TanhFamilySpec& spec) {
  const std::size_t m = spec.amplitudes.size();
  if (m == 0 || spec.centers.size() != m) throw std::invalid_argument("tanh family: one center per amplitude");
  const int d = static_cast<int>(spec.centers.front().size());
  const double k = spec.confinement, b = spec.sharpness;
  std::vector<FamilyMember> members;
  double growth = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double a = spec.amplitudes[i];
    const Vector c = spec.centers[i];
    if (c.size() != d) throw std::invalid_argument("tanh family: inconsistent center dimensions");
    growth = std::max(growth, std::abs(k) + std::abs(a) * std::sqrt(static_cast<double>(d)));
    FamilyMember member;
    member.drift = [=](const Vector& x) -> Vector {
      return -k * x + a * (b * (x - c)).array().tanh().matrix();
    };
    member.jacobian = [=](const Vector& x) -> Matrix {
      const Eigen::ArrayXd th = (b * (x - c)).array().tanh();
      Vector diag = (a * b * (1.0 - th * th)).matrix();
      diag.array() -= k;
      return diag.asDiagonal();
    };
    member.potential = [=](const Vector& x) {
      double logcosh = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double z = std::abs(b * (x[j] - c[j]));
        logcosh += z + std::log1p(std::exp(-2.0 * z)) - std::log(2.0);
      }
      return 0.5 * k * x.squaredNorm() - a / b * logcosh;
    };
    members.push_back(std::move(member));
  }
  std::vector<double> probs = spec.probabilities;
  if (probs.empty()) probs.assign(m, 1.0 / static_cast<double>(m));
  return GradientFamily(d, std::move(members), std::move(probs), growth, "tanh");
}

// ---------------------------------------------------------------------------
// CSV input for quadratic specs:
//
//   d,m
//   <d>,<m>
//   m matrices, d rows each, d comma-separated values per row
//   m centers, one row each
//   optional final row of m probabilities (uniform when absent)

inline QuadraticFamilySpec read_quadratic_spec_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header_seen) {
      if (line.find_first_not_of(" \t,dm") != std::string::npos)
        throw std::invalid_argument("quadratic CSV: first line must be the header \"d,m\"");
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw std::invalid_argument("quadratic CSV: bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() != 2) throw std::invalid_argument("quadratic CSV: missing d,m values");
  const int d = static_cast<int>(rows[0][0]);
  const int m = static_cast<int>(rows[0][1]);
  if (d <= 0 || m <= 0) throw std::invalid_argument("quadratic CSV: d and m must be positive");
  const std::size_t needed = 1 + static_cast<std::size_t>(m) * (d + 1);
  if (rows.size() != needed && rows.size() != needed + 1)
    throw std::invalid_argument("quadratic CSV: expected " + std::to_string(needed) + " data rows");
  QuadraticFamilySpec spec;
  std::size_t r = 1;
  auto take_row = [&](std::size_t width) {
    if (rows[r].size() != width) throw std::invalid_argument("quadratic CSV: row " + std::to_string(r + 2) + " has wrong width");
    return rows[r++];
  };
  for (int i = 0; i < m; ++i) {
    Matrix a(d, d);
    for (int row = 0; row < d; ++row) {
      const auto values = take_row(d);
      for (int col = 0; col < d; ++col) a(row, col) = values[col];
    }
    spec.matrices.push_back(a);
  }
  for (int i = 0; i < m; ++i) {
    const auto values = take_row(d);
    spec.centers.push_back(Eigen::Map<const Vector>(values.data(), d));
  }
  if (r < rows.size()) spec.probabilities = take_row(m);
  return spec;
}

}  // namespace sgdflow
