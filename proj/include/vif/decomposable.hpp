#pragma once

/**
 * @file
 * @brief Losses that are sums of per-point terms (M-estimators), their
 * presence-masked wrapper, and loss-over-measure views used by the
 * finite-difference influence function.
 */

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vif/errors.hpp"
#include "vif/losscore.hpp"
#include "vif/numkit.hpp"

namespace vif {

/// l(theta; z_i) for i = 0..n-1.
class DecomposableModel {
 public:
  virtual ~DecomposableModel() = default;
  virtual std::string name() const = 0;
  virtual std::size_t n_points() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double point_value(const Vector& theta, std::size_t i) const = 0;
  virtual Vector point_gradient(const Vector& theta, std::size_t i) const = 0;
  virtual Matrix point_hessian(const Vector& theta, std::size_t i) const = 0;

  Matrix total_hessian(const Vector& theta) const {
    Matrix h = Matrix::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < n_points(); ++i) h += point_hessian(theta, i);
    return h;
  }
};

/// L(theta, b) = sum_{i : b_i = 1} l(theta; z_i).
class SumOfPointsLoss final : public LossModel {
 public:
  explicit SumOfPointsLoss(std::shared_ptr<const DecomposableModel> points) : points_(std::move(points)) {
    require(points_ != nullptr, ErrorCode::InvalidArgument, "SumOfPointsLoss: null model");
  }

  const DecomposableModel& points() const { return *points_; }

  std::string name() const override { return points_->name(); }
  std::size_t n_objects() const override { return points_->n_points(); }
  std::size_t dim() const override { return points_->dim(); }

  double value(const Vector& theta, const PresenceVector& b) const override {
    check(b);
    double v = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i]) v += points_->point_value(theta, i);
    return v;
  }
  Vector gradient(const Vector& theta, const PresenceVector& b) const override {
    check(b);
    Vector g = Vector::Zero(theta.size());
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i]) g += points_->point_gradient(theta, i);
    return g;
  }
  Matrix hessian(const Vector& theta, const PresenceVector& b) const override {
    check(b);
    Matrix h = Matrix::Zero(theta.size(), theta.size());
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i]) h += points_->point_hessian(theta, i);
    return h;
  }

  std::size_t num_terms(const PresenceVector& b) const override { return b.count(); }
  Vector term_gradient(std::size_t t, const Vector& theta, const PresenceVector& b) const override {
    return points_->point_gradient(theta, b.present_indices().at(t));
  }
  Vector term_hvp(std::size_t t, const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    return points_->point_hessian(theta, b.present_indices().at(t)) * v;
  }

  /// Every term except l(theta; z_i) cancels.
  std::optional<Vector> delta_gradient(const Vector& theta, std::size_t i) const override {
    return points_->point_gradient(theta, i);
  }

 private:
  void check(const PresenceVector& b) const {
    require(b.size() == n_objects(), ErrorCode::InvalidArgument, "presence vector length mismatch");
  }
  std::shared_ptr<const DecomposableModel> points_;
};

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

/// l(theta; z_i) = |theta - z_i|^2. The minimizer over present points is their mean.
class QuadraticModel final : public DecomposableModel {
 public:
  explicit QuadraticModel(std::vector<Vector> points) : z_(std::move(points)) {
    require(!z_.empty(), ErrorCode::InvalidArgument, "QuadraticModel: no points");
  }
  std::string name() const override { return "quadratic"; }
  std::size_t n_points() const override { return z_.size(); }
  std::size_t dim() const override { return static_cast<std::size_t>(z_.front().size()); }
  double point_value(const Vector& theta, std::size_t i) const override { return (theta - z_[i]).squaredNorm(); }
  Vector point_gradient(const Vector& theta, std::size_t i) const override { return 2.0 * (theta - z_[i]); }
  Matrix point_hessian(const Vector& theta, std::size_t) const override {
    return 2.0 * Matrix::Identity(theta.size(), theta.size());
  }
  const Vector& point(std::size_t i) const { return z_[i]; }

 private:
  std::vector<Vector> z_;
};

/// Ridge-regularized logistic regression with labels in {-1, +1}:
/// l(theta; x, y) = log(1 + exp(-y x^T theta)) + ridge/2 |theta|^2.
class LogisticModel final : public DecomposableModel {
 public:
  LogisticModel(Matrix x, Vector y, double ridge) : x_(std::move(x)), y_(std::move(y)), ridge_(ridge) {
    require(x_.rows() == y_.size(), ErrorCode::InvalidArgument, "LogisticModel: rows/labels mismatch");
    require(ridge_ >= 0.0, ErrorCode::InvalidArgument, "LogisticModel: ridge must be >= 0");
  }

  std::string name() const override { return "logistic"; }
  std::size_t n_points() const override { return static_cast<std::size_t>(x_.rows()); }
  std::size_t dim() const override { return static_cast<std::size_t>(x_.cols()); }

  double point_value(const Vector& theta, std::size_t i) const override {
    const double m = margin(theta, i);
    return softplus(-m) + 0.5 * ridge_ * theta.squaredNorm();
  }
  Vector point_gradient(const Vector& theta, std::size_t i) const override {
    const double m = margin(theta, i);
    const double s = sigmoid(-m);
    return -s * y_[row(i)] * x_.row(row(i)).transpose() + ridge_ * theta;
  }
  Matrix point_hessian(const Vector& theta, std::size_t i) const override {
    const double m = margin(theta, i);
    const double s = sigmoid(m);
    const Vector xi = x_.row(row(i)).transpose();
    Matrix h = s * (1.0 - s) * xi * xi.transpose();
    h.diagonal().array() += ridge_;
    return h;
  }

  const Matrix& features() const { return x_; }
  const Vector& labels() const { return y_; }
  double ridge() const { return ridge_; }

 private:
  static double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
  static double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }
  static Eigen::Index row(std::size_t i) { return static_cast<Eigen::Index>(i); }
  double margin(const Vector& theta, std::size_t i) const { return y_[row(i)] * x_.row(row(i)).dot(theta); }

  Matrix x_;
  Vector y_;
  double ridge_;
};

/// f(theta) = l(theta; z_i) for one point of a (typically held-out) model.
class PointLossTarget final : public TargetFunction {
 public:
  PointLossTarget(std::shared_ptr<const DecomposableModel> points, std::size_t i) : points_(std::move(points)), i_(i) {
    require(points_ != nullptr && i_ < points_->n_points(), ErrorCode::InvalidArgument, "point target out of range");
  }
  double value(const Vector& theta) const override { return points_->point_value(theta, i_); }
  Vector gradient(const Vector& theta) const override { return points_->point_gradient(theta, i_); }

 private:
  std::shared_ptr<const DecomposableModel> points_;
  std::size_t i_;
};

// ---------------------------------------------------------------------------
// Losses over probability measures on the n fixed points
// ---------------------------------------------------------------------------

/// L(theta, P) for P given as point masses (weights summing to one).
class MeasureLoss {
 public:
  virtual ~MeasureLoss() = default;
  virtual std::size_t n_points() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Vector gradient(const Vector& theta, std::span<const double> weights) const = 0;
  virtual Matrix hessian(const Vector& theta, std::span<const double> weights) const = 0;
};

/// E_{z~P} l(theta; z): realizable for any (signed) weights.
class ExpectedPointLoss final : public MeasureLoss {
 public:
  explicit ExpectedPointLoss(std::shared_ptr<const DecomposableModel> points) : points_(std::move(points)) {}
  std::size_t n_points() const override { return points_->n_points(); }
  std::size_t dim() const override { return points_->dim(); }
  Vector gradient(const Vector& theta, std::span<const double> w) const override {
    Vector g = Vector::Zero(theta.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] != 0.0) g += w[i] * points_->point_gradient(theta, i);
    return g;
  }
  Matrix hessian(const Vector& theta, std::span<const double> w) const override {
    Matrix h = Matrix::Zero(theta.size(), theta.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] != 0.0) h += w[i] * points_->point_hessian(theta, i);
    return h;
  }

 private:
  std::shared_ptr<const DecomposableModel> points_;
};

/// L(theta, P) := L(theta, b^P), defined only for P uniform on a subset of
/// the points; anything else raises UnrealizableMixture.
class PresenceMeasureLoss final : public MeasureLoss {
 public:
  explicit PresenceMeasureLoss(const LossModel& model) : model_(model) {}
  std::size_t n_points() const override { return model_.n_objects(); }
  std::size_t dim() const override { return model_.dim(); }
  Vector gradient(const Vector& theta, std::span<const double> w) const override {
    return model_.gradient(theta, support(w));
  }
  Matrix hessian(const Vector& theta, std::span<const double> w) const override {
    return model_.hessian(theta, support(w));
  }

  static PresenceVector support(std::span<const double> w) {
    PresenceVector b(w.size(), false);
    double level = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] < -1e-12) fail(ErrorCode::UnrealizableMixture, "negative mass on point " + std::to_string(i));
      if (w[i] > 1e-12) {
        b.set(i, true);
        level += w[i];
        ++count;
      }
    }
    require(count > 0, ErrorCode::UnrealizableMixture, "measure has empty support");
    level /= static_cast<double>(count);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (b[i] && std::abs(w[i] - level) > 1e-9 * level) {
        fail(ErrorCode::UnrealizableMixture, "mixture is not uniform on its support");
      }
    }
    return b;
  }

 private:
  const LossModel& model_;
};

}  // namespace vif
