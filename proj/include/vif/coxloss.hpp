#pragma once

/**
 * @file
 * @brief Cox proportional hazards: negative log partial likelihood under a
 * record presence mask, its derivatives, the relative-risk target, and the
 * analytical (Reid) influence function.
 *
 * The at-risk set of record i is {j : y_j >= y_i, b_j = 1}. All risk-set
 * moments come from one sweep over records in decreasing time order; the
 * exponentials are shifted by the largest linear predictor so that only
 * ratios of sums are ever formed.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "vif/errors.hpp"
#include "vif/losscore.hpp"
#include "vif/numkit.hpp"

namespace vif {

struct SurvivalDataset {
  Matrix x;                 // n x d
  Vector y;                 // observed times
  std::vector<int> delta;   // 1 = event, 0 = censored

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }

  void validate() const {
    require(x.rows() == y.size() && static_cast<std::size_t>(y.size()) == delta.size(), ErrorCode::DataError,
            "survival data: x, y and delta lengths differ");
    require(x.allFinite() && y.allFinite(), ErrorCode::DataError, "survival data: non-finite values");
    std::unordered_set<double> seen;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      require(y[i] > 0.0, ErrorCode::DataError, "survival data: observed times must be positive");
      require(delta[static_cast<std::size_t>(i)] == 0 || delta[static_cast<std::size_t>(i)] == 1,
              ErrorCode::DataError, "survival data: delta must be 0 or 1");
      require(seen.insert(y[i]).second, ErrorCode::DataError,
              "survival data: tied observed time " + std::to_string(y[i]) + " (ties are not supported)");
    }
  }

  /// Copy without record i.
  SurvivalDataset without(std::size_t i) const {
    SurvivalDataset out;
    const auto n = static_cast<Eigen::Index>(size());
    out.x.resize(n - 1, x.cols());
    out.y.resize(n - 1);
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (static_cast<std::size_t>(k) == i) continue;
      out.x.row(r) = x.row(k);
      out.y[r] = y[k];
      out.delta.push_back(delta[static_cast<std::size_t>(k)]);
      ++r;
    }
    return out;
  }
};

/// Risk-set moments at one event time (sums use exponentials shifted by a
/// common constant, so only ratios are meaningful).
struct RiskMoments {
  std::size_t record = 0;
  double s0 = 0.0;
  Vector s1;
};

class CoxModel final : public LossModel {
 public:
  explicit CoxModel(SurvivalDataset data) : data_(std::move(data)) {
    data_.validate();
    require(data_.size() > 0, ErrorCode::DataError, "survival data is empty");
    order_.resize(data_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return data_.y[idx(a)] > data_.y[idx(b)]; });
  }

  const SurvivalDataset& data() const { return data_; }

  std::string name() const override { return "cox"; }
  std::size_t n_objects() const override { return data_.size(); }
  std::size_t dim() const override { return data_.features(); }

  double value(const Vector& theta, const PresenceVector& b) const override {
    const Sweep s = sweep(theta, b, Want::Value);
    return s.value;
  }
  Vector gradient(const Vector& theta, const PresenceVector& b) const override {
    return sweep(theta, b, Want::Gradient).gradient;
  }
  Matrix hessian(const Vector& theta, const PresenceVector& b) const override {
    return sweep(theta, b, Want::Hessian).hessian;
  }
  Vector hvp(const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    return sweep(theta, b, Want::Hvp, &v).hvp;
  }

  /// One unit term per present event record.
  std::size_t num_terms(const PresenceVector& b) const override { return present_events(b).size(); }

  Vector term_gradient(std::size_t t, const Vector& theta, const PresenceVector& b) const override {
    const std::size_t i = present_events(b).at(t);
    const auto [mean, second] = term_moments(theta, b, i, nullptr);
    (void)second;
    return -(row(i) - mean);
  }

  Vector term_hvp(std::size_t t, const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    const std::size_t i = present_events(b).at(t);
    const auto [mean, second_v] = term_moments(theta, b, i, &v);
    return second_v - mean * mean.dot(v);
  }

  /// grad L(theta, 1) - grad L(theta, 1_{-i}): record i's own event term plus
  /// the change it causes in the risk sets of earlier events.
  std::optional<Vector> delta_gradient(const Vector& theta, std::size_t i) const override {
    const std::size_t one[] = {i};
    return delta_gradients(theta, one).front();
  }

  std::vector<Vector> delta_gradients(const Vector& theta, std::span<const std::size_t> objects) const override {
    const auto moments = event_moments(theta);
    const double shift = max_eta(theta, full_presence());
    std::vector<Vector> out;
    out.reserve(objects.size());
    for (std::size_t i : objects) {
      require(i < n_objects(), ErrorCode::InvalidArgument, "record index out of range");
      const double ei = std::exp(eta(theta, i) - shift);
      const Vector xi = row(i);
      const double yi = data_.y[idx(i)];
      Vector d = Vector::Zero(theta.size());
      for (const auto& m : moments) {
        if (m.record == i) {
          d -= xi - m.s1 / m.s0;
        } else if (data_.y[idx(m.record)] < yi) {
          d += (ei / (m.s0 - ei)) * (xi - m.s1 / m.s0);
        }
      }
      out.push_back(std::move(d));
    }
    return out;
  }

  /// Risk-set moments at every event time for b = 1.
  std::vector<RiskMoments> event_moments(const Vector& theta) const {
    const PresenceVector b = full_presence();
    const double shift = max_eta(theta, b);
    std::vector<RiskMoments> out;
    double s0 = 0.0;
    Vector s1 = Vector::Zero(theta.size());
    for (std::size_t k : order_) {
      const double e = std::exp(eta(theta, k) - shift);
      s0 += e;
      s1 += e * row(k);
      if (data_.delta[k] == 1) out.push_back(RiskMoments{k, s0, s1});
    }
    return out;
  }

  double eta(const Vector& theta, std::size_t i) const { return data_.x.row(idx(i)).dot(theta); }
  Vector row(std::size_t i) const { return data_.x.row(idx(i)).transpose(); }

 private:
  enum class Want { Value, Gradient, Hessian, Hvp };

  struct Sweep {
    double value = 0.0;
    Vector gradient;
    Matrix hessian;
    Vector hvp;
  };

  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

  void check(const PresenceVector& b) const {
    require(b.size() == n_objects(), ErrorCode::InvalidArgument, "presence vector length mismatch");
  }

  std::vector<std::size_t> present_events(const PresenceVector& b) const {
    check(b);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (b[i] && data_.delta[i] == 1) out.push_back(i);
    return out;
  }

  double max_eta(const Vector& theta, const PresenceVector& b) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (b[i]) m = std::max(m, eta(theta, i));
    return std::isfinite(m) ? m : 0.0;
  }

  Sweep sweep(const Vector& theta, const PresenceVector& b, Want want, const Vector* v = nullptr) const {
    check(b);
    require(static_cast<std::size_t>(theta.size()) == dim(), ErrorCode::InvalidArgument, "theta has wrong dimension");
    const auto d = theta.size();
    const double shift = max_eta(theta, b);
    Sweep out;
    out.gradient = Vector::Zero(d);
    if (want == Want::Hessian) out.hessian = Matrix::Zero(d, d);
    if (want == Want::Hvp) out.hvp = Vector::Zero(d);
    double s0 = 0.0;
    Vector s1 = Vector::Zero(d);
    Matrix s2;
    Vector s2v;
    if (want == Want::Hessian) s2 = Matrix::Zero(d, d);
    if (want == Want::Hvp) s2v = Vector::Zero(d);
    std::size_t events = 0;
    for (std::size_t k : order_) {
      if (!b[k]) continue;
      const double eta_k = eta(theta, k);
      const double e = std::exp(eta_k - shift);
      const auto xk = data_.x.row(idx(k)).transpose();
      s0 += e;
      if (want != Want::Value) s1 += e * xk;
      if (want == Want::Hessian) s2.noalias() += e * xk * xk.transpose();
      if (want == Want::Hvp) s2v += (e * xk.dot(*v)) * xk;
      if (data_.delta[k] != 1) continue;
      ++events;
      require(s0 > 0.0, ErrorCode::EmptyRiskSet, "empty risk set");
      switch (want) {
        case Want::Value:
          out.value -= eta_k - (std::log(s0) + shift);
          break;
        case Want::Gradient:
          out.gradient -= xk - s1 / s0;
          break;
        case Want::Hessian: {
          const Vector mean = s1 / s0;
          out.hessian += s2 / s0 - mean * mean.transpose();
          break;
        }
        case Want::Hvp: {
          const Vector mean = s1 / s0;
          out.hvp += s2v / s0 - mean * mean.dot(*v);
          break;
        }
      }
    }
    require(events > 0, ErrorCode::NoEvents, "no present event records");
    if (want == Want::Hessian) out.hessian = 0.5 * (out.hessian + out.hessian.transpose());
    return out;
  }

  /// Weighted mean of the risk set of event i and, if v is given, the
  /// weighted second moment applied to v.
  std::pair<Vector, Vector> term_moments(const Vector& theta, const PresenceVector& b, std::size_t i,
                                         const Vector* v) const {
    const double yi = data_.y[idx(i)];
    const double shift = max_eta(theta, b);
    double s0 = 0.0;
    Vector s1 = Vector::Zero(theta.size());
    Vector s2v = Vector::Zero(theta.size());
    for (std::size_t k = 0; k < data_.size(); ++k) {
      if (!b[k] || data_.y[idx(k)] < yi) continue;
      const double e = std::exp(eta(theta, k) - shift);
      const auto xk = data_.x.row(idx(k)).transpose();
      s0 += e;
      s1 += e * xk;
      if (v != nullptr) s2v += (e * xk.dot(*v)) * xk;
    }
    require(s0 > 0.0, ErrorCode::EmptyRiskSet, "empty risk set");
    return {s1 / s0, s2v / s0};
  }

  SurvivalDataset data_;
  std::vector<std::size_t> order_;  // decreasing observed time
};

/// f(theta) = exp(theta^T x_test).
class RelativeRiskTarget final : public TargetFunction {
 public:
  explicit RelativeRiskTarget(Vector x_test) : x_(std::move(x_test)) {}
  double value(const Vector& theta) const override { return std::exp(theta.dot(x_)); }
  Vector gradient(const Vector& theta) const override { return std::exp(theta.dot(x_)) * x_; }

 private:
  Vector x_;
};

inline RelativeRiskTarget relative_risk_target(Vector x_test) { return RelativeRiskTarget(std::move(x_test)); }

/**
 * Empirical analytical influence function of Cox regression for every record:
 *
 *   IF_n(i) = -A^{-1} grad l_n(theta; Z_i) - A^{-1} C_i(theta),   A = H / n,
 *
 * with grad l_n(theta; Z_i) = -delta_i (x_i - S1(y_i)/S0(y_i)) and
 * C_i = exp(theta^T x_i) * sum_{j : y_j <= y_i, delta_j = 1} (x_i - S1(y_j)/S0(y_j)) / S0(y_j),
 * where the 1/n factors of the empirical moments cancel against the 1/n of
 * the counting-process average. theta must be the full-data minimizer.
 */
inline std::vector<Vector> reid_influences(const CoxModel& model, const Vector& theta) {
  const auto n = model.n_objects();
  const Matrix a = model.hessian(theta, model.full_presence()) / static_cast<double>(n);
  const SpdFactorization fact(a, 0.0);
  const auto moments = model.event_moments(theta);
  const auto& data = model.data();

  // Map record -> its own moments (events only).
  std::vector<const RiskMoments*> own(n, nullptr);
  for (const auto& m : moments) own[m.record] = &m;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) shift = std::max(shift, model.eta(theta, i));

  std::vector<Vector> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector xi = model.row(i);
    Vector score = Vector::Zero(theta.size());
    if (data.delta[i] == 1) score = -(xi - own[i]->s1 / own[i]->s0);
    const double ei = std::exp(model.eta(theta, i) - shift);
    Vector c = Vector::Zero(theta.size());
    for (const auto& m : moments) {
      if (data.y[static_cast<Eigen::Index>(m.record)] <= data.y[static_cast<Eigen::Index>(i)]) {
        c += (xi - m.s1 / m.s0) / m.s0;
      }
    }
    c *= ei;
    out[i] = -fact.solve(Vector(score + c));
  }
  return out;
}

inline Vector reid_if(const CoxModel& model, const Vector& theta, std::size_t i) {
  require(i < model.n_objects(), ErrorCode::InvalidArgument, "record index out of range");
  return reid_influences(model, theta)[i];
}

}  // namespace vif
