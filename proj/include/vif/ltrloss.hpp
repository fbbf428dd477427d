#pragma once

/**
 * @file
 * @brief ListMLE for a linear scorer z = W x, with item presence masks.
 *
 * W is n x p (segment "W", row-major, W[l][a] at l * p + a). An absent item
 * leaves every relevance list (the rest move up one position) and every
 * softmax denominator; a query whose list becomes empty contributes nothing.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vif/errors.hpp"
#include "vif/losscore.hpp"
#include "vif/numkit.hpp"

namespace vif {

struct RankingDataset {
  std::size_t n_items = 0;
  Matrix x;                                // m x p query features
  std::vector<std::vector<std::size_t>> lists;  // top-k item ids per query, best first

  std::size_t queries() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }

  void validate() const {
    require(static_cast<std::size_t>(x.rows()) == lists.size(), ErrorCode::DataError,
            "ranking data: feature rows and label lists differ in count");
    require(x.allFinite(), ErrorCode::DataError, "ranking data: non-finite features");
    require(n_items >= 1, ErrorCode::DataError, "ranking data: item universe is empty");
    for (std::size_t q = 0; q < lists.size(); ++q) {
      std::set<std::size_t> seen;
      require(lists[q].size() <= n_items, ErrorCode::DataError, "ranking data: list longer than the item universe");
      for (std::size_t item : lists[q]) {
        require(item < n_items, ErrorCode::DataError,
                "ranking data: query " + std::to_string(q) + " references item " + std::to_string(item));
        require(seen.insert(item).second, ErrorCode::DataError,
                "ranking data: query " + std::to_string(q) + " repeats item " + std::to_string(item));
      }
    }
  }

  /// Item i deleted from the universe; higher ids shift down by one.
  RankingDataset without_item(std::size_t i) const {
    require(i < n_items, ErrorCode::InvalidArgument, "item index out of range");
    RankingDataset out{n_items - 1, x, {}};
    for (const auto& list : lists) {
      std::vector<std::size_t> l;
      for (std::size_t item : list)
        if (item != i) l.push_back(item > i ? item - 1 : item);
      out.lists.push_back(std::move(l));
    }
    return out;
  }
};

namespace detail {

/// Loss of one ranked list for logits z over the present items, and
/// optionally its z-gradient and z-Hessian.
inline double listmle_query(const Vector& z, const std::vector<std::size_t>& list, const PresenceVector& b,
                            Vector* gz, Matrix* hz) {
  const auto n = z.size();
  std::vector<char> remaining(static_cast<std::size_t>(n), 0);
  for (Eigen::Index l = 0; l < n; ++l) remaining[static_cast<std::size_t>(l)] = b[static_cast<std::size_t>(l)];
  Vector p(n);
  double value = 0.0;
  for (std::size_t item : list) {
    if (!b[item]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < n; ++l)
      if (remaining[static_cast<std::size_t>(l)]) mx = std::max(mx, z[l]);
    double s = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      p[l] = remaining[static_cast<std::size_t>(l)] ? std::exp(z[l] - mx) : 0.0;
      s += p[l];
    }
    p /= s;
    const auto y = static_cast<Eigen::Index>(item);
    value += mx + std::log(s) - z[y];
    if (gz != nullptr) {
      *gz += p;
      (*gz)[y] -= 1.0;
    }
    if (hz != nullptr) {
      hz->diagonal() += p;
      hz->noalias() -= p * p.transpose();
    }
    remaining[item] = 0;
  }
  return value;
}

}  // namespace detail

class ListMleModel final : public LossModel {
 public:
  explicit ListMleModel(RankingDataset data, double ridge = 0.0) : data_(std::move(data)), ridge_(ridge) {
    data_.validate();
    require(ridge_ >= 0.0, ErrorCode::ConfigError, "ridge must be >= 0");
  }

  const RankingDataset& data() const { return data_; }
  double ridge() const { return ridge_; }

  std::string name() const override { return "listmle"; }
  std::size_t n_objects() const override { return data_.n_items; }
  std::size_t dim() const override { return data_.n_items * data_.features(); }

  ParamLayout layout() const override {
    ParamLayout l;
    l.add("W", dim());
    return l;
  }

  /// Logits z = W x_q.
  Vector logits(const Vector& theta, std::size_t q) const {
    return weights(theta) * data_.x.row(static_cast<Eigen::Index>(q)).transpose();
  }

  double value(const Vector& theta, const PresenceVector& b) const override {
    check(theta, b);
    double v = 0.0;
    for (std::size_t q = 0; q < data_.queries(); ++q) v += detail::listmle_query(logits(theta, q), data_.lists[q], b, nullptr, nullptr);
    return v + ridge_value(theta, b);
  }

  Vector gradient(const Vector& theta, const PresenceVector& b) const override {
    check(theta, b);
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(data_.n_items), static_cast<Eigen::Index>(data_.features()));
    for (std::size_t q = 0; q < data_.queries(); ++q) add_query_gradient(theta, b, q, g);
    Vector out = flatten(g);
    add_ridge_gradient(theta, b, 1.0, out);
    return out;
  }

  Matrix hessian(const Vector& theta, const PresenceVector& b) const override {
    check(theta, b);
    const auto n = static_cast<Eigen::Index>(data_.n_items);
    const auto p = static_cast<Eigen::Index>(data_.features());
    Matrix h = Matrix::Zero(n * p, n * p);
    for (std::size_t q = 0; q < data_.queries(); ++q) {
      Matrix hz = Matrix::Zero(n, n);
      detail::listmle_query(logits(theta, q), data_.lists[q], b, nullptr, &hz);
      const Vector xq = data_.x.row(static_cast<Eigen::Index>(q)).transpose();
      const Matrix xx = xq * xq.transpose();
      for (Eigen::Index l = 0; l < n; ++l)
        for (Eigen::Index m = 0; m < n; ++m)
          if (hz(l, m) != 0.0) h.block(l * p, m * p, p, p) += hz(l, m) * xx;
    }
    for (std::size_t l = 0; l < data_.n_items; ++l)
      if (b[l]) h.diagonal().segment(static_cast<Eigen::Index>(l) * p, p).array() += ridge_;
    return h;
  }

  Vector hvp(const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    check(theta, b);
    Vector out = Vector::Zero(theta.size());
    for (std::size_t q = 0; q < data_.queries(); ++q) add_query_hvp(theta, b, q, v, out);
    add_ridge_hvp(b, 1.0, v, out);
    return out;
  }

  /// One unit term per query; each carries an equal share of the ridge.
  std::size_t num_terms(const PresenceVector&) const override { return std::max<std::size_t>(data_.queries(), 1); }

  Vector term_gradient(std::size_t t, const Vector& theta, const PresenceVector& b) const override {
    check(theta, b);
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(data_.n_items), static_cast<Eigen::Index>(data_.features()));
    if (t < data_.queries()) add_query_gradient(theta, b, t, g);
    Vector out = flatten(g);
    add_ridge_gradient(theta, b, 1.0 / static_cast<double>(num_terms(b)), out);
    return out;
  }

  Vector term_hvp(std::size_t t, const Vector& theta, const PresenceVector& b, const Vector& v) const override {
    check(theta, b);
    Vector out = Vector::Zero(theta.size());
    if (t < data_.queries()) add_query_hvp(theta, b, t, v, out);
    add_ridge_hvp(b, 1.0 / static_cast<double>(num_terms(b)), v, out);
    return out;
  }

  /// Both z-gradients of each query come from one pass over its logits.
  std::optional<Vector> delta_gradient(const Vector& theta, std::size_t i) const override {
    require(i < n_objects(), ErrorCode::InvalidArgument, "item index out of range");
    const PresenceVector full = full_presence();
    const PresenceVector drop = full.drop(i);
    const auto n = static_cast<Eigen::Index>(data_.n_items);
    Matrix g = Matrix::Zero(n, static_cast<Eigen::Index>(data_.features()));
    for (std::size_t q = 0; q < data_.queries(); ++q) {
      const Vector z = logits(theta, q);
      Vector gf = Vector::Zero(n), gd = Vector::Zero(n);
      detail::listmle_query(z, data_.lists[q], full, &gf, nullptr);
      detail::listmle_query(z, data_.lists[q], drop, &gd, nullptr);
      g.noalias() += (gf - gd) * data_.x.row(static_cast<Eigen::Index>(q));
    }
    Vector out = flatten(g);
    const auto p = static_cast<Eigen::Index>(data_.features());
    out.segment(static_cast<Eigen::Index>(i) * p, p) += ridge_ * theta.segment(static_cast<Eigen::Index>(i) * p, p);
    return out;
  }

  /// Rows of absent items are frozen.
  std::vector<bool> free_parameters(const PresenceVector& b) const override {
    std::vector<bool> free(dim(), true);
    const std::size_t p = data_.features();
    for (std::size_t l = 0; l < data_.n_items; ++l)
      if (!b[l]) std::fill_n(free.begin() + static_cast<std::ptrdiff_t>(l * p), p, false);
    return free;
  }

 private:
  void check(const Vector& theta, const PresenceVector& b) const {
    require(b.size() == n_objects(), ErrorCode::InvalidArgument, "presence vector length mismatch");
    require(static_cast<std::size_t>(theta.size()) == dim(), ErrorCode::InvalidArgument, "theta has wrong dimension");
    require(b.count() > 0, ErrorCode::NoPresentItems, "no items are present");
  }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weights(
      const Vector& theta) const {
    return {theta.data(), static_cast<Eigen::Index>(data_.n_items), static_cast<Eigen::Index>(data_.features())};
  }

  Vector flatten(const Matrix& g) const {
    Vector out(g.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), g.rows(), g.cols()) = g;
    return out;
  }

  void add_query_gradient(const Vector& theta, const PresenceVector& b, std::size_t q, Matrix& g) const {
    Vector gz = Vector::Zero(static_cast<Eigen::Index>(data_.n_items));
    detail::listmle_query(logits(theta, q), data_.lists[q], b, &gz, nullptr);
    g.noalias() += gz * data_.x.row(static_cast<Eigen::Index>(q));
  }

  void add_query_hvp(const Vector& theta, const PresenceVector& b, std::size_t q, const Vector& v,
                     Vector& out) const {
    const auto n = static_cast<Eigen::Index>(data_.n_items);
    Matrix hz = Matrix::Zero(n, n);
    detail::listmle_query(logits(theta, q), data_.lists[q], b, nullptr, &hz);
    const Vector xq = data_.x.row(static_cast<Eigen::Index>(q)).transpose();
    const Vector hzv = hz * (weights(v) * xq);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data(), n, static_cast<Eigen::Index>(data_.features())) += hzv * xq.transpose();
  }

  double ridge_value(const Vector& theta, const PresenceVector& b) const {
    if (ridge_ == 0.0) return 0.0;
    const auto p = static_cast<Eigen::Index>(data_.features());
    double sq = 0.0;
    for (std::size_t l = 0; l < data_.n_items; ++l)
      if (b[l]) sq += theta.segment(static_cast<Eigen::Index>(l) * p, p).squaredNorm();
    return 0.5 * ridge_ * sq;
  }

  void add_ridge_gradient(const Vector& theta, const PresenceVector& b, double share, Vector& out) const {
    if (ridge_ == 0.0) return;
    const auto p = static_cast<Eigen::Index>(data_.features());
    for (std::size_t l = 0; l < data_.n_items; ++l) {
      if (!b[l]) continue;
      const auto o = static_cast<Eigen::Index>(l) * p;
      out.segment(o, p) += share * ridge_ * theta.segment(o, p);
    }
  }

  void add_ridge_hvp(const PresenceVector& b, double share, const Vector& v, Vector& out) const {
    add_ridge_gradient(v, b, share, out);
  }

  RankingDataset data_;
  double ridge_;
};

/// ListMLE loss of one held-out ranked list over the full item universe.
class QueryLossTarget final : public TargetFunction {
 public:
  QueryLossTarget(std::size_t n_items, Vector x, std::vector<std::size_t> list)
      : n_(n_items), x_(std::move(x)), list_(std::move(list)) {
    for (std::size_t item : list_) require(item < n_, ErrorCode::InvalidArgument, "query target item out of range");
  }

  double value(const Vector& theta) const override {
    return detail::listmle_query(logits(theta), list_, PresenceVector::all_ones(n_), nullptr, nullptr);
  }

  Vector gradient(const Vector& theta) const override {
    Vector gz = Vector::Zero(static_cast<Eigen::Index>(n_));
    detail::listmle_query(logits(theta), list_, PresenceVector::all_ones(n_), &gz, nullptr);
    Vector out(theta.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data(), static_cast<Eigen::Index>(n_), x_.size()) = gz * x_.transpose();
    return out;
  }

 private:
  Vector logits(const Vector& theta) const {
    require(theta.size() == static_cast<Eigen::Index>(n_) * x_.size(), ErrorCode::InvalidArgument,
            "theta has wrong dimension");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               theta.data(), static_cast<Eigen::Index>(n_), x_.size()) *
           x_;
  }

  std::size_t n_;
  Vector x_;
  std::vector<std::size_t> list_;
};

inline QueryLossTarget query_loss_target(std::size_t n_items, Vector x_test, std::vector<std::size_t> list) {
  return QueryLossTarget(n_items, std::move(x_test), std::move(list));
}

}  // namespace vif
