#pragma once

/**
 * @file
 * @brief Presence-masked losses, parameter layouts, target functions, the
 * trainer that produces argmin L(theta, b), and finite-difference derivative
 * checks.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vif/errors.hpp"
#include "vif/log.hpp"
#include "vif/numkit.hpp"
#include "vif/rng.hpp"

namespace vif {

/// Binary inclusion mask over the n attributable objects.
class PresenceVector {
 public:
  PresenceVector() = default;
  explicit PresenceVector(std::size_t n, bool present = true) : bits_(n, present ? 1 : 0) {}

  static PresenceVector all_ones(std::size_t n) { return PresenceVector(n, true); }

  /// 1_{-i}: everything present except object i.
  static PresenceVector drop_one(std::size_t n, std::size_t i) {
    require(i < n, ErrorCode::InvalidArgument, "drop_one: object index out of range");
    PresenceVector b(n, true);
    b.bits_[i] = 0;
    return b;
  }

  PresenceVector drop(std::size_t i) const {
    require(i < size(), ErrorCode::InvalidArgument, "drop: object index out of range");
    PresenceVector b = *this;
    b.bits_[i] = 0;
    return b;
  }

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool present) { bits_.at(i) = present ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), static_cast<unsigned char>(1)));
  }
  bool all() const { return count() == size(); }

  /// Indices of present objects in increasing order.
  std::vector<std::size_t> present_indices() const {
    std::vector<std::size_t> out;
    out.reserve(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(i);
    return out;
  }

  /// Canonical text form, one '0'/'1' per object.
  std::string encode() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  std::uint64_t hash(std::uint64_t seed) const { return hash_string(encode(), seed); }

  friend bool operator==(const PresenceVector&, const PresenceVector&) = default;

 private:
  std::vector<unsigned char> bits_;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Named segment map over a flat parameter vector.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::size_t dim) { add("theta", dim); }

  ParamLayout& add(std::string name, std::size_t length) {
    segments_.push_back(Segment{std::move(name), dim_, length});
    dim_ += length;
    return *this;
  }

  std::size_t dim() const { return dim_; }
  const std::vector<Segment>& segments() const { return segments_; }

  const Segment& segment(const std::string& name) const {
    for (const auto& s : segments_)
      if (s.name == name) return s;
    fail(ErrorCode::InvalidArgument, "unknown parameter segment '" + name + "'");
  }

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    if (a.dim_ != b.dim_ || a.segments_.size() != b.segments_.size()) return false;
    for (std::size_t i = 0; i < a.segments_.size(); ++i) {
      const auto &x = a.segments_[i], &y = b.segments_[i];
      if (x.name != y.name || x.offset != y.offset || x.length != y.length) return false;
    }
    return true;
  }

 private:
  std::vector<Segment> segments_;
  std::size_t dim_ = 0;
};

struct ParamVector {
  Vector theta;
  ParamLayout layout;

  ParamVector() = default;
  ParamVector(Vector t, ParamLayout l) : theta(std::move(t)), layout(std::move(l)) {
    require(static_cast<std::size_t>(theta.size()) == layout.dim(), ErrorCode::InvalidArgument,
            "parameter vector does not match its layout");
  }

  Eigen::Map<const Vector> segment(const std::string& name) const {
    const auto& s = layout.segment(name);
    return {theta.data() + s.offset, static_cast<Eigen::Index>(s.length)};
  }
};

/**
 * A loss over model parameters and an object presence vector.
 *
 * Sub-classes supply value, gradient and Hessian. The unit-term interface
 * (num_terms / term_gradient / term_hvp) must sum to the full gradient and
 * Hessian; it backs minibatch training and stochastic inverse-Hessian
 * products. Parameters owned by absent objects are frozen: gradients and
 * Hessians are zero there and the trainer never moves them.
 */
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t n_objects() const = 0;
  virtual std::size_t dim() const = 0;
  virtual ParamLayout layout() const { return ParamLayout(dim()); }
  virtual bool convex() const { return true; }

  virtual double value(const Vector& theta, const PresenceVector& b) const = 0;
  virtual Vector gradient(const Vector& theta, const PresenceVector& b) const = 0;
  virtual Matrix hessian(const Vector& theta, const PresenceVector& b) const = 0;

  virtual Vector hvp(const Vector& theta, const PresenceVector& b, const Vector& v) const {
    return hessian(theta, b) * v;
  }

  virtual std::size_t num_terms(const PresenceVector&) const { return 1; }
  virtual Vector term_gradient(std::size_t, const Vector& theta, const PresenceVector& b) const {
    return gradient(theta, b);
  }
  virtual Vector term_hvp(std::size_t, const Vector& theta, const PresenceVector& b, const Vector& v) const {
    return hvp(theta, b, v);
  }

  /// grad L(theta, 1) - grad L(theta, 1_{-i}) when the model can exploit terms
  /// that cancel; nullopt selects the generic difference of two gradients.
  virtual std::optional<Vector> delta_gradient(const Vector&, std::size_t) const { return std::nullopt; }

  /// Gradient differences for several objects; models override this when
  /// shared work (risk-set moments, softmaxes) can be hoisted out of the loop.
  virtual std::vector<Vector> delta_gradients(const Vector& theta, std::span<const std::size_t> objects) const {
    std::vector<Vector> out;
    out.reserve(objects.size());
    std::optional<Vector> full;
    for (std::size_t i : objects) {
      require(i < n_objects(), ErrorCode::InvalidArgument, "object index out of range");
      if (auto d = delta_gradient(theta, i)) {
        out.push_back(std::move(*d));
        continue;
      }
      if (!full) full = gradient(theta, full_presence());
      out.push_back(*full - gradient(theta, PresenceVector::drop_one(n_objects(), i)));
    }
    return out;
  }

  virtual std::vector<bool> free_parameters(const PresenceVector&) const {
    return std::vector<bool>(dim(), true);
  }

  virtual Vector initial_params(std::uint64_t) const { return Vector::Zero(static_cast<Eigen::Index>(dim())); }

  /// Copy of the model with its internal randomness re-seeded, or nullptr if
  /// the loss is a deterministic function of (theta, b).
  virtual std::shared_ptr<const LossModel> reseeded(std::uint64_t) const { return nullptr; }

  PresenceVector full_presence() const { return PresenceVector::all_ones(n_objects()); }
};

/// f(theta) whose change under object removal is being attributed.
class TargetFunction {
 public:
  virtual ~TargetFunction() = default;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
};

/// theta -> theta_j.
class CoordinateTarget final : public TargetFunction {
 public:
  CoordinateTarget(std::size_t dim, std::size_t j) : dim_(dim), j_(j) {
    require(j < dim, ErrorCode::InvalidArgument, "coordinate target out of range");
  }
  double value(const Vector& theta) const override { return theta[static_cast<Eigen::Index>(j_)]; }
  Vector gradient(const Vector&) const override {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(dim_));
    g[static_cast<Eigen::Index>(j_)] = 1.0;
    return g;
  }

 private:
  std::size_t dim_;
  std::size_t j_;
};

class ConstantTarget final : public TargetFunction {
 public:
  ConstantTarget(std::size_t dim, double c) : dim_(dim), c_(c) {}
  double value(const Vector&) const override { return c_; }
  Vector gradient(const Vector&) const override { return Vector::Zero(static_cast<Eigen::Index>(dim_)); }

 private:
  std::size_t dim_;
  double c_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Optimizer { Newton, GradientDescent, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Newton;
  double learning_rate = 0.01;
  int epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  double weight_decay = 0.0;
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0, ErrorCode::ConfigError, "learning_rate must be > 0");
    require(epochs >= 1, ErrorCode::ConfigError, "epochs must be >= 1");
    require(weight_decay >= 0.0, ErrorCode::ConfigError, "weight_decay must be >= 0");
    require(grad_tol >= 0.0, ErrorCode::ConfigError, "grad_tol must be >= 0");
  }
};

struct TrainResult {
  ParamVector params;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct Objective {
  const LossModel& model;
  const PresenceVector& b;
  double weight_decay;
  std::vector<bool> free;

  double value(const Vector& theta) const {
    double v = model.value(theta, b);
    if (weight_decay > 0.0) {
      double sq = 0.0;
      for (Eigen::Index j = 0; j < theta.size(); ++j)
        if (free[static_cast<std::size_t>(j)]) sq += theta[j] * theta[j];
      v += 0.5 * weight_decay * sq;
    }
    return v;
  }

  void mask(Vector& g) const {
    for (Eigen::Index j = 0; j < g.size(); ++j)
      if (!free[static_cast<std::size_t>(j)]) g[j] = 0.0;
  }

  Vector gradient(const Vector& theta) const {
    Vector g = model.gradient(theta, b);
    if (weight_decay > 0.0) g += weight_decay * theta;
    mask(g);
    return g;
  }

  Vector batch_gradient(const Vector& theta, std::span<const std::size_t> terms, std::size_t total) const {
    Vector g = Vector::Zero(theta.size());
    for (std::size_t t : terms) g += model.term_gradient(t, theta, b);
    g *= static_cast<double>(total) / static_cast<double>(terms.size());
    if (weight_decay > 0.0) g += weight_decay * theta;
    mask(g);
    return g;
  }
};

inline void check_finite_loss(double v, int iteration) {
  if (!std::isfinite(v)) {
    fail(ErrorCode::NonFinite, "loss became non-finite at iteration " + std::to_string(iteration) +
                                   " (learning rate too high?)");
  }
}

/// Damped Newton with backtracking. The damping grows whenever the restricted
/// Hessian is indefinite or a step fails to decrease the objective, and
/// shrinks after successful steps, so convex problems take pure Newton steps.
inline int newton(const Objective& obj, Vector& theta, double grad_tol, int max_iter) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < obj.free.size(); ++j)
    if (obj.free[j]) idx.push_back(static_cast<Eigen::Index>(j));
  const auto m = static_cast<Eigen::Index>(idx.size());

  double mu = obj.model.convex() ? 0.0 : 1e-6;
  double f = obj.value(theta);
  check_finite_loss(f, 0);
  int it = 0;
  int stalled = 0;
  for (; it < max_iter; ++it) {
    const Vector g = obj.gradient(theta);
    if (g.norm() <= grad_tol) return it;
    Matrix h_full = obj.model.hessian(theta, obj.b);
    Matrix h(m, m);
    Vector gf(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      gf[a] = g[idx[static_cast<std::size_t>(a)]];
      for (Eigen::Index c = 0; c < m; ++c) h(a, c) = h_full(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    }
    if (obj.weight_decay > 0.0) h.diagonal().array() += obj.weight_decay;
    h = 0.5 * (h + h.transpose());
    const double hscale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());

    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Matrix damped = h;
      damped.diagonal().array() += mu;
      Eigen::LLT<Matrix> llt(damped);
      if (llt.info() != Eigen::Success) {
        mu = std::max(mu * 10.0, 1e-8 * hscale);
        continue;
      }
      const Vector step = llt.solve(-gf);
      const double slope = gf.dot(step);
      if (!(slope < 0.0) || !step.allFinite()) {
        mu = std::max(mu * 10.0, 1e-8 * hscale);
        continue;
      }
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        Vector trial = theta;
        for (Eigen::Index a = 0; a < m; ++a) trial[idx[static_cast<std::size_t>(a)]] += t * step[a];
        const double ft = obj.value(trial);
        if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) {
          stalled = (f - ft <= 1e-15 * std::max(1.0, std::abs(f))) ? stalled + 1 : 0;
          theta = std::move(trial);
          f = ft;
          accepted = true;
          break;
        }
      }
      if (accepted) {
        if (t == 1.0) mu *= 0.1;
        if (mu < 1e-12 * hscale) mu = obj.model.convex() ? 0.0 : 1e-12 * hscale;
      } else {
        mu = std::max(mu * 10.0, 1e-8 * hscale);
      }
    }
    // At the floating point floor successive steps no longer change f.
    if (!accepted || stalled >= 3) return it + 1;
  }
  return it;
}

}  // namespace detail

/// Minimizes L(theta, b) + weight_decay/2 * |theta_free|^2.
inline TrainResult train(const LossModel& model, const PresenceVector& b, const TrainConfig& cfg,
                         std::optional<Vector> init = std::nullopt, int max_newton_iter = 100) {
  cfg.validate();
  require(b.size() == model.n_objects(), ErrorCode::InvalidArgument, "presence vector length mismatch");
  Vector theta = init ? *init : model.initial_params(cfg.seed);
  require(static_cast<std::size_t>(theta.size()) == model.dim(), ErrorCode::InvalidArgument,
          "initial parameters have the wrong dimension");

  detail::Objective obj{model, b, cfg.weight_decay, model.free_parameters(b)};
  TrainResult out;

  switch (cfg.optimizer) {
    case Optimizer::Newton:
      out.iterations = detail::newton(obj, theta, cfg.grad_tol, max_newton_iter);
      break;
    case Optimizer::GradientDescent:
    case Optimizer::Adam: {
      const bool adam = cfg.optimizer == Optimizer::Adam;
      const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
      Vector m1 = Vector::Zero(theta.size()), m2 = Vector::Zero(theta.size());
      const std::size_t total = model.num_terms(b);
      const bool full = cfg.batch_size == 0 || cfg.batch_size >= total;
      std::vector<std::size_t> order(total);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(cfg.seed ^ 0x5eedba7cULL);
      long step = 0;
      for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!full) {
          for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        }
        const std::size_t bs = full ? std::max<std::size_t>(total, 1) : cfg.batch_size;
        const std::size_t batches = full ? 1 : (total + bs - 1) / bs;
        for (std::size_t k = 0; k < batches; ++k) {
          Vector g;
          if (full) {
            g = obj.gradient(theta);
          } else {
            const std::size_t start = k * bs;
            const std::size_t end = std::min(total, start + bs);
            g = obj.batch_gradient(theta, std::span<const std::size_t>(order).subspan(start, end - start), total);
          }
          if (!g.allFinite()) detail::check_finite_loss(std::numeric_limits<double>::quiet_NaN(), epoch);
          ++step;
          if (adam) {
            m1 = beta1 * m1 + (1.0 - beta1) * g;
            m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
          } else {
            theta -= cfg.learning_rate * g;
          }
        }
        detail::check_finite_loss(theta.allFinite() ? 0.0 : std::numeric_limits<double>::quiet_NaN(), epoch);
        out.iterations = epoch + 1;
      }
      break;
    }
  }

  out.loss = obj.value(theta);
  detail::check_finite_loss(out.loss, out.iterations);
  out.grad_norm = obj.gradient(theta).norm();
  out.converged = out.grad_norm <= cfg.grad_tol;
  if (!out.converged) {
    log::info("train(", model.name(), "): gradient norm ", out.grad_norm, " above tolerance ", cfg.grad_tol);
  }
  out.params = ParamVector(std::move(theta), model.layout());
  return out;
}

// ---------------------------------------------------------------------------
// Derivative checks
// ---------------------------------------------------------------------------

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
inline double check_gradient(const LossModel& model, const Vector& theta, const PresenceVector& b,
                             double h = 1e-5) {
  require(h > 0.0, ErrorCode::InvalidArgument, "check_gradient: step must be positive");
  const Vector g = model.gradient(theta, b);
  double worst = 0.0;
  Vector probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + h;
    const double fp = model.value(probe, b);
    probe[j] = theta[j] - h;
    const double fm = model.value(probe, b);
    probe[j] = theta[j];
    worst = std::max(worst, relative_error(g[j], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

/// Same measure, differencing the analytic gradient column by column.
inline double check_hessian(const LossModel& model, const Vector& theta, const PresenceVector& b,
                            double h = 1e-5) {
  require(h > 0.0, ErrorCode::InvalidArgument, "check_hessian: step must be positive");
  const Matrix hess = model.hessian(theta, b);
  double worst = 0.0;
  Vector probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + h;
    const Vector gp = model.gradient(probe, b);
    probe[j] = theta[j] - h;
    const Vector gm = model.gradient(probe, b);
    probe[j] = theta[j];
    const Vector col = (gp - gm) / (2.0 * h);
    for (Eigen::Index i = 0; i < theta.size(); ++i) worst = std::max(worst, relative_error(hess(i, j), col[i]));
  }
  return worst;
}

}  // namespace vif
