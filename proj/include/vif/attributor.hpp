#pragma once

/**
 * @file
 * @brief Influence of removing one object from a non-decomposable loss,
 * the finite-difference influence function over mixtures, the classical
 * M-estimator influence function, and target attribution.
 *
 * For object i the parameter influence is
 *
 *   VIF(i) = -[(1/n) H + lambda I]^{-1} (grad L(theta, 1) - grad L(theta, 1_{-i})),
 *
 * with H the Hessian of L(., 1) at the full-data optimum and n the number of
 * objects. It approximates n (theta(1_{-i}) - theta(1)) up to sign:
 * VIF(i) ~ n (theta(1) - theta(1_{-i})).
 */

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vif/decomposable.hpp"
#include "vif/errors.hpp"
#include "vif/log.hpp"
#include "vif/losscore.hpp"
#include "vif/numkit.hpp"

namespace vif {

enum class SolverKind { Explicit, CG, LiSSA };

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::Explicit: return "explicit";
    case SolverKind::CG: return "cg";
    case SolverKind::LiSSA: return "lissa";
  }
  return "?";
}

inline SolverKind parse_solver(const std::string& s) {
  if (s == "explicit") return SolverKind::Explicit;
  if (s == "cg") return SolverKind::CG;
  if (s == "lissa") return SolverKind::LiSSA;
  fail(ErrorCode::ConfigError, "unknown solver '" + s + "' (expected explicit, cg or lissa)");
}

struct SolverSpec {
  SolverKind kind = SolverKind::Explicit;
  std::optional<double> damping;  // unset: 0 for convex models, 1e-3 otherwise
  double cg_tol = 1e-8;
  int cg_max_iter = 0;            // 0 = 10 * dim
  int lissa_depth = 1000;
  double lissa_scale = 0.0;       // 0 = 10 * (1 + lambda)
  std::size_t lissa_batch = 1;
  std::uint64_t lissa_seed = 0;

  double resolved_damping(const LossModel& model) const {
    if (damping) return *damping;
    return model.convex() ? 0.0 : 1e-3;
  }
};

/// Counts Hessian set-ups (assembly + factorization, or operator
/// binding for the iterative solvers) process-wide.
inline std::atomic<long>& hessian_setup_counter() {
  static std::atomic<long> counter{0};
  return counter;
}

/// Applies [(1/n) H + lambda I]^{-1} for H = Hessian of L(., 1) at theta.
/// Immutable after construction; safe to share between threads.
class InverseHessian {
 public:
  InverseHessian(const LossModel& model, Vector theta, SolverSpec spec)
      : model_(model), theta_(std::move(theta)), spec_(spec), damping_(spec.resolved_damping(model)),
        n_(static_cast<double>(model.n_objects())) {
    require(static_cast<std::size_t>(theta_.size()) == model.dim(), ErrorCode::InvalidArgument,
            "theta has wrong dimension");
    require(damping_ >= 0.0, ErrorCode::InvalidArgument, "damping must be >= 0");
    require(model.convex() || damping_ > 0.0, ErrorCode::InvalidArgument,
            "model " + model.name() + " is not convex; damping must be > 0");
    const PresenceVector full = model.full_presence();
    if (spec_.kind == SolverKind::Explicit) {
      const Matrix h = model.hessian(theta_, full) / n_;
      fact_.compute(0.5 * (h + h.transpose()), damping_);
    }
    if (spec_.kind == SolverKind::LiSSA) num_terms_ = model.num_terms(full);
    hessian_setup_counter().fetch_add(1);
  }

  const SolverSpec& spec() const { return spec_; }
  double damping() const { return damping_; }
  const Vector& theta() const { return theta_; }

  Vector apply(const Vector& rhs) const {
    const PresenceVector full = model_.full_presence();
    switch (spec_.kind) {
      case SolverKind::Explicit:
        return fact_.solve(rhs);
      case SolverKind::CG: {
        const auto res = cg_solve([&](const Vector& v) { return Vector(model_.hvp(theta_, full, v) / n_); }, rhs,
                                  damping_, spec_.cg_tol, spec_.cg_max_iter);
        if (!res.converged) {
          log::info("cg: stopped after ", res.iterations, " iterations at relative residual ", res.relative_residual);
        }
        return res.x;
      }
      case SolverKind::LiSSA: {
        const double share = static_cast<double>(num_terms_) / n_;
        LissaSampler sampler{num_terms_, [&](std::size_t j, const Vector& v) {
                               return Vector(share * model_.term_hvp(j, theta_, full, v));
                             }};
        LissaOptions opt;
        opt.num_terms = spec_.lissa_depth;
        opt.scale = spec_.lissa_scale;
        opt.damping = damping_;
        opt.batch = spec_.lissa_batch;
        opt.seed = spec_.lissa_seed;
        return lissa_solve(sampler, opt, rhs);
      }
    }
    return rhs;
  }

 private:
  const LossModel& model_;
  Vector theta_;
  SolverSpec spec_;
  double damping_;
  double n_;
  SpdFactorization fact_;
  std::size_t num_terms_ = 1;
};

/// grad L(theta, 1) - grad L(theta, 1_{-i}); uses the model's cancellation
/// when it has one.
inline Vector gradient_difference(const LossModel& model, const Vector& theta, std::size_t i) {
  require(i < model.n_objects(), ErrorCode::InvalidArgument, "object index out of range");
  if (auto d = model.delta_gradient(theta, i)) return *d;
  return model.gradient(theta, model.full_presence()) -
         model.gradient(theta, PresenceVector::drop_one(model.n_objects(), i));
}

/// Logs when theta is visibly not a stationary point of L(., 1).
inline double check_stationary(const LossModel& model, const Vector& theta) {
  const double g = model.gradient(theta, model.full_presence()).norm();
  const double limit = 1e-3 * std::sqrt(static_cast<double>(model.dim()));
  if (g > limit) log::info("vif: |grad L(theta, 1)| = ", g, " exceeds ", limit, "; theta may not be an optimum");
  return g;
}

inline Vector vif_params(const LossModel& model, const InverseHessian& inv, std::size_t i) {
  const Vector d = gradient_difference(model, inv.theta(), i);
  Vector out = -inv.apply(d);
  require(out.allFinite(), ErrorCode::NonFinite, "vif: non-finite influence for object " + std::to_string(i));
  return out;
}

inline Vector vif_params(const LossModel& model, const Vector& theta, std::size_t i, const SolverSpec& spec = {}) {
  check_stationary(model, theta);
  return vif_params(model, InverseHessian(model, theta, spec), i);
}

/// VIF for several objects sharing one Hessian set-up.
inline std::vector<Vector> vif_params_all(const LossModel& model, const Vector& theta,
                                          std::span<const std::size_t> objects, const SolverSpec& spec = {}) {
  check_stationary(model, theta);
  const InverseHessian inv(model, theta, spec);
  std::vector<Vector> out = model.delta_gradients(theta, objects);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = -inv.apply(out[k]);
    require(out[k].allFinite(), ErrorCode::NonFinite, "vif: non-finite influence for object " + std::to_string(objects[k]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference influence over mixtures of the empirical distribution
// ---------------------------------------------------------------------------

enum class MixtureKind {
  PointMass,  // delta at object i
  DropOne,    // uniform over every object except i
  Empirical,  // P itself (zero direction)
};

struct MixtureDirection {
  MixtureKind kind = MixtureKind::Empirical;
  std::size_t index = 0;

  static MixtureDirection point_mass(std::size_t i) { return {MixtureKind::PointMass, i}; }
  static MixtureDirection drop_one(std::size_t i) { return {MixtureKind::DropOne, i}; }
  static MixtureDirection empirical() { return {MixtureKind::Empirical, 0}; }

  std::vector<double> weights(std::size_t n) const {
    std::vector<double> q(n, 0.0);
    switch (kind) {
      case MixtureKind::PointMass:
        require(index < n, ErrorCode::InvalidArgument, "mixture index out of range");
        q[index] = 1.0;
        break;
      case MixtureKind::DropOne:
        require(index < n && n >= 2, ErrorCode::InvalidArgument, "mixture index out of range");
        for (std::size_t j = 0; j < n; ++j) q[j] = j == index ? 0.0 : 1.0 / static_cast<double>(n - 1);
        break;
      case MixtureKind::Empirical:
        for (double& x : q) x = 1.0 / static_cast<double>(n);
        break;
    }
    return q;
  }
};

/// -[Hess L(theta, P)]^{-1} (grad L(theta, (1-eps) P + eps Q) - grad L(theta, P)) / eps,
/// P the empirical distribution.
inline Vector finite_difference_if(const MeasureLoss& loss, const Vector& theta, const MixtureDirection& q,
                                   double eps, double damping = 0.0) {
  require(eps != 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument, "finite-difference step must be nonzero");
  const std::size_t n = loss.n_points();
  const std::vector<double> p(n, 1.0 / static_cast<double>(n));
  const std::vector<double> qw = q.weights(n);
  std::vector<double> mix(n);
  for (std::size_t j = 0; j < n; ++j) mix[j] = (1.0 - eps) * p[j] + eps * qw[j];
  const Vector diff = (loss.gradient(theta, mix) - loss.gradient(theta, p)) / eps;
  if (diff.squaredNorm() == 0.0) return Vector::Zero(theta.size());
  const Matrix h = loss.hessian(theta, p);
  return -solve_spd(0.5 * (h + h.transpose()), diff, damping);
}

/// -[sum_j Hess l(theta; z_j)]^{-1} grad l(theta; z_i).
inline Vector classical_if(const DecomposableModel& model, const Vector& theta, std::size_t i) {
  require(i < model.n_points(), ErrorCode::InvalidArgument, "point index out of range");
  const Vector g = model.point_gradient(theta, i);
  if (g.squaredNorm() == 0.0) return Vector::Zero(theta.size());
  return -solve_spd(model.total_hessian(theta), g);
}

// ---------------------------------------------------------------------------
// Target attribution
// ---------------------------------------------------------------------------

struct InfluenceRecord {
  std::size_t object_id = 0;
  std::size_t test_id = 0;
  double vif_score = 0.0;
  std::optional<double> loo_score;
};

/// score(i) = grad f(theta)^T VIF(i) for every object in `objects`.
inline std::vector<InfluenceRecord> attribute_target(const LossModel& model, const Vector& theta,
                                                     const TargetFunction& target,
                                                     std::span<const std::size_t> objects,
                                                     const SolverSpec& spec = {}, std::size_t test_id = 0) {
  const Vector gf = target.gradient(theta);
  const auto vifs = vif_params_all(model, theta, objects, spec);
  std::vector<InfluenceRecord> out;
  out.reserve(objects.size());
  for (std::size_t k = 0; k < objects.size(); ++k) out.push_back({objects[k], test_id, gf.dot(vifs[k]), std::nullopt});
  return out;
}

/// Records for every (object, target) pair, ordered by object then test.
/// The parameter influence of each object is computed once.
inline std::vector<InfluenceRecord> attribute_targets(const LossModel& model, const Vector& theta,
                                                      std::span<const TargetFunction* const> targets,
                                                      std::span<const std::size_t> objects,
                                                      const SolverSpec& spec = {}) {
  std::vector<Vector> grads;
  grads.reserve(targets.size());
  for (const auto* t : targets) grads.push_back(t->gradient(theta));
  const auto vifs = vif_params_all(model, theta, objects, spec);
  std::vector<InfluenceRecord> out;
  out.reserve(objects.size() * targets.size());
  for (std::size_t k = 0; k < objects.size(); ++k)
    for (std::size_t t = 0; t < targets.size(); ++t) out.push_back({objects[k], t, grads[t].dot(vifs[k]), std::nullopt});
  return out;
}

}  // namespace vif
