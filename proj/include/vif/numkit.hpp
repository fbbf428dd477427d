#pragma once

/**
 * @file
 * @brief Dense linear algebra used throughout: damped SPD solves with an LU
 * fallback, conjugate gradients over an operator, the LiSSA recursion, and
 * correlation helpers.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>

#include "vif/errors.hpp"
#include "vif/rng.hpp"

namespace vif {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// max |A - A^T| <= tol * max |A|
inline bool is_symmetric(const Matrix& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline constexpr double kMaxConditionNumber = 1e14;

/// Factorization of A + damping*I, reusable across right-hand sides.
/// Cholesky is tried first; an indefinite system drops to partial-pivot LU.
class SpdFactorization {
 public:
  SpdFactorization() = default;

  SpdFactorization(const Matrix& a, double damping) { compute(a, damping); }

  void compute(const Matrix& a, double damping) {
    require(a.rows() == a.cols(), ErrorCode::InvalidArgument, "solve_spd: matrix is not square");
    require(damping >= 0.0, ErrorCode::InvalidArgument, "solve_spd: damping must be >= 0");
    require(is_symmetric(a), ErrorCode::InvalidArgument, "solve_spd: matrix is not symmetric");
    require(a.allFinite(), ErrorCode::NonFinite, "solve_spd: matrix has non-finite entries");
    damped_ = a;
    damped_.diagonal().array() += damping;
    const auto n = damped_.rows();
    if (n == 0) {
      impl_ = std::monostate{};
      return;
    }

    Eigen::LLT<Matrix> llt(damped_);
    if (llt.info() == Eigen::Success && llt.rcond() > 1.0 / kMaxConditionNumber) {
      impl_ = std::move(llt);
      return;
    }
    Eigen::PartialPivLU<Matrix> lu(damped_);
    // Eigen's estimate can come back as 1 for an exactly zero pivot, so
    // take the pivot ratio of U as a second opinion.
    const Vector pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double pivot_ratio = pivots.maxCoeff() > 0.0 ? pivots.minCoeff() / pivots.maxCoeff() : 0.0;
    const double rcond = std::min(lu.rcond(), pivot_ratio);
    if (!(rcond > 1.0 / kMaxConditionNumber)) {
      fail(ErrorCode::SingularMatrix,
           "damped system is numerically singular (rcond=" + std::to_string(rcond) + ")");
    }
    impl_ = std::move(lu);
  }

  bool used_cholesky() const { return std::holds_alternative<Eigen::LLT<Matrix>>(impl_); }
  Eigen::Index dim() const { return damped_.rows(); }

  /// One step of iterative refinement keeps the residual near machine precision
  /// for moderately conditioned systems.
  Vector solve(const Vector& rhs) const {
    require(rhs.size() == damped_.rows(), ErrorCode::InvalidArgument, "solve_spd: dimension mismatch");
    if (rhs.size() == 0) return rhs;
    Vector x = raw_solve(rhs);
    const Vector r = rhs - damped_ * x;
    x += raw_solve(r);
    require(x.allFinite(), ErrorCode::SingularMatrix, "solve_spd produced non-finite values");
    return x;
  }

  Matrix solve(const Matrix& rhs) const {
    Matrix out(rhs.rows(), rhs.cols());
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) out.col(c) = solve(Vector(rhs.col(c)));
    return out;
  }

 private:
  Vector raw_solve(const Vector& rhs) const {
    if (const auto* llt = std::get_if<Eigen::LLT<Matrix>>(&impl_)) return llt->solve(rhs);
    if (const auto* lu = std::get_if<Eigen::PartialPivLU<Matrix>>(&impl_)) return lu->solve(rhs);
    return rhs;
  }

  Matrix damped_;
  std::variant<std::monostate, Eigen::LLT<Matrix>, Eigen::PartialPivLU<Matrix>> impl_;
};

/// Solves (A + damping*I) x = rhs.
inline Vector solve_spd(const Matrix& a, const Vector& rhs, double damping = 0.0) {
  return SpdFactorization(a, damping).solve(rhs);
}

using LinearOperator = std::function<Vector(const Vector&)>;

struct IterativeResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients on (A + damping*I) x = rhs. Non-convergence is
/// reported in the result, never thrown.
inline IterativeResult cg_solve(const LinearOperator& apply_a, const Vector& rhs, double damping,
                                double tol = 1e-8, int max_iter = 0) {
  const auto d = rhs.size();
  if (max_iter <= 0) max_iter = static_cast<int>(10 * std::max<Eigen::Index>(d, 1));
  IterativeResult out;
  out.x = Vector::Zero(d);
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }
  auto apply = [&](const Vector& v) -> Vector { return apply_a(v) + damping * v; };

  Vector r = rhs;
  Vector p = r;
  double rs = r.squaredNorm();
  for (int it = 1; it <= max_iter; ++it) {
    const Vector ap = apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) {
      // Operator is not positive definite along p; stop with what we have.
      out.iterations = it - 1;
      break;
    }
    const double alpha = rs / curvature;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    out.iterations = it;
    if (std::sqrt(rs_new) <= tol * rhs_norm) {
      rs = rs_new;
      break;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  out.relative_residual = (rhs - apply(out.x)).norm() / rhs_norm;
  out.converged = out.relative_residual <= tol;
  return out;
}

/// Source of Hessian-vector products for LiSSA. hvp(j, v) returns H_j v for
/// unit term j, scaled so that averaging over j uniformly gives the full
/// Hessian; num_terms == 1 means the full (non-stochastic) operator.
struct LissaSampler {
  std::size_t num_terms = 1;
  std::function<Vector(std::size_t, const Vector&)> hvp;
};

struct LissaOptions {
  int num_terms = 100;   // recursion depth T
  double scale = 0.0;    // sigma; <= 0 selects 10 * (1 + damping)
  double damping = 0.0;  // lambda
  std::size_t batch = 1; // terms averaged per step
  std::uint64_t seed = 0;
};

/// r_0 = rhs, r_{t+1} = rhs + (I - (H_j + lambda I) / sigma) r_t; returns r_T / sigma.
inline Vector lissa_solve(const LissaSampler& sampler, const LissaOptions& opt, const Vector& rhs) {
  require(sampler.num_terms >= 1 && static_cast<bool>(sampler.hvp), ErrorCode::InvalidArgument,
          "lissa_solve: sampler has no terms");
  require(opt.num_terms >= 0, ErrorCode::InvalidArgument, "lissa_solve: negative recursion depth");
  require(opt.batch >= 1, ErrorCode::InvalidArgument, "lissa_solve: batch must be >= 1");
  const double sigma = opt.scale > 0.0 ? opt.scale : 10.0 * (1.0 + opt.damping);
  Rng rng(opt.seed);
  const double limit = 1e8 * rhs.norm();
  Vector r = rhs;
  for (int t = 0; t < opt.num_terms; ++t) {
    Vector hr = opt.damping * r;
    if (sampler.num_terms == 1) {
      hr += sampler.hvp(0, r);
    } else {
      for (std::size_t s = 0; s < opt.batch; ++s)
        hr += sampler.hvp(static_cast<std::size_t>(rng.below(sampler.num_terms)), r) / static_cast<double>(opt.batch);
    }
    r = rhs + r - hr / sigma;
    if (!r.allFinite() || r.norm() > limit) {
      fail(ErrorCode::Diverged, "LiSSA recursion diverged at step " + std::to_string(t + 1) +
                                    "; increase the scale");
    }
  }
  return r / sigma;
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::InvalidArgument, "pearson: length mismatch");
  require(a.size() >= 2, ErrorCode::InvalidArgument, "pearson: need at least two samples");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, ErrorCode::DegenerateInput, "pearson: constant input");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::InvalidArgument, "cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  require(aa > 0.0 && bb > 0.0, ErrorCode::DegenerateInput, "cosine: zero vector");
  return ab / std::sqrt(aa * bb);
}

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace vif
