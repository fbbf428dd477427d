#pragma once

// Independent reference computations used by several test files. Nothing
// here calls into the library's solvers.

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "vif/numkit.hpp"
#include "vif/rng.hpp"

namespace oracle {

using vif::Matrix;
using vif::Vector;

/// Gauss-Jordan elimination with partial pivoting on a copied tableau.
inline Vector gauss_jordan(Matrix a, Vector b) {
  const auto n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    std::swap(b[c], b[piv]);
    const double d = a(c, c);
    a.row(c) /= d;
    b[c] /= d;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      a.row(r) -= f * a.row(c);
      b[r] -= f * b[c];
    }
  }
  return b;
}

inline Matrix random_spd(Eigen::Index n, std::uint64_t seed, double shift = 0.5) {
  vif::Rng rng(seed);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  return g * g.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
}

inline Vector random_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  vif::Rng rng(seed);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

/// Central-difference gradient of a scalar function.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  Vector p = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    p[j] = x[j] + h;
    const double fp = f(p);
    p[j] = x[j] - h;
    const double fm = f(p);
    p[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_rel(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace oracle
