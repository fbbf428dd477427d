#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vif/harness.hpp"

using namespace vif;

TEST(Logistic, PointLossMatchesFormula) {
  Matrix x(1, 2);
  x << 1.0, -2.0;
  Vector y(1);
  y << -1.0;
  const LogisticModel m(x, y, 0.5);
  Vector t(2);
  t << 0.3, 0.1;
  // margin = y x.t = -(0.3 - 0.2) = -0.1
  const double expect = std::log1p(std::exp(0.1)) + 0.25 * t.squaredNorm();
  EXPECT_NEAR(m.point_value(t, 0), expect, 1e-15);
}

TEST(Logistic, DerivativesMatchFiniteDifferences) {
  const auto fx = logistic_fixture(30, 4, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Vector t = oracle::random_vector(4, 50 + s);
    PresenceVector b = fx.loss->full_presence();
    b.set(s * 3, false);
    EXPECT_LT(check_gradient(*fx.loss, t, b), 1e-6);
    EXPECT_LT(check_hessian(*fx.loss, t, b), 1e-6);
    const Vector g_ref = oracle::numeric_gradient([&](const Vector& v) { return fx.points->point_value(v, 1); }, t);
    EXPECT_LT(oracle::max_rel(fx.points->point_gradient(t, 1), g_ref), 1e-7);
  }
}

TEST(SumOfPoints, MaskEqualsDeletion) {
  const auto fx = logistic_fixture(12, 3, 8);
  const Vector t = oracle::random_vector(3, 1);
  const std::size_t i = 5;
  Matrix xd(11, 3);
  Vector yd(11);
  for (Eigen::Index r = 0, k = 0; r < 12; ++r) {
    if (r == static_cast<Eigen::Index>(i)) continue;
    xd.row(k) = fx.points->features().row(r);
    yd[k++] = fx.points->labels()[r];
  }
  const SumOfPointsLoss deleted(std::make_shared<const LogisticModel>(xd, yd, fx.points->ridge()));
  const auto b = PresenceVector::drop_one(12, i);
  EXPECT_NEAR(fx.loss->value(t, b), deleted.value(t, deleted.full_presence()), 1e-12);
  EXPECT_LT((fx.loss->gradient(t, b) - deleted.gradient(t, deleted.full_presence())).norm(), 1e-12);
}

TEST(SumOfPoints, TermsSumToFull) {
  const auto fx = logistic_fixture(9, 3, 2);
  const Vector t = oracle::random_vector(3, 4), v = oracle::random_vector(3, 5);
  const auto b = PresenceVector::drop_one(9, 4);
  Vector g = Vector::Zero(3), hv = Vector::Zero(3);
  for (std::size_t j = 0; j < fx.loss->num_terms(b); ++j) {
    g += fx.loss->term_gradient(j, t, b);
    hv += fx.loss->term_hvp(j, t, b, v);
  }
  EXPECT_LT((g - fx.loss->gradient(t, b)).norm(), 1e-12);
  EXPECT_LT((hv - fx.loss->hessian(t, b) * v).norm(), 1e-12);
}

TEST(PresenceMeasure, UniformSubsetIsRealizable) {
  const std::vector<double> w{0.5, 0.0, 0.5};
  EXPECT_EQ(PresenceMeasureLoss::support(w).encode(), "101");
}

TEST(PresenceMeasure, NonUniformIsUnrealizable) {
  const std::vector<double> w{0.7, 0.0, 0.3};
  try {
    PresenceMeasureLoss::support(w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnrealizableMixture);
  }
}

TEST(ExpectedPointLoss, IsLinearInWeights) {
  const auto fx = logistic_fixture(5, 2, 1);
  const ExpectedPointLoss loss(fx.points);
  const Vector t = oracle::random_vector(2, 3);
  const std::vector<double> a{1, 0, 0, 0, 0}, b{0, 0, 1, 0, 0}, ab{0.25, 0, 0.75, 0, 0};
  EXPECT_LT((loss.gradient(t, ab) - 0.25 * loss.gradient(t, a) - 0.75 * loss.gradient(t, b)).norm(), 1e-14);
}
