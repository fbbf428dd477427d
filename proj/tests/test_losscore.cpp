#include <gtest/gtest.h>

#include <memory>
#include <numeric>

#include "oracles.hpp"
#include "vif/decomposable.hpp"
#include "vif/losscore.hpp"

using namespace vif;

namespace {

std::shared_ptr<const QuadraticModel> quadratic(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(oracle::random_vector(static_cast<Eigen::Index>(d), seed + i));
  return std::make_shared<const QuadraticModel>(std::move(pts));
}

Vector mean_of(const QuadraticModel& q, const PresenceVector& b) {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(q.dim()));
  for (std::size_t i : b.present_indices()) m += q.point(i);
  return m / static_cast<double>(b.count());
}

}  // namespace

TEST(PresenceVector, DropOneAndEncode) {
  const auto b = PresenceVector::drop_one(4, 2);
  EXPECT_EQ(b.encode(), "1101");
  EXPECT_EQ(b.count(), 3u);
  EXPECT_FALSE(b.all());
  EXPECT_EQ(b.present_indices(), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_EQ(b.drop(0).encode(), "0101");
  EXPECT_TRUE(PresenceVector::all_ones(3).all());
}

TEST(PresenceVector, OutOfRangeIsInvalid) {
  try {
    PresenceVector::drop_one(3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(PresenceVector, HashDependsOnBits) {
  EXPECT_NE(PresenceVector::drop_one(5, 1).hash(7), PresenceVector::drop_one(5, 2).hash(7));
  EXPECT_EQ(PresenceVector::drop_one(5, 1).hash(7), PresenceVector::drop_one(5, 1).hash(7));
}

TEST(ParamLayout, SegmentsAreContiguous) {
  ParamLayout l;
  l.add("a", 3).add("b", 2);
  EXPECT_EQ(l.dim(), 5u);
  EXPECT_EQ(l.segment("b").offset, 3u);
  Vector t(5);
  t << 1, 2, 3, 4, 5;
  const ParamVector p(t, l);
  EXPECT_EQ(p.segment("b")[1], 5.0);
  EXPECT_THROW(l.segment("c"), Error);
  EXPECT_THROW(ParamVector(Vector::Zero(4), l), Error);
}

TEST(Train, NewtonFindsMeanOfPresentPoints) {
  const auto q = quadratic(7, 3, 1);
  const SumOfPointsLoss loss(q);
  for (std::size_t drop : {0u, 3u, 6u}) {
    const auto b = PresenceVector::drop_one(7, drop);
    const auto r = train(loss, b, TrainConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.params.theta - mean_of(*q, b)).norm(), 1e-10);
  }
}

TEST(Train, GradientDescentAndAdamApproachNewton) {
  const auto q = quadratic(10, 2, 5);
  const SumOfPointsLoss loss(q);
  const auto b = loss.full_presence();
  TrainConfig gd;
  gd.optimizer = Optimizer::GradientDescent;
  gd.learning_rate = 0.01;
  gd.epochs = 500;
  EXPECT_LT((train(loss, b, gd).params.theta - mean_of(*q, b)).norm(), 1e-6);
  TrainConfig adam;
  adam.optimizer = Optimizer::Adam;
  adam.learning_rate = 0.05;
  adam.epochs = 3000;
  adam.batch_size = 3;
  EXPECT_LT((train(loss, b, adam).params.theta - mean_of(*q, b)).norm(), 0.1);
}

TEST(Train, SameSeedSameResult) {
  const auto q = quadratic(10, 2, 9);
  const SumOfPointsLoss loss(q);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::Adam;
  cfg.batch_size = 4;
  cfg.epochs = 50;
  cfg.seed = 42;
  const auto a = train(loss, loss.full_presence(), cfg);
  const auto b = train(loss, loss.full_presence(), cfg);
  EXPECT_EQ(a.params.theta, b.params.theta);
}

TEST(Train, RejectsBadConfig) {
  const auto q = quadratic(3, 2, 1);
  const SumOfPointsLoss loss(q);
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  try {
    train(loss, loss.full_presence(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Train, OverflowIsNonFinite) {
  const auto q = quadratic(3, 2, 1);
  const SumOfPointsLoss loss(q);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::GradientDescent;
  cfg.learning_rate = 10.0;  // step 10 * 2n overshoots geometrically
  cfg.epochs = 2000;
  try {
    train(loss, loss.full_presence(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(DerivativeChecks, DetectWrongGradient) {
  // A deliberately wrong model: gradient off by a factor of two.
  struct Broken final : LossModel {
    std::string name() const override { return "broken"; }
    std::size_t n_objects() const override { return 1; }
    std::size_t dim() const override { return 2; }
    double value(const Vector& t, const PresenceVector&) const override { return t.squaredNorm(); }
    Vector gradient(const Vector& t, const PresenceVector&) const override { return 4.0 * t; }
    Matrix hessian(const Vector&, const PresenceVector&) const override { return 2.0 * Matrix::Identity(2, 2); }
  } broken;
  const Vector t = Vector::Ones(2);
  EXPECT_GT(check_gradient(broken, t, broken.full_presence()), 0.4);
  EXPECT_GT(check_hessian(broken, t, broken.full_presence()), 0.4);
}

TEST(UnitTerms, DefaultDeltaGradientsDifferenceFullGradients) {
  const auto q = quadratic(4, 3, 2);
  const SumOfPointsLoss loss(q);
  const Vector t = oracle::random_vector(3, 77);
  const std::vector<std::size_t> objs{0, 2};
  const auto d = loss.delta_gradients(t, objs);
  for (std::size_t k = 0; k < objs.size(); ++k) {
    const Vector ref = loss.gradient(t, loss.full_presence()) - loss.gradient(t, PresenceVector::drop_one(4, objs[k]));
    EXPECT_LT((d[k] - ref).norm(), 1e-12);
  }
}
