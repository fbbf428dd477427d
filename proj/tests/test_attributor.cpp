#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "vif/attributor.hpp"
#include "vif/embedloss.hpp"
#include "vif/harness.hpp"

using namespace vif;

namespace {

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

struct FittedLogistic {
  LogisticFixture fx;
  Vector theta;
};

FittedLogistic fitted_logistic(std::uint64_t seed, std::size_t n = 50, std::size_t d = 5) {
  FittedLogistic f{logistic_fixture(n, d, seed), {}};
  TrainConfig cfg;
  cfg.grad_tol = 1e-13;
  f.theta = train(*f.fx.loss, f.fx.loss->full_presence(), cfg).params.theta;
  return f;
}

}  // namespace

TEST(Vif, QuadraticMeanHasClosedForm) {
  // theta(1) is the mean m; VIF(i) = z_i - m = (n - 1) (theta(1) - theta(1_{-i})).
  std::vector<Vector> pts;
  for (std::uint64_t s = 0; s < 6; ++s) pts.push_back(oracle::random_vector(3, s));
  const auto q = std::make_shared<const QuadraticModel>(pts);
  const SumOfPointsLoss loss(q);
  Vector mean = Vector::Zero(3);
  for (const auto& p : pts) mean += p / 6.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const Vector loo_mean = (6.0 * mean - pts[i]) / 5.0;
    const Vector v = vif_params(loss, mean, i);
    EXPECT_LT((v - (pts[i] - mean)).norm(), 1e-12);
    EXPECT_LT((v - 5.0 * (mean - loo_mean)).norm(), 1e-12);
  }
}

TEST(Vif, EqualsScaledClassicalInfluenceForMEstimators) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto f = fitted_logistic(seed);
    const std::size_t n = f.fx.points->n_points();
    for (std::size_t i = 0; i < n; i += 7) {
      const Vector ref = static_cast<double>(n) * classical_if(*f.fx.points, f.theta, i);
      EXPECT_LT(oracle::max_rel(vif_params(*f.fx.loss, f.theta, i), ref), 1e-10);
    }
  }
}

TEST(Vif, ClassicalInfluenceMatchesGaussJordan) {
  const auto f = fitted_logistic(4, 20, 3);
  const Vector g = f.fx.points->point_gradient(f.theta, 2);
  const Vector ref = -oracle::gauss_jordan(f.fx.points->total_hessian(f.theta), g);
  EXPECT_LT(oracle::max_rel(classical_if(*f.fx.points, f.theta, 2), ref), 1e-12);
}

TEST(FiniteDifferenceIf, LeaveOneOutStepIsExactForExpectedLoss) {
  const auto f = fitted_logistic(5);
  const std::size_t n = f.fx.points->n_points();
  const ExpectedPointLoss loss(f.fx.points);
  const double eps = -1.0 / static_cast<double>(n - 1);
  for (std::size_t i : {0u, 13u, 49u}) {
    const Vector ref = static_cast<double>(n) * classical_if(*f.fx.points, f.theta, i);
    EXPECT_LT(oracle::max_rel(finite_difference_if(loss, f.theta, MixtureDirection::point_mass(i), eps), ref), 1e-9);
    const Vector drop = finite_difference_if(loss, f.theta, MixtureDirection::drop_one(i), 1e-3);
    EXPECT_LT(oracle::max_rel(-static_cast<double>(n - 1) * drop, ref), 1e-8);
  }
}

TEST(FiniteDifferenceIf, EmpiricalDirectionIsZero) {
  const auto f = fitted_logistic(6, 10, 2);
  const ExpectedPointLoss loss(f.fx.points);
  EXPECT_LT(finite_difference_if(loss, f.theta, MixtureDirection::empirical(), 0.1).norm(), 1e-12);
  EXPECT_THROW(finite_difference_if(loss, f.theta, MixtureDirection::empirical(), 0.0), Error);
}

TEST(Vif, ApproximatesLeaveOneOutRetraining) {
  // Relative error of VIF / n against exact retraining shrinks roughly like 1/n.
  auto worst_error = [](std::size_t n) {
    const auto f = fitted_logistic(7, n);
    TrainConfig cfg;
    cfg.grad_tol = 1e-12;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; i += n / 10) {
      const Vector loo = train(*f.fx.loss, PresenceVector::drop_one(n, i), cfg, f.theta).params.theta;
      const Vector truth = f.theta - loo;
      worst = std::max(worst, (vif_params(*f.fx.loss, f.theta, i) / static_cast<double>(n) - truth).norm() / truth.norm());
    }
    return worst;
  };
  const double small = worst_error(50), large = worst_error(400);
  EXPECT_LT(large, 0.06);
  EXPECT_LT(large, small / 4.0);
}

TEST(Solvers, IterativeSolversAgreeWithExplicit) {
  const auto f = fitted_logistic(8);
  const auto objs = iota_n(50);
  const auto ex = vif_params_all(*f.fx.loss, f.theta, objs);
  SolverSpec cg;
  cg.kind = SolverKind::CG;
  cg.cg_tol = 1e-12;
  const auto viac = vif_params_all(*f.fx.loss, f.theta, objs, cg);
  SolverSpec ls;
  ls.kind = SolverKind::LiSSA;
  ls.lissa_depth = 3000;
  ls.lissa_batch = 10;
  ls.lissa_seed = 1;
  const auto vial = vif_params_all(*f.fx.loss, f.theta, objs, ls);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_LT(oracle::max_rel(viac[i], ex[i]), 1e-8);
    EXPECT_GT(vial[i].dot(ex[i]) / (vial[i].norm() * ex[i].norm()), 0.95);
  }
}

TEST(Solvers, DampingDefaultsByConvexity) {
  const auto fx = logistic_fixture(5, 2, 1);
  EXPECT_EQ(SolverSpec{}.resolved_damping(*fx.loss), 0.0);
  const EmbeddingModel emb(Graph::karate(), 2, WalkParams{2, 4, 2}, 1);
  EXPECT_EQ(SolverSpec{}.resolved_damping(emb), 1e-3);
  SolverSpec zero;
  zero.damping = 0.0;
  const Vector theta = emb.initial_params(1);
  try {
    InverseHessian inv(emb, theta, zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Solvers, ParseNames) {
  EXPECT_EQ(parse_solver("cg"), SolverKind::CG);
  EXPECT_EQ(to_string(parse_solver("lissa")), "lissa");
  try {
    parse_solver("newton");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Attribution, OneHessianSetupPerRun) {
  const auto f = fitted_logistic(9, 20, 3);
  std::vector<CoordinateTarget> ts{CoordinateTarget(3, 0), CoordinateTarget(3, 2)};
  const TargetFunction* tp[] = {&ts[0], &ts[1]};
  const auto objs = iota_n(20);
  const long before = hessian_setup_counter().load();
  const auto recs = attribute_targets(*f.fx.loss, f.theta, tp, objs);
  EXPECT_EQ(hessian_setup_counter().load() - before, 1);
  ASSERT_EQ(recs.size(), 40u);
  // Ordered by object, then test; coordinate targets read VIF entries.
  for (std::size_t i = 0; i < 20; ++i) {
    const Vector v = vif_params(*f.fx.loss, f.theta, i);
    EXPECT_EQ(recs[2 * i].object_id, i);
    EXPECT_EQ(recs[2 * i + 1].test_id, 1u);
    EXPECT_NEAR(recs[2 * i].vif_score, v[0], 1e-12);
    EXPECT_NEAR(recs[2 * i + 1].vif_score, v[2], 1e-12);
  }
}

TEST(Attribution, ConstantTargetScoresZero) {
  const auto f = fitted_logistic(10, 10, 2);
  const ConstantTarget c(2, 4.0);
  for (const auto& r : attribute_target(*f.fx.loss, f.theta, c, iota_n(10))) EXPECT_EQ(r.vif_score, 0.0);
}

TEST(Attribution, ScoresAreLinearInTarget) {
  const auto f = fitted_logistic(11, 15, 3);
  const PointLossTarget a(f.fx.points, 0), b(f.fx.points, 1);
  const auto objs = iota_n(15);
  const auto ra = attribute_target(*f.fx.loss, f.theta, a, objs);
  const auto rb = attribute_target(*f.fx.loss, f.theta, b, objs);
  const Vector ga = a.gradient(f.theta), gb = b.gradient(f.theta);
  for (std::size_t i = 0; i < 15; ++i) {
    const Vector v = vif_params(*f.fx.loss, f.theta, i);
    EXPECT_NEAR(ra[i].vif_score + rb[i].vif_score, (ga + gb).dot(v), 1e-10);
  }
}
