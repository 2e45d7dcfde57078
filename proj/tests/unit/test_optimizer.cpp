#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <Eigen/QR>

#include "quadratic_oracle.hpp"
#include "realface/error.hpp"
#include "realface/optimizer.hpp"
#include "realface/rng.hpp"

namespace rf = realface;
using rf::testing::Quadratic;

namespace {

rf::OptimizerConfig tight() {
  rf::OptimizerConfig cfg;
  cfg.max_evals = 10000;
  cfg.x_tol = 1e-6;
  cfg.f_tol = 1e-10;
  return cfg;
}

// Random SPD matrix with condition number at most `cond`.
Quadratic random_quadratic(rf::Rng& rng, Eigen::Index k, double cond) {
  const Eigen::MatrixXd G = rf::gaussian_vector(rng, k * k).reshaped(k, k);
  const Eigen::MatrixXd Q = G.householderQr().householderQ();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd ev(k);
  for (Eigen::Index i = 0; i < k; ++i) ev[i] = std::pow(cond, u(rng));
  Quadratic q{Q * ev.asDiagonal() * Q.transpose(), Eigen::VectorXd::Zero(k)};
  const Eigen::VectorXd target = 1.5 * rf::gaussian_vector(rng, k);
  q.b = q.A * target;
  return q;
}

rf::Box table_box(Eigen::Index k) {
  // The realism-box shape: asymmetric, roughly +-0.5.
  Eigen::VectorXd lo(k), hi(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    lo[i] = -0.50 - 0.02 * static_cast<double>(i % 3);
    hi[i] = 0.45 + 0.03 * static_cast<double>(i % 2);
  }
  return {lo, hi};
}

}  // namespace

TEST(Objective, CountsAndMapsNanToInfinity) {
  rf::Objective f([](const Eigen::VectorXd& p) { return p[0] > 0 ? std::nan("") : p[0]; }, 1);
  EXPECT_EQ(f(Eigen::VectorXd::Constant(1, -2.0)), -2.0);
  EXPECT_TRUE(std::isinf(f(Eigen::VectorXd::Constant(1, 1.0))));
  EXPECT_EQ(f.evaluations(), 2u);
  EXPECT_EQ(f.nan_count(), 1u);
  EXPECT_THROW(f(Eigen::VectorXd::Zero(2)), rf::ShapeError);
}

TEST(Box, ViolationIsSignedDistanceOutside) {
  const rf::Box box{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 2)};
  EXPECT_DOUBLE_EQ(box.violation(Eigen::Vector2d(0, 0)), -1.0);
  EXPECT_DOUBLE_EQ(box.violation(Eigen::Vector2d(1.5, 0)), 0.5);
  EXPECT_EQ(box.clip(Eigen::Vector2d(3, -4)), Eigen::Vector2d(1, -1));
}

TEST(OptimizerConfig, RejectsBadSettings) {
  rf::OptimizerConfig cfg;
  EXPECT_NO_THROW(cfg.validate(6));
  cfg.max_evals = 7;
  EXPECT_THROW(cfg.validate(6), rf::SpecError);
  cfg = {};
  cfg.shrink = 0;
  EXPECT_THROW(cfg.validate(2), rf::SpecError);
  cfg = {};
  cfg.initial_step = -1;
  EXPECT_THROW(cfg.validate(2), rf::SpecError);
  EXPECT_FALSE(rf::disable_bounds(rf::OptimizerConfig{}).enforce_bounds);
}

TEST(Minimize, SeparableQuadraticsReachTheClippedTarget) {
  for (int t = 0; t < 60; ++t) {
    rf::Rng rng(rf::derive_seed(42, static_cast<std::uint64_t>(t)));
    std::uniform_real_distribution<double> u(-1, 1), w(0.5, 5);
    const Eigen::Index k = 1 + t % 6;
    Eigen::VectorXd lo(k), hi(k), c(k), a(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      lo[i] = -0.5 + 0.1 * u(rng);
      hi[i] = 0.45 + 0.1 * u(rng);
      c[i] = 1.5 * u(rng);
      a[i] = w(rng);
    }
    rf::Objective f([&](const Eigen::VectorXd& p) { return (a.array() * (p - c).array().square()).sum(); }, k);
    const auto r = rf::minimize(f, Eigen::VectorXd::Zero(k), rf::Box{lo, hi}, tight());
    // For a diagonal quadratic the constrained minimiser is the clipped centre.
    const Eigen::VectorXd star = c.cwiseMax(lo).cwiseMin(hi);
    const double f_star = (a.array() * (star - c).array().square()).sum();
    EXPECT_NEAR(r.f_min, f_star, 1e-6) << "trial " << t;
  }
}

TEST(Minimize, CoupledQuadraticsReachTheActiveSetMinimum) {
  for (int t = 0; t < 30; ++t) {
    rf::Rng rng(rf::derive_seed(7, static_cast<std::uint64_t>(t)));
    const Eigen::Index k = 2 + t % 5;
    const Quadratic q = random_quadratic(rng, k, 10.0);
    const rf::Box box = table_box(k);
    const auto exact = rf::testing::box_minimum(q, box.lower, box.upper);
    rf::Objective f([&](const Eigen::VectorXd& p) { return q(p); }, k);
    const auto r = rf::minimize(f, Eigen::VectorXd::Zero(k), box, tight());
    EXPECT_NEAR(r.f_min, exact.value, 1e-6) << "trial " << t << " k " << k;
  }
}

TEST(Minimize, RosenbrockFromTheClassicStart) {
  rf::Objective f(
      [](const Eigen::VectorXd& p) { return 100 * std::pow(p[1] - p[0] * p[0], 2) + std::pow(1 - p[0], 2); }, 2);
  rf::OptimizerConfig cfg;
  cfg.max_evals = 2000;
  cfg.x_tol = 1e-10;
  cfg.f_tol = 1e-12;
  cfg.enforce_bounds = false;
  const rf::Box box{Eigen::Vector2d::Constant(-1e9), Eigen::Vector2d::Constant(1e9)};
  const auto r = rf::minimize(f, Eigen::Vector2d(-1.2, 1.0), box, cfg);
  EXPECT_LE((r.p_min - Eigen::Vector2d(1, 1)).norm(), 1e-3);
  EXPECT_LE(r.trace.size(), 2000u);
}

TEST(Minimize, BoundedTracesNeverLeaveTheBox) {
  const rf::Box box = table_box(6);
  const Eigen::VectorXd far = Eigen::VectorXd::Constant(6, 3.0);
  rf::Objective f([&](const Eigen::VectorXd& p) { return (p - far).squaredNorm(); }, 6);
  const auto r = rf::minimize(f, Eigen::VectorXd::Zero(6), box, rf::OptimizerConfig{});
  for (const auto& e : r.trace) {
    EXPECT_LE(((box.lower - e.p).array()).maxCoeff(), 1e-12);
    EXPECT_LE(((e.p - box.upper).array()).maxCoeff(), 1e-12);
    EXPECT_LE(e.violation, 1e-12);
  }
}

TEST(Minimize, UnboundedRunsRecordViolations) {
  const rf::Box box = table_box(2);
  rf::Objective f([](const Eigen::VectorXd& p) { return (p - Eigen::Vector2d(2, 2)).squaredNorm(); }, 2);
  const auto r = rf::minimize(f, Eigen::VectorXd::Zero(2), box, rf::disable_bounds(rf::OptimizerConfig{}));
  EXPECT_NEAR(r.p_min[0], 2.0, 1e-2);
  EXPECT_NEAR(r.trace.back().violation, box.violation(r.trace.back().p), 1e-15);
  EXPECT_GT(r.trace.back().violation, 1.0);
}

TEST(Minimize, ClampsAnOutsideStart) {
  const rf::Box box = table_box(2);
  rf::Objective f([](const Eigen::VectorXd& p) { return p.squaredNorm(); }, 2);
  const auto r = rf::minimize(f, Eigen::Vector2d(5, -5), box, rf::OptimizerConfig{});
  EXPECT_TRUE(r.p0_clamped);
  EXPECT_EQ(r.trace.front().p, box.clip(Eigen::Vector2d(5, -5)));
}

TEST(Minimize, HonoursEvaluationBudgetAndStopRule) {
  rf::Objective f([](const Eigen::VectorXd& p) { return p.squaredNorm(); }, 3);
  rf::OptimizerConfig cfg;
  cfg.max_evals = 25;
  cfg.x_tol = 0;
  cfg.f_tol = 0;
  const rf::Box box{Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1)};
  const auto r = rf::minimize(f, Eigen::Vector3d(0.5, 0.5, 0.5), box, cfg);
  EXPECT_EQ(r.trace.size(), 25u);
  EXPECT_EQ(r.reason, rf::StopReason::max_evals);

  rf::Objective g([](const Eigen::VectorXd& p) { return p.squaredNorm(); }, 3);
  const auto s = rf::minimize(g, Eigen::Vector3d(0.5, 0.5, 0.5), box, rf::OptimizerConfig{},
                              [](const rf::TraceEntry& e) { return e.value < 0.5; });
  EXPECT_EQ(s.reason, rf::StopReason::stop_rule);
  EXPECT_LT(s.trace.back().value, 0.5);
  for (std::size_t i = 0; i + 1 < s.trace.size(); ++i) EXPECT_GE(s.trace[i].value, 0.5);
}

TEST(Minimize, ReturnsTheBestPointSeen) {
  rf::Objective f([](const Eigen::VectorXd& p) { return std::abs(p[0] - 0.3) + std::abs(p[1] + 0.1); }, 2);
  const rf::Box box{Eigen::Vector2d::Constant(-1), Eigen::Vector2d::Constant(1)};
  const auto r = rf::minimize(f, Eigen::Vector2d(0.9, 0.9), box, rf::OptimizerConfig{});
  double best = INFINITY;
  for (const auto& e : r.trace) best = std::min(best, e.value);
  EXPECT_EQ(r.f_min, best);
  for (std::size_t i = 0; i < r.trace.size(); ++i) EXPECT_EQ(r.trace[i].eval_index, i);
}

TEST(Minimize, SurvivesNanRegions) {
  rf::Objective f([](const Eigen::VectorXd& p) { return p[0] > 0.2 ? std::nan("") : (p[0] + 0.3) * (p[0] + 0.3); }, 1);
  const rf::Box box{Eigen::VectorXd::Constant(1, -1), Eigen::VectorXd::Constant(1, 1)};
  const auto r = rf::minimize(f, Eigen::VectorXd::Constant(1, 0.1), box, tight());
  EXPECT_NEAR(r.p_min[0], -0.3, 1e-4);
}

TEST(TraceCsv, HeaderAndShortestDoubles) {
  std::vector<rf::TraceEntry> trace{{0, Eigen::Vector2d(0.1, -0.5), 1.25, -0.4}};
  std::ostringstream out;
  rf::write_trace_csv(out, trace);
  EXPECT_EQ(out.str(), "eval_index,value,p_0,p_1,violation\n0,1.25,0.1,-0.5,-0.4\n");
}
