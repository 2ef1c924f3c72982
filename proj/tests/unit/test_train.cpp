#include <gtest/gtest.h>

#include "agelab/objective.hpp"
#include "agelab/train.hpp"

using namespace agelab;

namespace {

TrainConfig base(const Setting& s, std::uint64_t seed = 5) {
  TrainConfig c;
  c.theta0 = s.default_theta0();
  c.eta = s.default_eta();
  c.n = 500;
  c.T = 40;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Train, PathShapeAndSelection) {
  Gaussian2 g2;
  RunResult r = run_age(g2, Divergence::revkl, base(g2));
  ASSERT_FALSE(r.failed) << r.failure;
  EXPECT_EQ(r.theta_path.size(), 41u);
  EXPECT_EQ(r.h_norm_path.size(), 41u);
  EXPECT_EQ(r.theta_path.front(), g2.default_theta0());
  ASSERT_GE(r.selected_t, 1);
  ASSERT_LE(r.selected_t, 40);
  for (int t = 1; t <= 40; ++t) EXPECT_GE(r.h_norm_path[t], r.h_norm_path[r.selected_t]);
  for (int t = 1; t < r.selected_t; ++t) EXPECT_GT(r.h_norm_path[t], r.h_norm_path[r.selected_t]);
  EXPECT_EQ(r.theta_hat, r.theta_path[r.selected_t]);
}

TEST(Train, LandsNearTheMinimizer) {
  Gaussian2 g2;
  for (auto div : {Divergence::kl, Divergence::revkl, Divergence::js, Divergence::h2}) {
    TrainConfig c = base(g2);
    c.n = 5000;
    c.T = 100;
    RunResult r = run_age(g2, div, c);
    ASSERT_FALSE(r.failed) << r.failure;
    EXPECT_NEAR(r.theta_hat[0], theta_star(g2, div)[0], 0.1) << name(div);
  }
}

TEST(Train, SameSeedSameRun) {
  LaplaceGaussian lg;
  TrainConfig c = base(lg, 42);
  RunResult a = run_age(lg, Divergence::js, c), b = run_age(lg, Divergence::js, c);
  EXPECT_EQ(a.theta_path, b.theta_path);
  EXPECT_EQ(a.h_norm_path, b.h_norm_path);
  c.seed = 43;
  RunResult d = run_age(lg, Divergence::js, c);
  EXPECT_NE(a.theta_hat, d.theta_hat);
}

TEST(Train, ZeroStepStaysPut) {
  Gaussian2 g2;
  TrainConfig c = base(g2);
  c.eta = 0;
  RunResult r = run_age(g2, Divergence::kl, c);
  for (const auto& t : r.theta_path) EXPECT_EQ(t, c.theta0);
}

TEST(Train, IteratesStayInTheBox) {
  LaplaceGaussian lg;
  TrainConfig c = base(lg);
  c.eta = 50;  // wild steps
  RunResult r = run_age(lg, Divergence::revkl, c);
  for (const auto& t : r.theta_path) EXPECT_TRUE(lg.theta_box().contains(t));
}

TEST(Train, TwoSampleSchemeChangesTheStepSample) {
  Gaussian2 g2;
  TrainConfig c = base(g2);
  c.lambda = 2;
  RunResult one = run_age(g2, Divergence::revkl, c);
  c.scheme = Scheme::two_sample;
  RunResult two = run_age(g2, Divergence::revkl, c);
  // same real and fitting sample, so the first fit agrees; the step differs
  EXPECT_EQ(one.theta_path[0], two.theta_path[0]);
  EXPECT_NE(one.theta_path[1], two.theta_path[1]);
  auto d1 = detail::draw_run_data(g2, c);
  c.scheme = Scheme::one_sample;
  auto d0 = detail::draw_run_data(g2, c);
  EXPECT_EQ(d0.real, d1.real);
  EXPECT_EQ(d0.Z, d1.Z);
  EXPECT_EQ(d1.Z_step.rows(), d1.Z.rows());
  EXPECT_EQ(d0.Z_step.size(), 0);
}

TEST(Train, JsFganEqualsAgeAtLambdaOne) {
  LaplaceGaussian lg;
  TrainConfig c = base(lg);
  RunResult a = run_age(lg, Divergence::js, c), b = run_fgan(lg, Divergence::js, c);
  EXPECT_EQ(a.theta_path, b.theta_path);
}

TEST(Train, FailuresAreRecordedNotThrown) {
  Gaussian2 g2;
  TrainConfig c = base(g2);
  c.newton.separation_norm = 1e-3;  // any nonzero fit counts as separation
  RunResult r = run_age(g2, Divergence::kl, c);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.failed_at, 0);
  EXPECT_FALSE(r.failure.empty());
  EXPECT_TRUE(r.theta_path.empty());
}

TEST(Train, ValidationNamesTheFlag) {
  Gaussian2 g2;
  auto flag_of = [&](TrainConfig c) -> std::string {
    try {
      validate(c, g2);
    } catch (const ValidationError& e) {
      return e.flag();
    }
    return "";
  };
  TrainConfig c = base(g2);
  EXPECT_EQ(flag_of(c), "");
  c.T = 0;
  EXPECT_EQ(flag_of(c), "--T");
  c = base(g2);
  c.eta = -1;
  EXPECT_EQ(flag_of(c), "--eta");
  c = base(g2);
  c.lambda = 0.5;
  EXPECT_EQ(flag_of(c), "--lambda");
  c = base(g2);
  c.n = 1;
  EXPECT_EQ(flag_of(c), "--n");
  c = base(g2);
  c.theta0 = Vec::Constant(1, 0.01);
  EXPECT_EQ(flag_of(c), "--theta0");
  c.theta0 = Vec::Constant(2, 1.0);
  EXPECT_EQ(flag_of(c), "--theta0");
}

TEST(Train, LocalStageStartsAtThePilot) {
  GaussianMean gm(Vec::Constant(1, 1.0));
  TrainConfig c = base(gm);
  c.n = 2000;
  c.lambda = 5;
  RunResult pilot = run_age(gm, Divergence::revkl, c);
  ASSERT_FALSE(pilot.failed);
  RunResult local = run_local_gan(gm, c, pilot.theta_hat);
  ASSERT_FALSE(local.failed) << local.failure;
  EXPECT_EQ(local.theta_path.front(), pilot.theta_hat);
  EXPECT_NEAR(local.theta_hat[0], 1.0, 0.1);
}

TEST(Train, MleUsesTheSameRealSample) {
  GaussianMean gm(Vec::Constant(1, 1.0));
  TrainConfig c = base(gm);
  auto d = detail::draw_run_data(gm, c);
  EXPECT_NEAR(run_mle(gm, c.n, c.seed)[0], d.real.col(0).mean(), 1e-14);
  Gaussian2 g2;
  EXPECT_GE(mle_estimate(g2, Mat::Constant(10, 1, 0.0))[0], 0.1);  // clipped into the box
  EXPECT_THROW(run_mle(g2, 0, 1), ValidationError);
}
