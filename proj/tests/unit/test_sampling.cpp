#include "oracles.hpp"
#include "vfalign/sampling.hpp"
#include "vfalign/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vfalign;

namespace {

RowVector vec(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

Matrix sample_covariance(const Matrix& x) {
  Matrix c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

FieldPtr decay(int n) {
  return std::make_shared<LinearField>(LinearSystemSpec{-Matrix::Identity(n, n), std::nullopt});
}

// Dense sampling of the Van der Pol limit cycle by long RK4 integration.
Matrix limit_cycle(double mu) {
  VanDerPol f(mu);
  RowVector x = vec({2.0, 0.0});
  const double dt = 1e-3;
  auto rk4 = [&](const RowVector& s) {
    RowVector k1 = f.eval_point(s), k2 = f.eval_point(s + 0.5 * dt * k1);
    RowVector k3 = f.eval_point(s + 0.5 * dt * k2), k4 = f.eval_point(s + dt * k3);
    return RowVector(s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4));
  };
  for (int i = 0; i < 100000; ++i) x = rk4(x);
  const int keep = 20000;  // about three periods
  Matrix out(keep, 2);
  for (int i = 0; i < keep; ++i) {
    x = rk4(x);
    out.row(i) = x;
  }
  return out;
}

}  // namespace

TEST(UniformBox, BoundsAndMean) {
  Sampler s = Sampler::uniform_box(vec({-1, -1}), vec({1, 1}), 3);
  Matrix x = s.draw(1000);
  EXPECT_TRUE((x.array() >= -1.0).all() && (x.array() <= 1.0).all());
  const double sigma_mean = std::sqrt(1.0 / 3.0 / 1000.0);
  for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(x.col(i).mean()), 3 * sigma_mean);
}

TEST(UniformBox, DegenerateAndInvalidBounds) {
  Sampler flat = Sampler::uniform_box(vec({2, -1}), vec({2, 1}), 0);
  EXPECT_TRUE((flat.draw(50).col(0).array() == 2.0).all());
  EXPECT_THROW(Sampler::uniform_box(vec({1}), vec({0}), 0), ContractError);
  EXPECT_THROW(Sampler::uniform_box(vec({0, 0}), vec({1}), 0), DimensionError);
  EXPECT_THROW(flat.draw(0), ContractError);
}

TEST(UniformBox, PresetsCoverBenchmarkDomains) {
  Matrix v = Sampler::vdp_box(1).draw(2000);
  EXPECT_LE(v.col(0).cwiseAbs().maxCoeff(), 3.0);
  EXPECT_LE(v.col(1).cwiseAbs().maxCoeff(), 4.0);
  EXPECT_GT(v.col(1).cwiseAbs().maxCoeff(), 3.9);
  Matrix p = Sampler::pitchfork_box(4.0, 1).draw(2000);
  EXPECT_LE(p.col(0).cwiseAbs().maxCoeff(), 3.0);
  EXPECT_GT(p.col(0).cwiseAbs().maxCoeff(), 2.9);
  EXPECT_LE(p.col(1).cwiseAbs().maxCoeff(), 1.0);
}

TEST(UniformBox, MappedBoxContainsImage) {
  Matrix Q(2, 2);
  Q << 1, -2, 0.5, 1;
  Sampler src = Sampler::uniform_box(vec({-1, -2}), vec({1, 2}), 4);
  Sampler dst = Sampler::mapped_box(Q, vec({-1, -2}), vec({1, 2}), 4);
  const auto& box = std::get<UniformBox>(dst.params());
  Matrix img = src.draw(2000) * Q.transpose();
  for (int i = 0; i < 2; ++i) {
    EXPECT_GE(img.col(i).minCoeff(), box.low(i));
    EXPECT_LE(img.col(i).maxCoeff(), box.high(i));
  }
  EXPECT_DOUBLE_EQ(box.high(0), 5.0);
  EXPECT_DOUBLE_EQ(box.high(1), 2.5);
}

TEST(GaussianSampler, CovarianceApproachesIdentity) {
  Sampler s = Sampler::standard_normal(3, 5);
  Matrix x = s.draw(10000);
  Matrix c = sample_covariance(x);
  // Entry standard error ≈ 1/√N·√2 on the diagonal.
  EXPECT_LT((c - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.06);
  EXPECT_LT(x.colwise().mean().cwiseAbs().maxCoeff(), 0.04);
}

TEST(GaussianSampler, MeanAndScale) {
  Sampler s = Sampler::gaussian(vec({5, -1}), vec({2, 0.1}), 6);
  Matrix x = s.draw(10000);
  EXPECT_NEAR(x.col(0).mean(), 5.0, 0.08);
  EXPECT_NEAR(x.col(1).mean(), -1.0, 0.004);
  Matrix c = sample_covariance(x);
  EXPECT_NEAR(c(0, 0), 4.0, 0.25);
  EXPECT_NEAR(c(1, 1), 0.01, 0.0007);
}

TEST(Determinism, SameSeedSameDraws) {
  Sampler a = Sampler::standard_normal(4, 9), b = Sampler::standard_normal(4, 9);
  EXPECT_EQ(a.draw(20), b.draw(20));
  EXPECT_EQ(a.draw(5), b.draw(5));
  Sampler c = a.reseeded(10), d = b.reseeded(10);
  EXPECT_EQ(c.draw(7), d.draw(7));
  EXPECT_NE(Sampler::standard_normal(4, 1).draw(3), Sampler::standard_normal(4, 2).draw(3));
}

TEST(Asymptotic, NoiselessDecayCollapsesToOrigin) {
  AsymptoticOptions o;
  o.noise = 0.0;
  o.burn_in = 10.0;
  o.t_end = 20.0;
  o.trials = 100;
  Asymptotic a = asymptotic_states(*decay(3), o, 1);
  EXPECT_GT(a.pool.rows(), 0);
  EXPECT_LT(a.pool.rowwise().norm().maxCoeff(), 1e-3);
  EXPECT_EQ(a.discarded_trials, 0);
}

TEST(Asymptotic, OrnsteinUhlenbeckStationaryVariance) {
  AsymptoticOptions o;
  o.noise = 1.0;
  o.trials = 1000;
  Asymptotic a = asymptotic_states(*decay(2), o, 2);
  Matrix c = sample_covariance(a.pool);
  // Closed form σ²/2 for dx = −x dt + σ dW.
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(c(i, i), 0.5, 0.05);
}

TEST(Asymptotic, NoiselessVanDerPolSitsOnLimitCycle) {
  const double mu = 1.0;
  AsymptoticOptions o;
  o.noise = 0.0;
  o.trials = 50;
  o.burn_in = 50.0;
  o.t_end = 60.0;
  Asymptotic a = asymptotic_states(VanDerPol(mu), o, 3);
  Matrix cycle = limit_cycle(mu);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.pool.rows(); ++r) {
    double best = (cycle.rowwise() - a.pool.row(r)).rowwise().norm().minCoeff();
    worst = std::max(worst, best);
  }
  EXPECT_LT(worst, 0.1);
}

TEST(Asymptotic, SeedDeterminismAndPoolDraws) {
  AsymptoticOptions o;
  o.noise = 0.5;
  o.trials = 20;
  o.burn_in = 1.0;
  o.t_end = 5.0;
  Sampler a = Sampler::asymptotic(VanDerPol(1.0), o, 7), b = Sampler::asymptotic(VanDerPol(1.0), o, 7);
  const Matrix& pool = std::get<Asymptotic>(a.params()).pool;
  EXPECT_EQ(pool, std::get<Asymptotic>(b.params()).pool);
  Matrix x = a.draw(50);
  EXPECT_EQ(x, b.draw(50));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    EXPECT_EQ((pool.rowwise() - x.row(r)).rowwise().norm().minCoeff(), 0.0);
  }
}

TEST(Asymptotic, AllTrialsDivergedIsNumericalError) {
  FieldPtr blowup = std::make_shared<LinearField>(LinearSystemSpec{5.0 * Matrix::Identity(1, 1), std::nullopt});
  AsymptoticOptions o;
  o.noise = 0.1;
  o.trials = 5;
  o.burn_in = 5.0;
  o.t_end = 10.0;
  EXPECT_THROW(asymptotic_states(*blowup, o, 1), NumericalError);
  o.burn_in = 20.0;
  EXPECT_THROW(asymptotic_states(*blowup, o, 1), ContractError);
}

TEST(Asymptotic, PoolSmallerThanTenBatchesRejectedByTraining) {
  AsymptoticOptions o;
  o.noise = 1.0;
  o.trials = 2;
  o.burn_in = 1.0;
  o.t_end = 2.0;
  FieldPtr f = decay(2);
  Sampler small = Sampler::asymptotic(*f, o, 1);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.batches = 1;
  cfg.restarts = 1;
  EXPECT_THROW(train(*f, *f, small, Sampler::standard_normal(2, 1), cfg), ConfigError);
}

TEST(SamplerSpec, JsonKinds) {
  VanDerPol f(1.0);
  EXPECT_EQ(sampler_from_json({{"kind", "vdp_box"}}, f, 0).kind(), "uniform_box");
  EXPECT_EQ(sampler_from_json({{"kind", "standard_normal"}}, f, 0).dim(), 2);
  EXPECT_THROW(sampler_from_json({{"kind", "bogus"}}, f, 0), ParseError);
  EXPECT_THROW(sampler_from_json({{"kind", "uniform_box"}, {"low", {0, 0}}}, f, 0), ParseError);
}
