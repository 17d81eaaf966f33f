// Copyright 2026  avsep authors
// Licensed under the Apache License, Version 2.0.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "avsep/vae.hpp"

using namespace avsep;

namespace {

ModelDims toy_dims() {
  ModelDims d;
  d.bins = 12;
  d.latent = 4;
  d.visual = 3;
  d.visual_raw = 5;
  d.hidden = 7;
  d.frontend_hidden = 6;
  return d;
}

// Plain loops over the stored weights, independent of Eigen products.
std::vector<double> oracle_forward(const DenseNet& net, std::vector<double> x) {
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    const auto b = net.bias(l);
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = b[i];
      for (Eigen::Index j = 0; j < w.cols(); ++j) acc += w(i, j) * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = (l + 1 < net.num_layers()) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector random_vec(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Decode, OutputsArePositiveAndFloored) {
  Rng rng(1);
  auto m = make_random_model(toy_dims(), rng);
  m.decoder.bias(m.decoder.num_layers() - 1).setConstant(-100.0);
  const Vector s = decode(m, random_vec(4, rng), random_vec(5, rng));
  EXPECT_TRUE((s.array() >= m.variance_floor).all());
  EXPECT_EQ(s.minCoeff(), m.variance_floor);
}

TEST(Decode, ZeroWeightDecoderEmitsExpBias) {
  Rng rng(2);
  auto m = make_random_model(toy_dims(), rng);
  m.decoder.params().setZero();
  auto b = m.decoder.bias(m.decoder.num_layers() - 1);
  for (int f = 0; f < b.size(); ++f) b[f] = 0.1 * f - 0.5;
  const Vector s = decode(m, random_vec(4, rng, -5, 5), random_vec(5, rng));
  for (int f = 0; f < s.size(); ++f) EXPECT_DOUBLE_EQ(s[f], std::exp(0.1 * f - 0.5));
}

TEST(Decode, MatchesLoopOracle) {
  Rng rng(3);
  const auto m = make_random_model(toy_dims(), rng);
  const Vector z = random_vec(4, rng), v = random_vec(5, rng);
  const auto feat = oracle_forward(m.frontend, to_std(v));
  std::vector<double> in = to_std(z);
  in.insert(in.end(), feat.begin(), feat.end());
  const auto out = oracle_forward(m.decoder, in);
  const Vector s = decode(m, z, v);
  for (int f = 0; f < s.size(); ++f) EXPECT_NEAR(s[f], std::exp(out[static_cast<std::size_t>(f)]), 1e-12);
  EXPECT_THROW(decode(m, Vector::Zero(3), v), DataError);
  EXPECT_THROW(decode(m, z, Vector::Zero(4)), DataError);
}

TEST(Encode, MatchesLoopOracleAndIsDeterministic) {
  Rng rng(4);
  const auto m = make_random_model(toy_dims(), rng);
  const Vector p = random_vec(12, rng, 0.0, 3.0), v = random_vec(5, rng);
  const auto feat = oracle_forward(m.frontend, to_std(v));
  std::vector<double> in;
  for (double x : p) in.push_back(std::log(x + kEncoderLogOffset));
  in.insert(in.end(), feat.begin(), feat.end());
  const auto out = oracle_forward(m.encoder, in);
  const GaussDiag g = encode(m, p, v);
  for (int l = 0; l < 4; ++l) {
    EXPECT_NEAR(g.mean[l], out[static_cast<std::size_t>(l)], 1e-12);
    EXPECT_NEAR(g.variance[l], std::exp(out[static_cast<std::size_t>(l + 4)]), 1e-12);
  }
  const GaussDiag g2 = encode(m, p, v);
  EXPECT_EQ(g.mean, g2.mean);
  EXPECT_EQ(g.variance, g2.variance);
  Vector bad = p;
  bad[3] = -1e-3;
  EXPECT_THROW(encode(m, bad, v), DataError);
}

TEST(Encode, VarianceRespectsFloor) {
  Rng rng(5);
  auto m = make_random_model(toy_dims(), rng);
  m.encoder.bias(m.encoder.num_layers() - 1).setConstant(-80.0);
  const GaussDiag g = encode(m, random_vec(12, rng, 0, 1), random_vec(5, rng));
  EXPECT_TRUE((g.variance.array() >= m.variance_floor).all());
}

TEST(Prior, ZeroNetIsStandardNormal) {
  Rng rng(6);
  auto m = make_random_model(toy_dims(), rng);
  m.prior_net.params().setZero();
  const GaussDiag g = prior(m, random_vec(5, rng));
  EXPECT_EQ(g.mean, Vector::Zero(4));
  EXPECT_EQ(g.variance, Vector::Ones(4));
}

TEST(Prior, MatchesLoopOracle) {
  Rng rng(7);
  const auto m = make_random_model(toy_dims(), rng);
  const Vector v = random_vec(5, rng);
  const auto out = oracle_forward(m.prior_net, oracle_forward(m.frontend, to_std(v)));
  const GaussDiag g = prior(m, v);
  for (int l = 0; l < 4; ++l) {
    EXPECT_NEAR(g.mean[l], out[static_cast<std::size_t>(l)], 1e-12);
    EXPECT_NEAR(g.variance[l], std::exp(out[static_cast<std::size_t>(l + 4)]), 1e-12);
  }
}

TEST(ReparamSample, ConcentratesAtFloorAndIsReproducible) {
  GaussDiag g{Vector::Constant(3, 5.0), Vector::Constant(3, 1e-6)};
  Rng a(9), b(9);
  const Vector za = reparam_sample(g, a);
  EXPECT_EQ(za, reparam_sample(g, b));
  EXPECT_LT((za.array() - 5.0).abs().maxCoeff(), 0.01);
}

TEST(ReparamSample, MomentsWithinThreeStandardErrors) {
  GaussDiag g{Vector(2), Vector(2)};
  g.mean << -1.5, 0.3;
  g.variance << 0.25, 4.0;
  Rng rng(10);
  const int n = 100000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vector z = reparam_sample(g, rng);
    sum += z;
    sq += z.cwiseAbs2();
  }
  for (int l = 0; l < 2; ++l) {
    const double mean = sum[l] / n;
    const double var = sq[l] / n - mean * mean;
    EXPECT_LT(std::abs(mean - g.mean[l]), 3.0 * std::sqrt(g.variance[l] / n));
    // var of the sample variance of a Gaussian: 2 sigma^4 / n
    EXPECT_LT(std::abs(var - g.variance[l]), 3.0 * std::sqrt(2.0 / n) * g.variance[l]);
  }
}

TEST(Kl, ClosedFormCases) {
  GaussDiag q{Vector::Constant(1, 1.0), Vector::Constant(1, 1.0)};
  GaussDiag p{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
  EXPECT_DOUBLE_EQ(kl_gauss_diag(q, p), 0.5);
  EXPECT_EQ(kl_gauss_diag(q, q), 0.0);
}

TEST(Kl, MatchesMonteCarloAndIsNonNegative) {
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    const GaussDiag q{random_vec(3, rng), random_vec(3, rng, 0.2, 2.0)};
    const GaussDiag p{random_vec(3, rng), random_vec(3, rng, 0.2, 2.0)};
    auto logpdf = [](const GaussDiag& g, const Vector& z) {
      double s = 0.0;
      for (int l = 0; l < z.size(); ++l)
        s += -0.5 * std::log(2 * std::numbers::pi * g.variance[l]) -
             0.5 * (z[l] - g.mean[l]) * (z[l] - g.mean[l]) / g.variance[l];
      return s;
    };
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector z = reparam_sample(q, rng);
      acc += logpdf(q, z) - logpdf(p, z);
    }
    const double kl = kl_gauss_diag(q, p);
    EXPECT_GE(kl, 0.0);
    EXPECT_LT(std::abs(acc / n - kl), 0.01 * kl);
  }
}

TEST(ReconLoglik, ClosedFormCases) {
  EXPECT_NEAR(recon_loglik(Vector::Zero(4), Vector::Constant(4, 1.0 / std::numbers::pi)), 0.0, 1e-14);
  EXPECT_DOUBLE_EQ(recon_loglik(Vector::Constant(1, 2.0), Vector::Constant(1, 2.0)),
                   -std::log(2.0 * std::numbers::pi) - 1.0);
  const Vector p = Vector::Constant(1, 1.7);
  const double best = recon_loglik(p, p);
  for (double s : {1.0, 1.6, 1.69, 1.71, 1.8, 3.0}) EXPECT_LT(recon_loglik(p, Vector::Constant(1, s)), best);
}

namespace {

FrameBatch random_batch(const ModelDims& d, int n, Rng& rng) {
  FrameBatch b{Matrix(d.bins, n), Matrix(d.bins, n), Matrix(d.visual_raw, n)};
  std::uniform_real_distribution<double> u(0.05, 2.0), s(-1.0, 1.0);
  for (int j = 0; j < n; ++j) {
    for (int f = 0; f < d.bins; ++f) {
      b.clean_power(f, j) = u(rng);
      b.mix_power(f, j) = b.clean_power(f, j) + u(rng);
    }
    for (int k = 0; k < d.visual_raw; ++k) b.visual(k, j) = s(rng);
  }
  return b;
}

}  // namespace

TEST(Loss, ComposesSubOperations) {
  Rng rng(12);
  const auto m = make_random_model(toy_dims(), rng);
  const FrameBatch b = random_batch(toy_dims(), 1, rng);
  const double alpha = 0.7;
  Rng r1(99), r2(99);
  const double got = loss(m, b.mix_power.col(0), b.clean_power.col(0), b.visual.col(0), alpha, r1);

  const GaussDiag q = encode(m, b.mix_power.col(0), b.visual.col(0));
  const GaussDiag p = prior(m, b.visual.col(0));
  const Vector zq = reparam_sample(q, r2);
  const Vector zp = reparam_sample(p, r2);
  const double expect = -alpha * recon_loglik(b.clean_power.col(0), decode(m, zq, b.visual.col(0))) -
                        (1 - alpha) * recon_loglik(b.clean_power.col(0), decode(m, zp, b.visual.col(0))) +
                        alpha * kl_gauss_diag(q, p);
  EXPECT_NEAR(got, expect, 1e-10 * std::abs(expect));
}

TEST(Loss, AlphaExtremesCollapseTerms) {
  Rng rng(13);
  const auto m = make_random_model(toy_dims(), rng);
  const FrameBatch b = random_batch(toy_dims(), 1, rng);
  const auto noise = draw_loss_noise(4, 1, rng);
  const auto rq = evaluate_loss(m, b, noise, {1, 0, 0}, false).loss;
  const auto rp = evaluate_loss(m, b, noise, {0, 1, 0}, false).loss;
  const auto kl = evaluate_loss(m, b, noise, {0, 0, 1}, false).loss;
  EXPECT_NEAR(evaluate_loss(m, b, noise, LossWeights::from_alpha(1.0), false).loss, rq + kl, 1e-10);
  EXPECT_NEAR(evaluate_loss(m, b, noise, LossWeights::from_alpha(0.0), false).loss, rp, 1e-10);
  EXPECT_THROW(LossWeights::from_alpha(1.5), ConfigError);
}

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central differences with step 1e-4 on every parameter, same noise.
double max_fd_error(CvaeModel m, const FrameBatch& b, const LossNoise& noise, const LossWeights& w) {
  const auto r = evaluate_loss(m, b, noise, w, true);
  double worst = 0.0;
  auto nets = m.nets();
  for (std::size_t k = 0; k < nets.size(); ++k) {
    Vector& p = nets[k]->params();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + 1e-4;
      const double up = evaluate_loss(m, b, noise, w, false).loss;
      p[i] = keep - 1e-4;
      const double down = evaluate_loss(m, b, noise, w, false).loss;
      p[i] = keep;
      worst = std::max(worst, relative_error(r.grad.nets[k][i], (up - down) / 2e-4));
    }
  }
  return worst;
}

}  // namespace

TEST(Grad, MatchesFiniteDifferences) {
  Rng rng(14);
  ModelDims d = toy_dims();
  d.hidden_layers = 2;
  const auto m = make_random_model(d, rng);
  const FrameBatch b = random_batch(d, 3, rng);
  const auto noise = draw_loss_noise(d.latent, 3, rng);
  EXPECT_LT(max_fd_error(m, b, noise, LossWeights::from_alpha(0.9)), 1e-4);
  EXPECT_LT(max_fd_error(m, b, noise, LossWeights::from_alpha(0.3)), 1e-4);
}

TEST(Grad, DuplicatedBatchHasSameGradient) {
  Rng rng(15);
  const auto m = make_random_model(toy_dims(), rng);
  const FrameBatch b = random_batch(toy_dims(), 2, rng);
  const auto noise = draw_loss_noise(4, 2, rng);
  FrameBatch bb{Matrix(12, 4), Matrix(12, 4), Matrix(5, 4)};
  bb.mix_power << b.mix_power, b.mix_power;
  bb.clean_power << b.clean_power, b.clean_power;
  bb.visual << b.visual, b.visual;
  LossNoise nn{Matrix(4, 4), Matrix(4, 4)};
  nn.posterior << noise.posterior, noise.posterior;
  nn.prior << noise.prior, noise.prior;
  const auto w = LossWeights::from_alpha(0.9);
  const auto g1 = evaluate_loss(m, b, noise, w);
  const auto g2 = evaluate_loss(m, bb, nn, w);
  EXPECT_NEAR(g1.loss, g2.loss, 1e-12 * std::abs(g1.loss));
  for (int k = 0; k < 4; ++k) EXPECT_LT((g1.grad.nets[k] - g2.grad.nets[k]).norm(), 1e-10);
}

// A decoder that is a constant log-variance b, trained on a constant power c:
// d/db [log(pi e^b) + c e^-b] = 1 - c e^-b vanishes at b = log c.
TEST(Grad, VanishesAtStationaryPointOfOneParameterToy) {
  Rng rng(16);
  ModelDims d = toy_dims();
  d.bins = 1;
  auto m = make_random_model(d, rng);
  m.decoder.params().setZero();
  const double c = 2.3;
  m.decoder.bias(m.decoder.num_layers() - 1)[0] = std::log(c);
  FrameBatch b{Matrix::Constant(1, 1, 5.0), Matrix::Constant(1, 1, c), Matrix::Zero(5, 1)};
  const auto r = evaluate_loss(m, b, draw_loss_noise(d.latent, 1, rng), {0.5, 0.5, 0.0});
  const Vector& g = r.grad.nets[CvaeModel::kDecoder];
  EXPECT_NEAR(g[g.size() - 1], 0.0, 1e-15);
}

// With z disconnected from the decoder the reconstruction terms carry no
// information back to the encoder: its gradient is the KL gradient alone.
TEST(Grad, ZIgnoringDecoderLeavesOnlyKlOnEncoder) {
  Rng rng(17);
  auto m = make_random_model(toy_dims(), rng);
  m.decoder.weight(0).leftCols(4).setZero();
  const FrameBatch b = random_batch(toy_dims(), 4, rng);
  const auto noise = draw_loss_noise(4, 4, rng);
  const double alpha = 0.9;
  const auto full = evaluate_loss(m, b, noise, LossWeights::from_alpha(alpha));
  const auto kl_only = evaluate_loss(m, b, noise, {0.0, 0.0, alpha});
  EXPECT_LT((full.grad.nets[CvaeModel::kEncoder] - kl_only.grad.nets[CvaeModel::kEncoder]).norm(),
            1e-12 * (1.0 + kl_only.grad.nets[CvaeModel::kEncoder].norm()));
}
