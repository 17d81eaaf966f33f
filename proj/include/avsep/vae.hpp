// avsep/vae.hpp

// Copyright 2026  avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "avsep/common.hpp"
#include "avsep/dense.hpp"

namespace avsep {

/// Diagonal Gaussian N(mean, diag(variance)).
struct GaussDiag {
  Vector mean;
  Vector variance;

  Eigen::Index dim() const { return mean.size(); }
};

struct ModelDims {
  int bins = 513;           // F
  int latent = 16;          // L
  int visual = 8;           // M, output of the visual front end
  int visual_raw = 16;      // M_raw, raw embedding fed to the front end
  int hidden = 64;          // width of encoder / prior / decoder hidden layers
  int hidden_layers = 1;    // hidden layers per network
  int frontend_hidden = 32;

  bool operator==(const ModelDims&) const = default;
};

/// Full-scale preset: F = 513 and a 128-dimensional latent space.
inline ModelDims full_scale_dims() {
  ModelDims d;
  d.bins = 513;
  d.latent = 128;
  return d;
}

/// Offset inside the encoder's log compression of its power-spectrum input.
inline constexpr double kEncoderLogOffset = 1e-8;

/// Conditional VAE: visual front end, encoder q(z | x, v), prior network
/// p(z | v) and decoder sigma_s(z, v). The three heads see the visual
/// embedding only through the front end's output.
struct CvaeModel {
  enum NetIndex { kFrontend = 0, kEncoder = 1, kPrior = 2, kDecoder = 3 };

  ModelDims dims;
  double variance_floor = 1e-6;
  DenseNet frontend;
  DenseNet encoder;
  DenseNet prior_net;
  DenseNet decoder;

  std::array<DenseNet*, 4> nets() { return {&frontend, &encoder, &prior_net, &decoder}; }
  std::array<const DenseNet*, 4> nets() const {
    return {&frontend, &encoder, &prior_net, &decoder};
  }
};

namespace detail {

inline std::vector<int> stack_dims(int in, int hidden, int layers, int out) {
  std::vector<int> d{in};
  for (int i = 0; i < layers; ++i) d.push_back(hidden);
  d.push_back(out);
  return d;
}

}  // namespace detail

/// Builds a model with the given shape; parameters are zero.
inline CvaeModel make_model(const ModelDims& d, double variance_floor = 1e-6) {
  if (variance_floor <= 0) throw ConfigError("variance_floor must be positive");
  CvaeModel m;
  m.dims = d;
  m.variance_floor = variance_floor;
  m.frontend = DenseNet({d.visual_raw, d.frontend_hidden, d.visual}, OutputHead::Plain);
  m.encoder = DenseNet(detail::stack_dims(d.bins + d.visual, d.hidden, d.hidden_layers, 2 * d.latent),
                       OutputHead::MeanLogVariance);
  m.prior_net = DenseNet(detail::stack_dims(d.visual, d.hidden, d.hidden_layers, 2 * d.latent),
                         OutputHead::MeanLogVariance);
  m.decoder = DenseNet(detail::stack_dims(d.latent + d.visual, d.hidden, d.hidden_layers, d.bins),
                       OutputHead::LogVariance);
  return m;
}

inline CvaeModel make_random_model(const ModelDims& d, Rng& rng, double variance_floor = 1e-6) {
  CvaeModel m = make_model(d, variance_floor);
  for (DenseNet* n : m.nets()) n->init_random(rng);
  return m;
}

inline double floored_exp(double x, double floor) { return std::max(std::exp(x), floor); }

/// Visual features M x B for raw embeddings M_raw x B.
inline Matrix visual_features(const CvaeModel& m, const Eigen::Ref<const Matrix>& raw) {
  if (raw.rows() != m.dims.visual_raw)
    throw DataError("visual embedding has " + std::to_string(raw.rows()) +
                    " dims, model expects " + std::to_string(m.dims.visual_raw));
  return m.frontend.forward(raw);
}

/// Decoder variances F x B from latent codes L x B and visual features M x B.
inline Matrix decode_features(const CvaeModel& m, const Eigen::Ref<const Matrix>& z,
                              const Eigen::Ref<const Matrix>& features) {
  if (z.rows() != m.dims.latent || features.rows() != m.dims.visual || z.cols() != features.cols())
    throw DataError("decode: dimension mismatch");
  Matrix in(m.dims.latent + m.dims.visual, z.cols());
  in << z, features;
  Matrix out = m.decoder.forward(in);
  const double fl = m.variance_floor;
  return out.unaryExpr([fl](double x) { return floored_exp(x, fl); });
}

inline Vector decode(const CvaeModel& m, const Eigen::Ref<const Vector>& z,
                     const Eigen::Ref<const Vector>& v_raw) {
  if (z.size() != m.dims.latent) throw DataError("decode: latent dimension mismatch");
  const Matrix feat = visual_features(m, v_raw);
  return decode_features(m, z, feat);
}

namespace detail {

inline GaussDiag split_head(const Eigen::Ref<const Vector>& out, int latent, double floor) {
  GaussDiag g;
  g.mean = out.head(latent);
  g.variance = out.tail(latent).unaryExpr([floor](double x) { return floored_exp(x, floor); });
  return g;
}

}  // namespace detail

inline GaussDiag encode(const CvaeModel& m, const Eigen::Ref<const Vector>& power_frame,
                        const Eigen::Ref<const Vector>& v_raw) {
  if (power_frame.size() != m.dims.bins) throw DataError("encode: power frame dimension mismatch");
  if ((power_frame.array() < 0).any()) throw DataError("encode: negative power entry");
  const Vector feat = visual_features(m, v_raw);
  Vector in(m.dims.bins + m.dims.visual);
  in << (power_frame.array() + kEncoderLogOffset).log().matrix(), feat;
  return detail::split_head(m.encoder.forward(in), m.dims.latent, m.variance_floor);
}

inline GaussDiag prior(const CvaeModel& m, const Eigen::Ref<const Vector>& v_raw) {
  const Vector feat = visual_features(m, v_raw);
  return detail::split_head(m.prior_net.forward(feat), m.dims.latent, m.variance_floor);
}

/// Prior parameters for a batch of visual features: rows [mean; variance].
inline std::pair<Matrix, Matrix> prior_features(const CvaeModel& m,
                                                const Eigen::Ref<const Matrix>& features) {
  const Matrix out = m.prior_net.forward(features);
  const double fl = m.variance_floor;
  const int L = m.dims.latent;
  return {out.topRows(L),
          out.bottomRows(L).unaryExpr([fl](double x) { return floored_exp(x, fl); })};
}

inline Vector reparam_sample(const GaussDiag& g, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(g.dim());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z[i] = g.mean[i] + std::sqrt(g.variance[i]) * normal(rng);
  return z;
}

/// KL(q || p) between diagonal Gaussians.
inline double kl_gauss_diag(const GaussDiag& q, const GaussDiag& p) {
  if (q.dim() != p.dim()) throw DataError("kl_gauss_diag: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index l = 0; l < q.dim(); ++l) {
    const double d = q.mean[l] - p.mean[l];
    kl += std::log(p.variance[l] / q.variance[l]) + (q.variance[l] + d * d) / p.variance[l] - 1.0;
  }
  return 0.5 * kl;
}

/// log N_c(s; 0, diag(variances)) given |s|^2 in `power_frame`.
inline double recon_loglik(const Eigen::Ref<const Vector>& power_frame,
                           const Eigen::Ref<const Vector>& variances) {
  if (power_frame.size() != variances.size()) throw DataError("recon_loglik: dimension mismatch");
  double ll = 0.0;
  for (Eigen::Index f = 0; f < power_frame.size(); ++f)
    ll += -std::log(std::numbers::pi * variances[f]) - power_frame[f] / variances[f];
  return ll;
}

/// A batch of training triples, one column per frame.
struct FrameBatch {
  Matrix mix_power;    // F x B, encoder input
  Matrix clean_power;  // F x B, reconstruction target
  Matrix visual;       // M_raw x B

  Eigen::Index size() const { return clean_power.cols(); }
};

/// Standard-normal draws used by the reparameterized samples of a batch.
struct LossNoise {
  Matrix posterior;  // L x B, z_q = mu_q + sqrt(var_q) * eps
  Matrix prior;      // L x B, z_p = mu_p + sqrt(var_p) * eps
};

inline LossNoise draw_loss_noise(int latent, Eigen::Index batch, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LossNoise n{Matrix(latent, batch), Matrix(latent, batch)};
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int l = 0; l < latent; ++l) n.posterior(l, b) = normal(rng);
    for (int l = 0; l < latent; ++l) n.prior(l, b) = normal(rng);
  }
  return n;
}

/// Coefficients of the three loss terms. The loss is
///   -recon_q * E_q[log p(s|z,v)] - recon_p * E_p[log p(s|z,v)] + kl * KL(q || p).
struct LossWeights {
  double recon_q = 0.9;
  double recon_p = 0.1;
  double kl = 0.9;

  static LossWeights from_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    return {alpha, 1.0 - alpha, alpha};
  }
};

/// Per-net gradients in CvaeModel::nets() order.
struct CvaeGradient {
  std::array<Vector, 4> nets;

  static CvaeGradient zeros_like(const CvaeModel& m) {
    CvaeGradient g;
    auto ns = m.nets();
    for (std::size_t i = 0; i < ns.size(); ++i) g.nets[i] = Vector::Zero(ns[i]->num_params());
    return g;
  }
};

struct LossResult {
  double loss = 0.0;  // mean over the batch
  CvaeGradient grad;
};

namespace detail {

inline void check_batch(const CvaeModel& m, const FrameBatch& b) {
  if (b.size() == 0) throw DataError("empty batch");
  if (b.mix_power.rows() != m.dims.bins || b.clean_power.rows() != m.dims.bins ||
      b.visual.rows() != m.dims.visual_raw || b.mix_power.cols() != b.size() ||
      b.visual.cols() != b.size())
    throw DataError("batch dimensions do not match the model");
}

}  // namespace detail

/// Mean batch loss and, when `want_grad`, its gradient by reverse-mode
/// differentiation with the reparameterization noise held fixed.
inline LossResult evaluate_loss(const CvaeModel& m, const FrameBatch& batch, const LossNoise& noise,
                                const LossWeights& w, bool want_grad = true) {
  detail::check_batch(m, batch);
  const int L = m.dims.latent, F = m.dims.bins, M = m.dims.visual;
  const Eigen::Index B = batch.size();
  const double fl = m.variance_floor;

  DenseNet::Cache c_front, c_enc, c_prior, c_dec;
  const Matrix feat = m.frontend.forward(batch.visual, c_front);

  Matrix enc_in(F + M, B);
  enc_in << (batch.mix_power.array() + kEncoderLogOffset).log().matrix(), feat;
  const Matrix enc_out = m.encoder.forward(enc_in, c_enc);
  const Matrix pri_out = m.prior_net.forward(feat, c_prior);

  const Matrix mu_q = enc_out.topRows(L);
  const Matrix var_q = enc_out.bottomRows(L).unaryExpr([fl](double x) { return floored_exp(x, fl); });
  const Matrix mu_p = pri_out.topRows(L);
  const Matrix var_p = pri_out.bottomRows(L).unaryExpr([fl](double x) { return floored_exp(x, fl); });
  const Matrix sd_q = var_q.cwiseSqrt();
  const Matrix sd_p = var_p.cwiseSqrt();

  // Decoder runs once on [q-samples | p-samples].
  Matrix dec_in(L + M, 2 * B);
  dec_in.topLeftCorner(L, B) = mu_q + sd_q.cwiseProduct(noise.posterior);
  dec_in.topRightCorner(L, B) = mu_p + sd_p.cwiseProduct(noise.prior);
  dec_in.bottomLeftCorner(M, B) = feat;
  dec_in.bottomRightCorner(M, B) = feat;
  const Matrix dec_out = m.decoder.forward(dec_in, c_dec);
  const Matrix sigma = dec_out.unaryExpr([fl](double x) { return floored_exp(x, fl); });

  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double rq = recon_loglik(batch.clean_power.col(b), sigma.col(b));
    const double rp = recon_loglik(batch.clean_power.col(b), sigma.col(B + b));
    const double kl = kl_gauss_diag({mu_q.col(b), var_q.col(b)}, {mu_p.col(b), var_p.col(b)});
    total += -w.recon_q * rq - w.recon_p * rp + w.kl * kl;
  }
  LossResult res;
  res.loss = total / static_cast<double>(B);
  if (!want_grad) return res;

  res.grad = CvaeGradient::zeros_like(m);
  const double inv_b = 1.0 / static_cast<double>(B);

  // d(-recon)/d(dec_out) = (1 - |s|^2 / sigma) where the floor is inactive.
  Matrix d_dec(F, 2 * B);
  for (Eigen::Index b = 0; b < 2 * B; ++b) {
    const double coef = (b < B ? w.recon_q : w.recon_p) * inv_b;
    const auto target = batch.clean_power.col(b % B);
    for (int f = 0; f < F; ++f) {
      const double s = sigma(f, b);
      d_dec(f, b) = (std::exp(dec_out(f, b)) > fl) ? coef * (1.0 - target[f] / s) : 0.0;
    }
  }
  const Matrix d_dec_in = m.decoder.backward(c_dec, d_dec, res.grad.nets[CvaeModel::kDecoder]);

  Matrix d_feat = d_dec_in.bottomLeftCorner(M, B) + d_dec_in.bottomRightCorner(M, B);
  const Matrix dz_q = d_dec_in.topLeftCorner(L, B);
  const Matrix dz_p = d_dec_in.topRightCorner(L, B);

  const double kw = w.kl * inv_b;
  const Matrix diff = mu_q - mu_p;
  Matrix d_mu_q = dz_q + kw * diff.cwiseQuotient(var_p);
  Matrix d_mu_p = dz_p - kw * diff.cwiseQuotient(var_p);
  Matrix d_var_q = dz_q.cwiseProduct(noise.posterior).cwiseQuotient(2.0 * sd_q) +
                   kw * 0.5 * (var_p.cwiseInverse() - var_q.cwiseInverse());
  Matrix d_var_p = dz_p.cwiseProduct(noise.prior).cwiseQuotient(2.0 * sd_p) +
                   kw * 0.5 * (var_p.cwiseInverse() -
                               (var_q + diff.cwiseAbs2()).cwiseQuotient(var_p.cwiseAbs2()));

  auto logvar_grad = [fl](const Matrix& d_var, const Matrix& var, const Matrix& raw) {
    Matrix g(d_var.rows(), d_var.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        g(i, j) = std::exp(raw(i, j)) > fl ? d_var(i, j) * var(i, j) : 0.0;
    return g;
  };

  Matrix d_enc(2 * L, B);
  d_enc << d_mu_q, logvar_grad(d_var_q, var_q, enc_out.bottomRows(L));
  Matrix d_pri(2 * L, B);
  d_pri << d_mu_p, logvar_grad(d_var_p, var_p, pri_out.bottomRows(L));

  const Matrix d_enc_in = m.encoder.backward(c_enc, d_enc, res.grad.nets[CvaeModel::kEncoder]);
  d_feat += d_enc_in.bottomRows(M);
  d_feat += m.prior_net.backward(c_prior, d_pri, res.grad.nets[CvaeModel::kPrior]);
  m.frontend.backward(c_front, d_feat, res.grad.nets[CvaeModel::kFrontend]);
  return res;
}

/// Single-frame training loss with trade-off `alpha`, one reparameterized
/// draw from q and one from the prior. The encoder sees the mixture power,
/// the reconstruction targets the clean power. Lower is better.
inline double loss(const CvaeModel& m, const Eigen::Ref<const Vector>& mix_power_frame,
                   const Eigen::Ref<const Vector>& clean_power_frame,
                   const Eigen::Ref<const Vector>& v_raw, double alpha, Rng& rng) {
  FrameBatch b{mix_power_frame, clean_power_frame, v_raw};
  const LossNoise noise = draw_loss_noise(m.dims.latent, 1, rng);
  return evaluate_loss(m, b, noise, LossWeights::from_alpha(alpha), false).loss;
}

/// Gradient of the mean batch loss with respect to all parameters.
inline LossResult grad(const CvaeModel& m, const FrameBatch& batch, double alpha, Rng& rng) {
  detail::check_batch(m, batch);
  const LossNoise noise = draw_loss_noise(m.dims.latent, batch.size(), rng);
  return evaluate_loss(m, batch, noise, LossWeights::from_alpha(alpha), true);
}

}  // namespace avsep
