// avsep/mcem.hpp

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

#include <cmath>
#include <numbers>
#include <vector>

#include "avsep/dsp.hpp"
#include "avsep/nmf.hpp"
#include "avsep/vae.hpp"

namespace avsep {

struct McemConfig {
  int em_iters = 100;
  // E-step schedule for the first EM iteration (cold chains) ...
  int first_mh_iters = 40;
  int first_burn_in = 30;
  // ... and for the following ones (warm chains).
  int mh_iters = 10;
  int burn_in = 0;
  int samples = 10;  // R, retained pairs per frame
  double epsilon = 0.01;
  double variance_floor = 1e-6;
  double gain_floor = 1e-10;
  int noise_rank = 10;
  /// Stop once |Q_t - Q_{t-1}| < tol |Q_{t-1}|; 0 runs all em_iters.
  double tol = 0.0;
  /// Extra MH sweeps drawn at the final parameters for source estimation;
  /// 0 reuses the last E-step's buffer.
  int final_sweeps = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (em_iters < 0) throw ConfigError("em_iters must be >= 0");
    if (samples < 1) throw ConfigError("samples (R) must be >= 1");
    if (first_burn_in < 0 || burn_in < 0) throw ConfigError("burn_in must be >= 0");
    if (first_mh_iters < first_burn_in + samples || mh_iters < burn_in + samples)
      throw ConfigError("MH sweeps per E-step must be >= burn_in + R");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(variance_floor > 0.0) || !(gain_floor > 0.0)) throw ConfigError("floors must be positive");
    if (noise_rank < 1) throw ConfigError("noise_rank must be >= 1");
    if (final_sweeps < 0) throw ConfigError("final_sweeps must be >= 0");
  }
};

/// Decoder used for each speaker. Both point at the same model in the
/// speaker-independent setting.
struct SpeakerModels {
  const CvaeModel* speaker1;
  const CvaeModel* speaker2;

  const CvaeModel& operator[](int i) const { return i == 1 ? *speaker1 : *speaker2; }
};

inline SpeakerModels shared_model(const CvaeModel& m) { return {&m, &m}; }

/// Per-speaker quantities of the test-time model.
struct SpeakerState {
  Vector gain;        // N, frame gains g_n
  Matrix z;           // L x N, current chain position
  Matrix sigma;       // F x N, decoder output at z
  Matrix features;    // M x N, visual features of the embeddings
  Matrix prior_mean;  // L x N
  Matrix prior_var;   // L x N
};

struct SeparationState {
  NmfModel noise;
  SpeakerState spk[2];
  std::vector<Rng> frame_rngs;  // one stream per frame

  int frames() const { return static_cast<int>(noise.H.cols()); }
  SpeakerState& speaker(int i) { return spk[i - 1]; }
  const SpeakerState& speaker(int i) const { return spk[i - 1]; }
};

/// Retained MH samples: entry r holds all frames' r-th pair.
struct SampleBuffer {
  std::vector<Matrix> z1, z2;          // L x N each
  std::vector<Matrix> sigma1, sigma2;  // F x N each, decoder output at z

  int size() const { return static_cast<int>(z1.size()); }
  const std::vector<Matrix>& sigma(int i) const { return i == 1 ? sigma1 : sigma2; }
};

namespace detail {

inline void check_speaker(int i) {
  if (i != 1 && i != 2) throw DataError("speaker index must be 1 or 2");
}

inline double log_gauss_diag(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& mean,
                             const Eigen::Ref<const Vector>& var) {
  double s = 0.0;
  for (Eigen::Index l = 0; l < z.size(); ++l) {
    const double d = z[l] - mean[l];
    s += -0.5 * std::log(2.0 * std::numbers::pi * var[l]) - 0.5 * d * d / var[l];
  }
  return s;
}

}  // namespace detail

/// Initial state: prior-mean chains, unit gains, random positive noise
/// factors. `visual1`/`visual2` are M_raw x N raw embeddings.
inline SeparationState init_state(const ComplexSpectrogram& x, const Eigen::Ref<const Matrix>& visual1,
                                  const Eigen::Ref<const Matrix>& visual2, const SpeakerModels& models,
                                  const McemConfig& cfg) {
  cfg.validate();
  const int F = x.bins(), N = x.frames();
  SeparationState s;
  for (int i = 1; i <= 2; ++i) {
    const CvaeModel& m = models[i];
    const auto& v = (i == 1) ? visual1 : visual2;
    if (m.dims.bins != F)
      throw DataError("model has " + std::to_string(m.dims.bins) + " bins, mixture has " +
                      std::to_string(F));
    if (v.cols() != N)
      throw DataError("speaker " + std::to_string(i) + " has " + std::to_string(v.cols()) +
                      " embedding frames, mixture has " + std::to_string(N));
    SpeakerState& sp = s.speaker(i);
    sp.features = visual_features(m, v);
    std::tie(sp.prior_mean, sp.prior_var) = prior_features(m, sp.features);
    sp.z = sp.prior_mean;
    sp.sigma = decode_features(m, sp.z, sp.features);
    sp.gain = Vector::Ones(N);
  }
  if (models[1].dims.latent != models[2].dims.latent) throw DataError("speaker models differ in L");
  Rng init = make_rng(cfg.seed, "mcem/init");
  s.noise = random_nmf(F, cfg.noise_rank, N, init);
  s.frame_rngs.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) s.frame_rngs.push_back(make_rng(cfg.seed, "mcem/frame", static_cast<std::uint64_t>(n)));
  return s;
}

/// V_x for frame n: g1 sigma(z1, v1) + g2 sigma(z2, v2) + W h_n, floored.
inline Vector mixture_variance(const SeparationState& s, const SpeakerModels& models, int n,
                               const Eigen::Ref<const Vector>& z1, const Eigen::Ref<const Vector>& z2,
                               double variance_floor) {
  const Vector s1 = decode_features(models[1], z1, s.speaker(1).features.col(n));
  const Vector s2 = decode_features(models[2], z2, s.speaker(2).features.col(n));
  const Vector v = s.speaker(1).gain[n] * s1 + s.speaker(2).gain[n] * s2 + noise_variance(s.noise, n);
  return v.cwiseMax(variance_floor);
}

/// log N_c(x_n; 0, diag(V)).
inline double mixture_loglik(const Eigen::Ref<const Eigen::VectorXcd>& x_n,
                             const Eigen::Ref<const Vector>& V) {
  if (x_n.size() != V.size()) throw DataError("mixture_loglik: dimension mismatch");
  double ll = 0.0;
  for (Eigen::Index f = 0; f < V.size(); ++f)
    ll += -std::log(std::numbers::pi * V[f]) - std::norm(x_n[f]) / V[f];
  return ll;
}

/// Mixture variances F x N of one sample pair given frame-wise speech
/// variances.
inline Matrix mixture_variances(const SeparationState& s, const Matrix& sigma1, const Matrix& sigma2,
                                double variance_floor) {
  Matrix V = s.noise.product();
  V.noalias() += sigma1 * s.speaker(1).gain.asDiagonal();
  V.noalias() += sigma2 * s.speaker(2).gain.asDiagonal();
  return V.cwiseMax(variance_floor);
}

/// One Metropolis-Hastings sweep over all frames: a joint symmetric Gaussian
/// random-walk proposal for both speakers' codes, accepted with probability
/// min(1, target(candidate) / target(current)) evaluated in the log domain.
/// Returns the number of accepted moves.
inline int mh_sweep(SeparationState& s, const SpeakerModels& models, const ComplexSpectrogram& x,
                    const McemConfig& cfg) {
  const int N = s.frames();
  const int L = static_cast<int>(s.speaker(1).z.rows());
  Matrix cand[2] = {Matrix(L, N), Matrix(L, N)};
  std::vector<double> log_u(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    Rng& rng = s.frame_rngs[static_cast<std::size_t>(n)];
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 2; ++i)
      for (int l = 0; l < L; ++l) cand[i](l, n) = s.spk[i].z(l, n) + cfg.epsilon * normal(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    log_u[static_cast<std::size_t>(n)] = std::log(u(rng));
  }
  const Matrix sig1 = decode_features(models[1], cand[0], s.speaker(1).features);
  const Matrix sig2 = decode_features(models[2], cand[1], s.speaker(2).features);
  const Matrix noise = s.noise.product();

  int accepted = 0;
  for (int n = 0; n < N; ++n) {
    const SpeakerState& a = s.speaker(1);
    const SpeakerState& b = s.speaker(2);
    const Vector v_cur = (a.gain[n] * a.sigma.col(n) + b.gain[n] * b.sigma.col(n) + noise.col(n))
                             .cwiseMax(cfg.variance_floor);
    const Vector v_new = (a.gain[n] * sig1.col(n) + b.gain[n] * sig2.col(n) + noise.col(n))
                             .cwiseMax(cfg.variance_floor);
    const double lp_cur = mixture_loglik(x.values.col(n), v_cur) +
                          detail::log_gauss_diag(a.z.col(n), a.prior_mean.col(n), a.prior_var.col(n)) +
                          detail::log_gauss_diag(b.z.col(n), b.prior_mean.col(n), b.prior_var.col(n));
    const double lp_new = mixture_loglik(x.values.col(n), v_new) +
                          detail::log_gauss_diag(cand[0].col(n), a.prior_mean.col(n), a.prior_var.col(n)) +
                          detail::log_gauss_diag(cand[1].col(n), b.prior_mean.col(n), b.prior_var.col(n));
    if (log_u[static_cast<std::size_t>(n)] < lp_new - lp_cur) {
      s.spk[0].z.col(n) = cand[0].col(n);
      s.spk[1].z.col(n) = cand[1].col(n);
      s.spk[0].sigma.col(n) = sig1.col(n);
      s.spk[1].sigma.col(n) = sig2.col(n);
      ++accepted;
    }
  }
  return accepted;
}

struct EStepResult {
  SampleBuffer samples;
  double acceptance_rate = 0.0;
};

/// Runs `sweeps` MH sweeps, discards the first `burn_in` and keeps R states
/// evenly thinned from the rest (the last sweep of each block).
inline EStepResult estep(SeparationState& s, const SpeakerModels& models, const ComplexSpectrogram& x,
                         const McemConfig& cfg, int sweeps, int burn_in) {
  const int R = cfg.samples;
  if (sweeps < burn_in + R) throw ConfigError("estep: sweeps must be >= burn_in + R");
  const int stride = (sweeps - burn_in) / R;
  EStepResult res;
  long accepted = 0;
  for (int t = 0; t < sweeps; ++t) {
    accepted += mh_sweep(s, models, x, cfg);
    const int after = t + 1 - burn_in;
    if (after > 0 && after % stride == 0 && res.samples.size() < R) {
      res.samples.z1.push_back(s.speaker(1).z);
      res.samples.z2.push_back(s.speaker(2).z);
      res.samples.sigma1.push_back(s.speaker(1).sigma);
      res.samples.sigma2.push_back(s.speaker(2).sigma);
    }
  }
  res.acceptance_rate = static_cast<double>(accepted) / (static_cast<double>(sweeps) * s.frames());
  return res;
}

inline EStepResult estep(SeparationState& s, const SpeakerModels& models, const ComplexSpectrogram& x,
                         const McemConfig& cfg, bool first_iteration = false) {
  return first_iteration ? estep(s, models, x, cfg, cfg.first_mh_iters, cfg.first_burn_in)
                         : estep(s, models, x, cfg, cfg.mh_iters, cfg.burn_in);
}

namespace detail {

struct MixtureSums {
  Matrix inv;     // sum_r V^-1
  Matrix inv_sq;  // sum_r V^-2
};

inline MixtureSums mixture_sums(const SeparationState& s, const SampleBuffer& b, double floor) {
  if (b.size() == 0) throw DataError("M-step needs at least one sample");
  MixtureSums m{Matrix::Zero(s.noise.W.rows(), s.frames()), Matrix::Zero(s.noise.W.rows(), s.frames())};
  for (int r = 0; r < b.size(); ++r) {
    const Matrix V = mixture_variances(s, b.sigma1[r], b.sigma2[r], floor);
    m.inv += V.cwiseInverse();
    m.inv_sq += V.cwiseInverse().cwiseAbs2();
  }
  return m;
}

}  // namespace detail

/// Multiplier applied to H by the M-step (before flooring).
inline Matrix h_multiplier(const SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                           double variance_floor) {
  const auto sums = detail::mixture_sums(s, b, variance_floor);
  const Matrix P = x.values.cwiseAbs2();
  const Matrix num = s.noise.W.transpose() * P.cwiseProduct(sums.inv_sq);
  const Matrix den = s.noise.W.transpose() * sums.inv;
  return num.cwiseQuotient(den).cwiseSqrt();
}

inline Matrix w_multiplier(const SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                           double variance_floor) {
  const auto sums = detail::mixture_sums(s, b, variance_floor);
  const Matrix P = x.values.cwiseAbs2();
  const Matrix num = P.cwiseProduct(sums.inv_sq) * s.noise.H.transpose();
  const Matrix den = sums.inv * s.noise.H.transpose();
  return num.cwiseQuotient(den).cwiseSqrt();
}

inline Vector gain_multiplier(const SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                              int speaker, double variance_floor) {
  detail::check_speaker(speaker);
  if (b.size() == 0) throw DataError("M-step needs at least one sample");
  const Matrix P = x.values.cwiseAbs2();
  Matrix num = Matrix::Zero(P.rows(), P.cols()), den = Matrix::Zero(P.rows(), P.cols());
  for (int r = 0; r < b.size(); ++r) {
    const Matrix V = mixture_variances(s, b.sigma1[r], b.sigma2[r], variance_floor);
    const Matrix& sig = b.sigma(speaker)[static_cast<std::size_t>(r)];
    num += sig.cwiseQuotient(V.cwiseAbs2());
    den += sig.cwiseQuotient(V);
  }
  const Vector n = P.cwiseProduct(num).colwise().sum().transpose();
  const Vector d = den.colwise().sum().transpose();
  return n.cwiseQuotient(d).cwiseSqrt();
}

inline void mstep_h(SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                    const McemConfig& cfg) {
  s.noise.H = s.noise.H.cwiseProduct(h_multiplier(s, x, b, cfg.variance_floor)).cwiseMax(kNmfFloor);
}

inline void mstep_w(SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                    const McemConfig& cfg) {
  s.noise.W = s.noise.W.cwiseProduct(w_multiplier(s, x, b, cfg.variance_floor)).cwiseMax(kNmfFloor);
}

inline void mstep_gains(SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                        int speaker, const McemConfig& cfg) {
  const Vector mult = gain_multiplier(s, x, b, speaker, cfg.variance_floor);
  Vector& g = s.speaker(speaker).gain;
  g = g.cwiseProduct(mult).cwiseMax(cfg.gain_floor);
}

/// Monte-Carlo Q: mean over retained samples of sum_n log p(x_n | z, v; Phi).
inline double monte_carlo_q(const SeparationState& s, const ComplexSpectrogram& x, const SampleBuffer& b,
                            double variance_floor) {
  if (b.size() == 0) throw DataError("monte_carlo_q: empty sample buffer");
  const Matrix P = x.values.cwiseAbs2();
  double q = 0.0;
  for (int r = 0; r < b.size(); ++r) {
    const Matrix V = mixture_variances(s, b.sigma1[r], b.sigma2[r], variance_floor);
    q += -(std::numbers::pi * V.array()).log().sum() - (P.array() / V.array()).sum();
  }
  return q / b.size();
}

struct QTraceRow {
  int iteration;
  double q;
  double acceptance_rate;
};

struct McemResult {
  SeparationState state;
  SampleBuffer samples;  // last E-step's buffer
  std::vector<QTraceRow> trace;
};

/// Monte-Carlo EM: alternates an MH E-step with multiplicative updates of H,
/// W, g1 and g2. Chains are warm-started across iterations.
inline McemResult run_mcem(const ComplexSpectrogram& x, const Eigen::Ref<const Matrix>& visual1,
                           const Eigen::Ref<const Matrix>& visual2, const SpeakerModels& models,
                           const McemConfig& cfg) {
  McemResult res{init_state(x, visual1, visual2, models, cfg), {}, {}};
  SeparationState& s = res.state;
  for (int it = 0; it < cfg.em_iters; ++it) {
    EStepResult e = estep(s, models, x, cfg, it == 0);
    mstep_h(s, x, e.samples, cfg);
    mstep_w(s, x, e.samples, cfg);
    mstep_gains(s, x, e.samples, 1, cfg);
    mstep_gains(s, x, e.samples, 2, cfg);
    const double q = monte_carlo_q(s, x, e.samples, cfg.variance_floor);
    if (!std::isfinite(q)) throw NumericalError("MCEM: Q became non-finite");
    res.trace.push_back({it, q, e.acceptance_rate});
    res.samples = std::move(e.samples);
    if (cfg.tol > 0.0 && it > 0) {
      const double prev = res.trace[res.trace.size() - 2].q;
      if (std::abs(q - prev) < cfg.tol * std::abs(prev)) break;
    }
  }
  return res;
}

}  // namespace avsep
