// avsep/nmf.hpp

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
#include <random>
#include <vector>

#include "avsep/common.hpp"
#include "avsep/dsp.hpp"

namespace avsep {

inline constexpr double kNmfFloor = 1e-10;

/// Nonnegative factorization W (F x K) times H (K x N).
struct NmfModel {
  Matrix W;
  Matrix H;

  int rank() const { return static_cast<int>(W.cols()); }
  Matrix product() const { return W * H; }
};

/// Entries drawn uniformly from [0.1, 1.1).
inline Matrix random_positive(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.1);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline NmfModel random_nmf(int bins, int rank, int frames, Rng& rng) {
  if (rank < 1) throw ConfigError("NMF rank must be >= 1");
  NmfModel m;
  m.W = random_positive(bins, rank, rng);
  m.H = random_positive(rank, frames, rng);
  return m;
}

/// Noise variance of frame n: W h_n.
inline Vector noise_variance(const NmfModel& m, int n) {
  if (n < 0 || n >= m.H.cols())
    throw DataError("noise_variance: frame " + std::to_string(n) + " out of range");
  return m.W * m.H.col(n);
}

/// Itakura-Saito divergence sum(P/V - log(P/V) - 1).
inline double is_divergence(const Eigen::Ref<const Matrix>& P, const Eigen::Ref<const Matrix>& V) {
  const auto r = P.array() / V.array();
  return (r - r.log() - 1.0).sum();
}

struct IsNmfOptions {
  int iters = 200;
  /// Exponent applied to the multiplicative ratio. 1 is the classical
  /// heuristic update; 0.5 is the majorization-minimization form.
  double exponent = 1.0;
  double floor = kNmfFloor;
};

namespace detail {

inline void update_h(const Matrix& P, const Matrix& W, Matrix& H, double exponent, double floor) {
  const Matrix V = W * H;
  const Matrix num = W.transpose() * (P.array() / V.array().square()).matrix();
  const Matrix den = W.transpose() * V.cwiseInverse();
  H.array() *= (num.array() / den.array()).pow(exponent);
  H = H.cwiseMax(floor);
}

// Only columns [first_col, W.cols()) of W are updated.
inline void update_w(const Matrix& P, Matrix& W, const Matrix& H, double exponent, double floor,
                     Eigen::Index first_col = 0) {
  const Eigen::Index k = W.cols() - first_col;
  if (k <= 0) return;
  const Matrix V = W * H;
  const auto Hs = H.bottomRows(k);
  const Matrix num = (P.array() / V.array().square()).matrix() * Hs.transpose();
  const Matrix den = V.cwiseInverse() * Hs.transpose();
  W.rightCols(k).array() *= (num.array() / den.array()).pow(exponent);
  W.rightCols(k) = W.rightCols(k).cwiseMax(floor);
}

}  // namespace detail

struct IsNmfFit {
  NmfModel model;
  std::vector<double> divergence;  // after initialization and after each iteration
};

/// Itakura-Saito NMF of a power spectrogram by multiplicative updates,
/// starting from `init`. Power entries are floored at opts.floor.
inline IsNmfFit fit_is_nmf_from(const PowerSpectrogram& P, NmfModel init, const IsNmfOptions& opts) {
  if ((P.values.array() < 0).any()) throw DataError("fit_is_nmf: negative power");
  if (P.values.maxCoeff() <= 0.0) throw DataError("fit_is_nmf: all-zero power spectrogram");
  if (init.W.rows() != P.bins() || init.H.cols() != P.frames() || init.W.cols() != init.H.rows())
    throw DataError("fit_is_nmf: initial factors do not match the spectrogram");
  const Matrix Pf = P.values.cwiseMax(opts.floor);
  IsNmfFit fit{std::move(init), {}};
  fit.divergence.push_back(is_divergence(Pf, fit.model.product()));
  for (int it = 0; it < opts.iters; ++it) {
    detail::update_h(Pf, fit.model.W, fit.model.H, opts.exponent, opts.floor);
    detail::update_w(Pf, fit.model.W, fit.model.H, opts.exponent, opts.floor);
    fit.divergence.push_back(is_divergence(Pf, fit.model.product()));
  }
  return fit;
}

inline IsNmfFit fit_is_nmf(const PowerSpectrogram& P, int K, int iters, Rng& rng,
                           IsNmfOptions opts = {}) {
  if (K < 1) throw ConfigError("fit_is_nmf: K must be >= 1");
  opts.iters = iters;
  NmfModel init = random_nmf(P.bins(), K, P.frames(), rng);
  return fit_is_nmf_from(P, std::move(init), opts);
}

/// Result of the dictionary-based NMF separation baseline.
struct BaselineSeparation {
  ComplexSpectrogram speaker1;
  ComplexSpectrogram speaker2;
  ComplexSpectrogram noise;
};

/// Speaker-dependent NMF baseline: fixed speaker dictionaries W1, W2 plus a
/// free K_noise-rank noise model are fitted to |x|^2, then each source is the
/// Wiener-masked mixture. The three masks sum to one at every bin.
inline BaselineSeparation baseline_separate(const ComplexSpectrogram& x, const Matrix& W1,
                                            const Matrix& W2, int k_noise, int iters, Rng& rng,
                                            const IsNmfOptions& opts = {}) {
  const int F = x.bins(), N = x.frames();
  if (W1.rows() != F || W2.rows() != F)
    throw DataError("baseline_separate: dictionary rows do not match the spectrogram bins");
  if (k_noise < 1) throw ConfigError("baseline_separate: K_noise must be >= 1");
  const Eigen::Index k1 = W1.cols(), k2 = W2.cols();
  BaselineSeparation out;
  if (x.values.cwiseAbs().maxCoeff() == 0.0) {
    out.speaker1 = out.speaker2 = out.noise = x;
    return out;
  }
  const Matrix P = x.values.cwiseAbs2().cwiseMax(opts.floor);
  Matrix W(F, k1 + k2 + k_noise);
  W << W1.cwiseMax(opts.floor), W2.cwiseMax(opts.floor), random_positive(F, k_noise, rng);
  Matrix H = random_positive(W.cols(), N, rng);
  for (int it = 0; it < iters; ++it) {
    detail::update_h(P, W, H, opts.exponent, opts.floor);
    detail::update_w(P, W, H, opts.exponent, opts.floor, k1 + k2);
  }
  const Matrix V1 = W.leftCols(k1) * H.topRows(k1);
  const Matrix V2 = W.middleCols(k1, k2) * H.middleRows(k1, k2);
  const Matrix Vb = W.rightCols(k_noise) * H.bottomRows(k_noise);
  const Matrix V = V1 + V2 + Vb;
  out.speaker1.values = x.values.cwiseProduct(V1.cwiseQuotient(V).cast<std::complex<double>>());
  out.speaker2.values = x.values.cwiseProduct(V2.cwiseQuotient(V).cast<std::complex<double>>());
  out.noise.values = x.values.cwiseProduct(Vb.cwiseQuotient(V).cast<std::complex<double>>());
  return out;
}

}  // namespace avsep
