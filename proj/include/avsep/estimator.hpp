// avsep/estimator.hpp

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
#include <complex>
#include <utility>

#include "avsep/dsp.hpp"
#include "avsep/mcem.hpp"

namespace avsep {

struct SourceEstimate {
  ComplexSpectrogram spectrogram;  // scaled clean speech, gain absorbed
  Waveform waveform;
};

/// Wiener coefficient of speaker i at bin (f, n) for codes (z1, z2):
/// g_i sigma_f(z_i, v_i) / V_f(z1, z2).
inline double wiener_gain(const SeparationState& s, const SpeakerModels& models, int n, int f,
                          const Eigen::Ref<const Vector>& z1, const Eigen::Ref<const Vector>& z2, int i,
                          double variance_floor = 1e-6) {
  detail::check_speaker(i);
  const Vector si = decode_features(models[i], i == 1 ? z1 : z2, s.speaker(i).features.col(n));
  const Vector v = mixture_variance(s, models, n, z1, z2, variance_floor);
  return s.speaker(i).gain[n] * si[f] / v[f];
}

/// Posterior-mean masks averaged over the sample buffer: speaker 1, speaker 2
/// and noise. They sum to one at every bin.
inline std::array<Matrix, 3> average_masks(const SeparationState& s, const SampleBuffer& b,
                                           double variance_floor) {
  if (b.size() == 0) throw DataError("estimate_sources: empty sample buffer");
  const Matrix noise = s.noise.product();
  std::array<Matrix, 3> masks;
  for (auto& m : masks) m = Matrix::Zero(noise.rows(), noise.cols());
  for (int r = 0; r < b.size(); ++r) {
    const Matrix V = mixture_variances(s, b.sigma1[r], b.sigma2[r], variance_floor);
    masks[0] += (b.sigma1[r] * s.speaker(1).gain.asDiagonal()).cwiseQuotient(V);
    masks[1] += (b.sigma2[r] * s.speaker(2).gain.asDiagonal()).cwiseQuotient(V);
    masks[2] += noise.cwiseQuotient(V);
  }
  for (auto& m : masks) m /= b.size();
  return masks;
}

/// Posterior means of the two scaled speech spectrograms: the Monte-Carlo
/// average of each speaker's Wiener coefficient, applied to x.
inline std::pair<ComplexSpectrogram, ComplexSpectrogram> estimate_sources(
    const ComplexSpectrogram& x, const SeparationState& s, const SampleBuffer& b,
    double variance_floor = 1e-6) {
  const auto masks = average_masks(s, b, variance_floor);
  if (masks[0].rows() != x.bins() || masks[0].cols() != x.frames())
    throw DataError("estimate_sources: state does not match the mixture");
  return {ComplexSpectrogram{x.values.cwiseProduct(masks[0].cast<std::complex<double>>())},
          ComplexSpectrogram{x.values.cwiseProduct(masks[1].cast<std::complex<double>>())}};
}

struct SeparationOutput {
  SourceEstimate speaker1;
  SourceEstimate speaker2;
  McemResult mcem;
};

/// stft -> MCEM -> posterior-mean estimates -> istft. Output waveforms have
/// the input's length.
inline SeparationOutput separate(const Waveform& mix, const Eigen::Ref<const Matrix>& visual1,
                                 const Eigen::Ref<const Matrix>& visual2, const SpeakerModels& models,
                                 const StftConfig& stft_cfg, const McemConfig& cfg) {
  const ComplexSpectrogram x = stft(mix, stft_cfg);
  SeparationOutput out;
  out.mcem = run_mcem(x, visual1, visual2, models, cfg);
  if (cfg.final_sweeps > 0 || out.mcem.samples.size() == 0) {
    const int sweeps = cfg.final_sweeps > 0 ? std::max(cfg.final_sweeps, cfg.samples) : cfg.first_mh_iters;
    const int burn = std::min(cfg.final_sweeps > 0 ? sweeps / 2 : cfg.first_burn_in, sweeps - cfg.samples);
    out.mcem.samples = estep(out.mcem.state, models, x, cfg, sweeps, burn).samples;
  }
  auto [s1, s2] = estimate_sources(x, out.mcem.state, out.mcem.samples, cfg.variance_floor);
  out.speaker1.waveform = istft(s1, stft_cfg, mix.size(), mix.sample_rate);
  out.speaker2.waveform = istft(s2, stft_cfg, mix.size(), mix.sample_rate);
  out.speaker1.spectrogram = std::move(s1);
  out.speaker2.spectrogram = std::move(s2);
  for (const auto* w : {&out.speaker1.waveform, &out.speaker2.waveform})
    for (double v : w->samples)
      if (!std::isfinite(v)) throw NumericalError("separate: non-finite output sample");
  return out;
}

}  // namespace avsep
