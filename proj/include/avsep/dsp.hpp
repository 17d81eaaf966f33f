// avsep/dsp.hpp

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
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "avsep/common.hpp"

namespace avsep {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

enum class WindowKind { SqrtHann };

/// STFT framing. The analysis and synthesis windows are both square-root
/// periodic Hann, which is constant-overlap-add whenever fft_size is an
/// integer multiple (>= 2) of hop.
struct StftConfig {
  int fft_size = 1024;
  int hop = 512;
  WindowKind window = WindowKind::SqrtHann;

  int num_bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (fft_size < 4 || fft_size % 2 != 0)
      throw ConfigError("stft: fft_size must be even and >= 4");
    if (hop <= 0 || hop > fft_size)
      throw ConfigError("stft: hop must satisfy 0 < hop <= fft_size");
    if (fft_size % hop != 0 || fft_size / hop < 2)
      throw ConfigError("stft: sqrt-Hann pair is only COLA for hop = fft_size/k, k >= 2");
  }

  /// Number of frames produced for a signal of `length` samples.
  int num_frames(std::size_t length) const {
    const std::size_t span = length + static_cast<std::size_t>(fft_size - hop);
    return static_cast<int>((span + hop - 1) / hop);
  }

  /// Time (seconds) of the centre of frame `t`, relative to the first sample.
  double frame_center_seconds(int t, int sample_rate) const {
    return (static_cast<double>(t) * hop + fft_size / 2.0 - (fft_size - hop)) /
           sample_rate;
  }
};

/// F x N one-sided STFT coefficients.
struct ComplexSpectrogram {
  ComplexMatrix values;

  int bins() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

/// F x N entrywise |.|^2 of a ComplexSpectrogram.
struct PowerSpectrogram {
  Matrix values;

  int bins() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

inline std::vector<double> analysis_window(const StftConfig& c) {
  std::vector<double> w(c.fft_size);
  for (int i = 0; i < c.fft_size; ++i)
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / c.fft_size));
  return w;
}

// The signal is preceded by fft_size - hop zeros and zero-padded at the tail,
// so every input sample is covered by exactly fft_size / hop frames.
inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& c) {
  c.validate();
  if (w.size() < static_cast<std::size_t>(c.fft_size))
    throw DataError("stft: input too short");
  const int F = c.num_bins();
  const int N = c.num_frames(w.size());
  const int offset = c.fft_size - c.hop;
  const auto win = analysis_window(c);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(c.fft_size);
  std::vector<std::complex<double>> spec;

  ComplexSpectrogram out{ComplexMatrix::Zero(F, N)};
  for (int t = 0; t < N; ++t) {
    const long start = static_cast<long>(t) * c.hop - offset;
    for (int i = 0; i < c.fft_size; ++i) {
      const long j = start + i;
      const double x = (j >= 0 && j < static_cast<long>(w.size())) ? w.samples[j] : 0.0;
      frame[i] = x * win[i];
    }
    fft.fwd(spec, frame);
    for (int f = 0; f < F; ++f) out.values(f, t) = spec[f];
  }
  return out;
}

/// Weighted overlap-add inverse of stft(), truncated or zero-padded to
/// `length` samples.
inline Waveform istft(const ComplexSpectrogram& s, const StftConfig& c,
                      std::size_t length, int sample_rate = 16000) {
  c.validate();
  if (s.bins() != c.num_bins())
    throw DataError("istft: spectrogram has " + std::to_string(s.bins()) +
                    " bins, config expects " + std::to_string(c.num_bins()));
  const int N = s.frames();
  const int offset = c.fft_size - c.hop;
  const auto win = analysis_window(c);
  // sum_t w^2(n - t*hop) for sqrt-Hann equals fft_size / (2 hop).
  const double norm = 2.0 * c.hop / c.fft_size;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec(c.num_bins());
  std::vector<double> frame;

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(length, 0.0);
  for (int t = 0; t < N; ++t) {
    for (int f = 0; f < c.num_bins(); ++f) spec[f] = s.values(f, t);
    fft.inv(frame, spec, c.fft_size);
    const long start = static_cast<long>(t) * c.hop - offset;
    for (int i = 0; i < c.fft_size; ++i) {
      const long j = start + i;
      if (j >= 0 && j < static_cast<long>(length))
        out.samples[j] += frame[i] * win[i] * norm;
    }
  }
  return out;
}

inline PowerSpectrogram power(const ComplexSpectrogram& s) {
  return PowerSpectrogram{s.values.cwiseAbs2()};
}

}  // namespace avsep
