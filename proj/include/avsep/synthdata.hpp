// avsep/synthdata.hpp

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

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "avsep/dsp.hpp"
#include "avsep/vae.hpp"

namespace avsep::synth {

inline constexpr int kEmbeddingDim = 16;  // M_raw
inline constexpr int kSpeakerSlots = 4;
inline constexpr double kVideoFps = 30.0;

struct Band {
  double center_hz;
  double bandwidth_hz;
  double gain = 1.0;
};

/// A synthetic talker: band-limited noise through fixed "formant" bands,
/// amplitude-modulated by a syllable-rate envelope.
struct SynthSpeakerSpec {
  std::string id;
  int slot = 0;  // index of the speaker one-hot in the embedding
  std::vector<Band> bands;
  double modulation_rate_hz = 4.0;
  std::uint64_t seed = 0;

  void validate(int sample_rate) const {
    if (slot < 0 || slot >= kSpeakerSlots) throw ConfigError("speaker slot out of range");
    for (const Band& b : bands)
      if (b.bandwidth_hz <= 0 || b.center_hz - b.bandwidth_hz / 2 < 0 ||
          b.center_hz + b.bandwidth_hz / 2 > sample_rate / 2.0)
        throw ConfigError("speaker " + id + ": band outside [0, Nyquist]");
    if (!(modulation_rate_hz > 0)) throw ConfigError("modulation rate must be positive");
  }
};

/// The two default speakers; their bands are pairwise disjoint.
inline std::vector<SynthSpeakerSpec> default_speakers() {
  return {
      {"spk1", 0, {{400, 80, 1.0}, {1200, 100, 0.7}, {2600, 120, 0.45}}, 3.7, 101},
      {"spk2", 1, {{750, 80, 1.0}, {1800, 100, 0.7}, {3400, 120, 0.45}}, 5.3, 202},
  };
}

/// Speaker-like process on bands disjoint from both default speakers, used
/// as babble-surrogate noise.
inline SynthSpeakerSpec babble_spec() {
  return {"babble", 2, {{1000, 90, 1.0}, {2200, 110, 0.8}, {4300, 150, 0.6}}, 4.4, 303};
}

inline bool bands_overlap(const SynthSpeakerSpec& a, const SynthSpeakerSpec& b) {
  for (const Band& x : a.bands)
    for (const Band& y : b.bands)
      if (std::abs(x.center_hz - y.center_hz) < (x.bandwidth_hz + y.bandwidth_hz) / 2) return true;
  return false;
}

struct Utterance {
  Waveform wave;
  Matrix embedding;               // kEmbeddingDim x N (STFT frames)
  std::vector<double> video_env;  // envelope sampled at kVideoFps
};

namespace detail {

// Envelope in (0, 1]: positive half-waves of a sinusoid at the modulation
// rate with a random peak per syllable, over a small floor.
class Envelope {
 public:
  Envelope(double rate, double duration, Rng& rng) : rate_(rate) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    phase_ = u(rng);
    const int cycles = static_cast<int>(std::ceil(duration * rate)) + 2;
    for (int i = 0; i < cycles; ++i) peaks_.push_back(0.4 + 0.6 * u(rng));
  }

  double operator()(double t) const {
    const double c = std::max(0.0, t * rate_ + phase_);
    const auto k = std::min(static_cast<std::size_t>(c), peaks_.size() - 1);
    const double s = std::sin(2.0 * std::numbers::pi * (c - std::floor(c)));
    const double half = s > 0 ? s : 0.0;
    return 0.03 + 0.97 * peaks_[k] * half * half;
  }

 private:
  double rate_;
  double phase_ = 0.0;
  std::vector<double> peaks_;
};

// Stationary Gaussian noise whose spectrum is a Hann bump on each band.
inline std::vector<double> band_noise(const std::vector<Band>& bands, std::size_t n, int fs, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t half = n / 2 + 1;
  std::vector<std::complex<double>> spec(half, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    double a = 0.0;
    for (const Band& b : bands) {
      const double d = (f - b.center_hz) / b.bandwidth_hz;
      if (std::abs(d) < 0.5) a += b.gain * std::cos(std::numbers::pi * d);
    }
    const double re = normal(rng), im = normal(rng);
    spec[k] = (k == 0 || (n % 2 == 0 && k == half - 1)) ? 0.0 : a * std::complex<double>(re, im);
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> out;
  fft.inv(out, spec, static_cast<Eigen::Index>(n));
  return out;
}

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double interp(const std::vector<double>& v, double pos) {
  if (v.empty()) return 0.0;
  pos = std::clamp(pos, 0.0, static_cast<double>(v.size() - 1));
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double t = pos - static_cast<double>(i);
  return (1 - t) * v[i] + t * v[i + 1];
}

}  // namespace detail

/// Lip-like embedding of one STFT frame: speaker one-hot plus envelope
/// features read from the video-rate envelope around the frame centre.
inline Vector frame_embedding(const std::vector<double>& video_env, double t_seconds, int slot) {
  Vector e = Vector::Zero(kEmbeddingDim);
  e[slot] = 1.0;
  const double p = t_seconds * kVideoFps;
  const double c = detail::interp(video_env, p);
  const double m1 = detail::interp(video_env, p - 1), p1 = detail::interp(video_env, p + 1);
  const double m2 = detail::interp(video_env, p - 2), p2 = detail::interp(video_env, p + 2);
  e[4] = c;
  e[5] = m1;
  e[6] = p1;
  e[7] = m2;
  e[8] = p2;
  e[9] = p1 - m1;
  e[10] = std::sqrt(c);
  e[11] = c * c;
  e[12] = std::log(c);
  e[13] = c * c * c;
  e[14] = std::max({c, m1, p1, m2, p2});
  e[15] = std::min({c, m1, p1, m2, p2});
  return e;
}

/// Target RMS of a synthesized utterance.
inline constexpr double kUtteranceRms = 0.1;

inline Utterance synth_utterance(const SynthSpeakerSpec& spec, double duration, const StftConfig& stft_cfg,
                                 Rng& rng, int sample_rate = 16000) {
  if (duration < 1.0) throw ConfigError("synth_utterance: duration must be >= 1 s");
  spec.validate(sample_rate);
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  const detail::Envelope env(spec.modulation_rate_hz, duration, rng);
  std::vector<double> carrier = detail::band_noise(spec.bands, n, sample_rate, rng);

  Utterance u;
  u.wave.sample_rate = sample_rate;
  u.wave.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    u.wave.samples[i] = carrier[i] * env(static_cast<double>(i) / sample_rate);
  const double rms = std::sqrt(detail::energy(u.wave.samples) / static_cast<double>(n));
  for (double& x : u.wave.samples) x *= kUtteranceRms / rms;

  const int video_frames = static_cast<int>(std::ceil(duration * kVideoFps)) + 1;
  for (int k = 0; k < video_frames; ++k) u.video_env.push_back(env(k / kVideoFps));

  const int N = stft_cfg.num_frames(n);
  u.embedding.resize(kEmbeddingDim, N);
  for (int t = 0; t < N; ++t)
    u.embedding.col(t) = frame_embedding(u.video_env, stft_cfg.frame_center_seconds(t, sample_rate), spec.slot);
  return u;
}

enum class NoiseType { White, Pink, Babble };

inline std::string to_string(NoiseType t) {
  switch (t) {
    case NoiseType::White: return "white";
    case NoiseType::Pink: return "pink";
    case NoiseType::Babble: return "babble";
  }
  return "?";
}

inline NoiseType noise_type_from_string(const std::string& s) {
  if (s == "white") return NoiseType::White;
  if (s == "pink") return NoiseType::Pink;
  if (s == "babble") return NoiseType::Babble;
  throw ConfigError("unknown noise type '" + s + "'");
}

/// SNR grid of the evaluation protocol, in dB.
inline const std::vector<double>& snr_grid() {
  static const std::vector<double> g{-15, -10, -5, 0, 5};
  return g;
}

struct MixSpec {
  double speaker_snr_db = 0.0;  // 10 log10(E2 / E1)
  NoiseType noise_type = NoiseType::White;
  double noise_snr_db = -5.0;   // 10 log10(E(s1 + s2) / E(b)); +inf disables noise
};

inline Waveform make_noise(NoiseType type, std::size_t n, int fs, Rng& rng) {
  Waveform w;
  w.sample_rate = fs;
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (type) {
    case NoiseType::White:
      w.samples.resize(n);
      for (double& x : w.samples) x = normal(rng);
      break;
    case NoiseType::Pink: {
      const std::size_t half = n / 2 + 1;
      std::vector<std::complex<double>> spec(half, 0.0);
      for (std::size_t k = 1; k < half; ++k) {
        const double a = 1.0 / std::sqrt(static_cast<double>(k));
        const double re = normal(rng), im = normal(rng);
        spec[k] = a * std::complex<double>(re, im);
      }
      if (n % 2 == 0) spec[half - 1] = spec[half - 1].real();
      Eigen::FFT<double> fft;
      fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
      fft.inv(w.samples, spec, static_cast<Eigen::Index>(n));
      break;
    }
    case NoiseType::Babble: {
      // Three independent talkers on the babble bands.
      w.samples.assign(n, 0.0);
      const double duration = std::max(1.0, static_cast<double>(n) / fs);
      for (int k = 0; k < 3; ++k) {
        const Utterance u = synth_utterance(babble_spec(), duration, StftConfig{256, 128}, rng, fs);
        for (std::size_t i = 0; i < n && i < u.wave.size(); ++i) w.samples[i] += u.wave.samples[i];
      }
      break;
    }
  }
  return w;
}

struct Mixture {
  Waveform mixture;
  Waveform ref1;  // scaled speaker 1 as present in the mixture
  Waveform ref2;
  Waveform noise;
};

/// x = s1 + a s2 + b with a and b set so that the requested level ratios
/// hold exactly. The shorter utterance is zero-padded.
inline Mixture mix(const Waveform& u1, const Waveform& u2, const MixSpec& spec, Rng& rng) {
  const std::size_t n = std::max(u1.size(), u2.size());
  Mixture m;
  m.ref1 = u1;
  m.ref2 = u2;
  m.ref1.samples.resize(n, 0.0);
  m.ref2.samples.resize(n, 0.0);
  const double e1 = detail::energy(m.ref1.samples), e2 = detail::energy(m.ref2.samples);
  if (e1 <= 0.0 || e2 <= 0.0) throw DataError("mix: silent input utterance");
  if (!std::isfinite(spec.speaker_snr_db)) throw ConfigError("mix: speaker SNR must be finite");
  const double a = std::sqrt(e1 * std::pow(10.0, spec.speaker_snr_db / 10.0) / e2);
  for (double& x : m.ref2.samples) x *= a;

  m.mixture = m.ref1;
  for (std::size_t i = 0; i < n; ++i) m.mixture.samples[i] += m.ref2.samples[i];
  m.noise.sample_rate = u1.sample_rate;
  m.noise.samples.assign(n, 0.0);
  if (std::isinf(spec.noise_snr_db) && spec.noise_snr_db > 0) return m;
  if (!std::isfinite(spec.noise_snr_db)) throw ConfigError("mix: invalid noise SNR");

  m.noise = make_noise(spec.noise_type, n, u1.sample_rate, rng);
  const double es = detail::energy(m.mixture.samples);
  const double eb = detail::energy(m.noise.samples);
  if (eb <= 0.0) throw DataError("mix: generated noise is silent");
  const double b = std::sqrt(es / (eb * std::pow(10.0, spec.noise_snr_db / 10.0)));
  for (std::size_t i = 0; i < n; ++i) {
    m.noise.samples[i] *= b;
    m.mixture.samples[i] += m.noise.samples[i];
  }
  return m;
}

enum class Split { Train, Validation, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

struct CorpusConfig {
  int n_utt = 12;  // utterances per speaker
  double duration = 2.0;
  int sample_rate = 16000;
  StftConfig stft{512, 256};
  std::uint64_t seed = 0;

  // Held-out utterances per speaker; the rest is training data.
  int n_validation() const { return std::max(1, n_utt / 8); }
  int n_test() const { return std::max(1, n_utt / 4); }
  int n_train() const { return n_utt - n_validation() - n_test(); }

  void validate() const {
    if (n_utt < 4) throw ConfigError("corpus needs n_utt >= 4 per speaker");
    if (duration < 1.0) throw ConfigError("utterance duration must be >= 1 s");
    stft.validate();
  }
};

struct UtteranceRecord {
  std::string id;
  int speaker = 0;  // index into the speaker list
  Split split = Split::Train;
  std::uint64_t seed = 0;
  Utterance data;
};

struct Corpus {
  CorpusConfig config;
  std::vector<SynthSpeakerSpec> speakers;
  std::vector<UtteranceRecord> utterances;

  std::vector<const UtteranceRecord*> select(Split split, int speaker = -1) const {
    std::vector<const UtteranceRecord*> out;
    for (const auto& u : utterances)
      if (u.split == split && (speaker < 0 || u.speaker == speaker)) out.push_back(&u);
    return out;
  }
};

/// Utterance seeds are derived from (seed, speaker, split, index), so the
/// splits never share a seed.
inline Corpus build_corpus(const CorpusConfig& cfg, const std::vector<SynthSpeakerSpec>& speakers) {
  cfg.validate();
  Corpus c{cfg, speakers, {}};
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    for (int k = 0; k < cfg.n_utt; ++k) {
      const Split split = k < cfg.n_train() ? Split::Train
                          : k < cfg.n_train() + cfg.n_validation() ? Split::Validation
                                                                   : Split::Test;
      UtteranceRecord r;
      r.speaker = static_cast<int>(s);
      r.split = split;
      r.id = speakers[s].id + "_" + to_string(split) + "_" + std::to_string(k);
      r.seed = derive_seed(cfg.seed ^ speakers[s].seed, "utterance/" + to_string(split), static_cast<std::uint64_t>(k));
      Rng rng(r.seed);
      r.data = synth_utterance(speakers[s], cfg.duration, cfg.stft, rng, cfg.sample_rate);
      c.utterances.push_back(std::move(r));
    }
  }
  return c;
}

/// Training triples plus the speaker of each column.
struct TripleSet {
  FrameBatch frames;
  std::vector<int> speaker;

  FrameBatch for_speaker(int s) const {
    std::vector<Eigen::Index> cols;
    for (std::size_t j = 0; j < speaker.size(); ++j)
      if (speaker[j] == s) cols.push_back(static_cast<Eigen::Index>(j));
    FrameBatch b{frames.mix_power(Eigen::all, cols), frames.clean_power(Eigen::all, cols),
                 frames.visual(Eigen::all, cols)};
    return b;
  }
};

/// Every clean utterance of `split` is mixed at 0 dB with a random utterance
/// of another speaker from the same split; each STFT frame yields a triple
/// (mixture power, clean power, clean speaker's embedding).
inline TripleSet training_triples(const Corpus& c, Split split, std::uint64_t seed) {
  Rng rng = make_rng(seed, "triples/" + to_string(split));
  std::vector<const UtteranceRecord*> recs = c.select(split);
  if (recs.empty()) throw DataError("training_triples: split is empty");
  std::vector<Matrix> mixes, clean, vis;
  TripleSet out;
  Eigen::Index total = 0;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const UtteranceRecord* r = recs[k];
    std::vector<const UtteranceRecord*> others;
    for (const auto* o : recs)
      if (o->speaker != r->speaker) others.push_back(o);
    if (others.empty()) throw DataError("training_triples: need at least two speakers");
    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
    const UtteranceRecord* o = others[pick(rng)];
    const Mixture m = mix(r->data.wave, o->data.wave, MixSpec{0.0, NoiseType::White, std::numeric_limits<double>::infinity()}, rng);
    const PowerSpectrogram pm = power(stft(m.mixture, c.config.stft));
    const PowerSpectrogram pc = power(stft(m.ref1, c.config.stft));
    const Eigen::Index n = std::min<Eigen::Index>(pc.frames(), r->data.embedding.cols());
    mixes.push_back(pm.values.leftCols(n));
    clean.push_back(pc.values.leftCols(n));
    vis.push_back(r->data.embedding.leftCols(n));
    out.speaker.insert(out.speaker.end(), static_cast<std::size_t>(n), r->speaker);
    total += n;
  }
  const Eigen::Index F = mixes.front().rows();
  out.frames = {Matrix(F, total), Matrix(F, total), Matrix(kEmbeddingDim, total)};
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < mixes.size(); ++k) {
    const Eigen::Index n = mixes[k].cols();
    out.frames.mix_power.middleCols(at, n) = mixes[k];
    out.frames.clean_power.middleCols(at, n) = clean[k];
    out.frames.visual.middleCols(at, n) = vis[k];
    at += n;
  }
  return out;
}

}  // namespace avsep::synth
