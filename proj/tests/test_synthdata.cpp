// Copyright 2026  avsep authors
// Licensed under the Apache License, Version 2.0.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "avsep/synthdata.hpp"

using namespace avsep;
using namespace avsep::synth;

namespace {

double energy(const Waveform& w) {
  double e = 0.0;
  for (double x : w.samples) e += x * x;
  return e;
}

}  // namespace

TEST(SynthUtterance, SameSeedIsIdentical) {
  const StftConfig c{512, 256};
  Rng a(1), b(1);
  const auto u = synth_utterance(default_speakers()[0], 1.5, c, a);
  const auto v = synth_utterance(default_speakers()[0], 1.5, c, b);
  EXPECT_EQ(u.wave.samples, v.wave.samples);
  EXPECT_EQ(u.embedding, v.embedding);
  EXPECT_NEAR(std::sqrt(energy(u.wave) / u.wave.size()), kUtteranceRms, 1e-12);
}

TEST(SynthUtterance, EnergyStaysInsideFormantBands) {
  const StftConfig c{1024, 512};
  const double bin_hz = 16000.0 / 1024;
  for (const auto& spec : default_speakers()) {
    Rng rng(2);
    const auto u = synth_utterance(spec, 2.0, c, rng);
    const Matrix P = power(stft(u.wave, c)).values;
    double inside = 0.0, total = P.sum();
    for (Eigen::Index f = 0; f < P.rows(); ++f) {
      const double hz = f * bin_hz;
      bool in = false;
      // Two bins of guard for window leakage.
      for (const Band& b : spec.bands) in |= std::abs(hz - b.center_hz) <= b.bandwidth_hz / 2 + 2 * bin_hz;
      if (in) inside += P.row(f).sum();
    }
    EXPECT_LT((total - inside) / total, 0.01) << spec.id;
  }
}

TEST(SynthUtterance, EmbeddingIsAlignedWithStftFrames) {
  for (const StftConfig c : {StftConfig{512, 256}, StftConfig{1024, 512}, StftConfig{256, 64}}) {
    Rng rng(3);
    const auto u = synth_utterance(default_speakers()[1], 1.3, c, rng);
    EXPECT_EQ(u.embedding.rows(), kEmbeddingDim);
    EXPECT_EQ(u.embedding.cols(), stft(u.wave, c).frames());
    for (Eigen::Index t = 0; t < u.embedding.cols(); ++t) {
      EXPECT_EQ(u.embedding(1, t), 1.0);
      EXPECT_EQ(u.embedding(0, t), 0.0);
    }
  }
}

TEST(SynthUtterance, EmbeddingFollowsEnvelope) {
  const StftConfig c{512, 256};
  Rng rng(4);
  const auto u = synth_utterance(default_speakers()[0], 2.0, c, rng);
  // Feature 4 is the envelope at the frame centre; frames with a larger
  // envelope carry more energy on average.
  const Matrix P = power(stft(u.wave, c)).values;
  double hi = 0, lo = 0;
  int nh = 0, nl = 0;
  for (Eigen::Index t = 2; t + 2 < P.cols(); ++t) {
    if (u.embedding(4, t) > 0.5) hi += P.col(t).sum(), ++nh;
    if (u.embedding(4, t) < 0.1) lo += P.col(t).sum(), ++nl;
  }
  ASSERT_GT(nh, 0);
  ASSERT_GT(nl, 0);
  EXPECT_GT(hi / nh, 5.0 * lo / nl);
}

TEST(SynthUtterance, RejectsShortDuration) {
  Rng rng(5);
  EXPECT_THROW(synth_utterance(default_speakers()[0], 0.5, StftConfig{512, 256}, rng), ConfigError);
}

TEST(Speakers, DefaultsAndBabbleAreDisjoint) {
  const auto s = default_speakers();
  EXPECT_FALSE(bands_overlap(s[0], s[1]));
  EXPECT_FALSE(bands_overlap(s[0], babble_spec()));
  EXPECT_FALSE(bands_overlap(s[1], babble_spec()));
  EXPECT_TRUE(bands_overlap(s[0], s[0]));
}

TEST(Mix, MeasuredLevelsMatchSpec) {
  const StftConfig c{512, 256};
  Rng rng(6);
  const auto a = synth_utterance(default_speakers()[0], 1.0, c, rng);
  const auto b = synth_utterance(default_speakers()[1], 1.2, c, rng);
  for (NoiseType nt : {NoiseType::White, NoiseType::Pink, NoiseType::Babble})
    for (double spk : {-6.0, 0.0, 3.0})
      for (double snr : {-15.0, 0.0, 5.0}) {
        const auto m = mix(a.wave, b.wave, {spk, nt, snr}, rng);
        ASSERT_EQ(m.mixture.size(), b.wave.size());
        Waveform speech = m.ref1;
        for (std::size_t i = 0; i < speech.size(); ++i) speech.samples[i] += m.ref2.samples[i];
        EXPECT_NEAR(10 * std::log10(energy(m.ref2) / energy(m.ref1)), spk, 0.01);
        EXPECT_NEAR(10 * std::log10(energy(speech) / energy(m.noise)), snr, 0.01);
        for (std::size_t i = 0; i < speech.size(); ++i)
          ASSERT_NEAR(m.mixture.samples[i], speech.samples[i] + m.noise.samples[i], 1e-12);
      }
}

TEST(Mix, NoiseFreeMixtureIsExactSum) {
  const StftConfig c{512, 256};
  Rng rng(7);
  const auto a = synth_utterance(default_speakers()[0], 1.0, c, rng);
  const auto b = synth_utterance(default_speakers()[1], 1.0, c, rng);
  const auto m = mix(a.wave, b.wave, {0.0, NoiseType::Pink, std::numeric_limits<double>::infinity()}, rng);
  for (std::size_t i = 0; i < m.mixture.size(); ++i) {
    ASSERT_EQ(m.mixture.samples[i], m.ref1.samples[i] + m.ref2.samples[i]);
    ASSERT_EQ(m.noise.samples[i], 0.0);
  }
  EXPECT_NEAR(energy(m.ref1), energy(m.ref2), 1e-9 * energy(m.ref1));
}

TEST(Mix, SilentInputIsAnError) {
  Rng rng(8);
  Waveform z;
  z.samples.assign(16000, 0.0);
  const auto a = synth_utterance(default_speakers()[0], 1.0, StftConfig{512, 256}, rng);
  EXPECT_THROW(mix(a.wave, z, {}, rng), DataError);
  EXPECT_THROW(mix(z, a.wave, {}, rng), DataError);
}

TEST(Corpus, SplitsAreDisjointWithDistinctSeeds) {
  CorpusConfig cfg;
  cfg.n_utt = 8;
  cfg.duration = 1.0;
  cfg.seed = 9;
  const Corpus c = build_corpus(cfg, default_speakers());
  ASSERT_EQ(c.utterances.size(), 16u);
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  for (const auto& u : c.utterances) {
    ids.insert(u.id);
    seeds.insert(u.seed);
  }
  EXPECT_EQ(ids.size(), 16u);
  EXPECT_EQ(seeds.size(), 16u);
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(c.select(Split::Train, s).size(), static_cast<std::size_t>(cfg.n_train()));
    EXPECT_EQ(c.select(Split::Validation, s).size(), static_cast<std::size_t>(cfg.n_validation()));
    EXPECT_EQ(c.select(Split::Test, s).size(), static_cast<std::size_t>(cfg.n_test()));
  }
  EXPECT_EQ(cfg.n_train() + cfg.n_validation() + cfg.n_test(), cfg.n_utt);
}

TEST(Corpus, MinimumSizeIsEnforced) {
  CorpusConfig cfg;
  cfg.n_utt = 3;
  EXPECT_THROW(build_corpus(cfg, default_speakers()), ConfigError);
  cfg.n_utt = 4;
  cfg.duration = 1.0;
  const Corpus c = build_corpus(cfg, default_speakers());
  EXPECT_EQ(c.select(Split::Train).size(), 4u);
}

TEST(Corpus, SameSeedIsIdentical) {
  CorpusConfig cfg;
  cfg.n_utt = 4;
  cfg.duration = 1.0;
  cfg.seed = 10;
  const Corpus a = build_corpus(cfg, default_speakers());
  const Corpus b = build_corpus(cfg, default_speakers());
  for (std::size_t i = 0; i < a.utterances.size(); ++i)
    EXPECT_EQ(a.utterances[i].data.wave.samples, b.utterances[i].data.wave.samples);
  cfg.seed = 11;
  const Corpus c = build_corpus(cfg, default_speakers());
  EXPECT_NE(a.utterances[0].data.wave.samples, c.utterances[0].data.wave.samples);
}

TEST(TrainingTriples, CountsAndEnergyAccounting) {
  CorpusConfig cfg;
  cfg.n_utt = 8;
  cfg.duration = 1.5;
  cfg.seed = 12;
  const Corpus c = build_corpus(cfg, default_speakers());
  const TripleSet t = training_triples(c, Split::Train, 13);
  Eigen::Index frames = 0;
  for (const auto* r : c.select(Split::Train)) frames += r->data.embedding.cols();
  EXPECT_EQ(t.frames.mix_power.cols(), frames);
  EXPECT_EQ(t.frames.clean_power.cols(), frames);
  EXPECT_EQ(t.frames.visual.cols(), frames);
  EXPECT_EQ(t.speaker.size(), static_cast<std::size_t>(frames));
  EXPECT_EQ(t.for_speaker(0).visual.cols() + t.for_speaker(1).visual.cols(), frames);
  // 0 dB partner: mixture energy is clean energy plus an equal share.
  const double ratio = t.frames.mix_power.sum() / t.frames.clean_power.sum();
  EXPECT_NEAR(ratio, 2.0, 0.1);
  // Each triple's embedding carries its own speaker's one-hot.
  for (std::size_t j = 0; j < t.speaker.size(); ++j)
    ASSERT_EQ(t.frames.visual(t.speaker[j], static_cast<Eigen::Index>(j)), 1.0);
}
