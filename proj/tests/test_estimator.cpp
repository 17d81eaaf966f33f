// Copyright 2026  avsep authors
// Licensed under the Apache License, Version 2.0.

#include <gtest/gtest.h>

#include "avsep/estimator.hpp"
#include "avsep/eval.hpp"
#include "avsep/synthdata.hpp"
#include "avsep/train.hpp"
#include "toy_problem.hpp"

using namespace avsep;
using avsep::testing::make_toy;

namespace {

SampleBuffer current_sample(const SeparationState& s) {
  return {{s.speaker(1).z}, {s.speaker(2).z}, {s.speaker(1).sigma}, {s.speaker(2).sigma}};
}

}  // namespace

TEST(WienerGain, DominantSpeakerTakesEverything) {
  auto t = make_toy(1);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  s.noise.H.setConstant(kNmfFloor);
  s.noise.W.setConstant(kNmfFloor);
  const Vector z1 = s.speaker(1).z.col(3), z2 = s.speaker(2).z.col(3);
  const Vector s1 = decode(t.model, z1, t.v1.col(3)), s2 = decode(t.model, z2, t.v2.col(3));
  // Speaker 1 variance 1e6 times speaker 2's at bin 0.
  s.speaker(1).gain[3] = 1e6 * s2[0] / s1[0];
  s.speaker(2).gain[3] = 1.0;
  EXPECT_NEAR(wiener_gain(s, t.models(), 3, 0, z1, z2, 1), 1.0, 1e-3);
  EXPECT_NEAR(wiener_gain(s, t.models(), 3, 0, z1, z2, 2), 0.0, 1e-3);
}

TEST(WienerGain, EqualVariancesSplitInHalf) {
  auto t = make_toy(2);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  s.noise.H.setZero();
  const Vector z = s.speaker(1).z.col(0);
  s.speaker(2).features.col(0) = s.speaker(1).features.col(0);
  for (int f = 0; f < 12; ++f) {
    EXPECT_NEAR(wiener_gain(s, t.models(), 0, f, z, z, 1), 0.5, 1e-12);
    EXPECT_NEAR(wiener_gain(s, t.models(), 0, f, z, z, 2), 0.5, 1e-12);
  }
}

TEST(AverageMasks, PartitionUnityAtEveryBin) {
  const auto t = make_toy(3);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  const auto e = estep(s, t.models(), t.x, cfg, true);
  const auto masks = average_masks(s, e.samples, cfg.variance_floor);
  const Matrix sum = masks[0] + masks[1] + masks[2];
  EXPECT_LT((sum.array() - 1.0).abs().maxCoeff(), 1e-12);
  for (const auto& m : masks) {
    EXPECT_GE(m.minCoeff(), 0.0);
    EXPECT_LE(m.maxCoeff(), 1.0);
  }
}

TEST(EstimateSources, IsLinearInTheMixture) {
  const auto t = make_toy(4);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  const auto e = estep(s, t.models(), t.x, cfg, true);
  const ComplexSpectrogram y{ComplexMatrix::Random(12, 20)};
  const ComplexSpectrogram sum{2.0 * t.x.values + y.values};
  const auto a = estimate_sources(t.x, s, e.samples);
  const auto b = estimate_sources(y, s, e.samples);
  const auto c = estimate_sources(sum, s, e.samples);
  EXPECT_LT((c.first.values - 2.0 * a.first.values - b.first.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((c.second.values - 2.0 * a.second.values - b.second.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EstimateSources, AverageOfSingleSampleEstimates) {
  const auto t = make_toy(5);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  const auto e = estep(s, t.models(), t.x, cfg, true);
  const auto all = estimate_sources(t.x, s, e.samples);
  ComplexMatrix mean = ComplexMatrix::Zero(12, 20);
  for (int r = 0; r < e.samples.size(); ++r) {
    const SampleBuffer one{{e.samples.z1[r]}, {e.samples.z2[r]}, {e.samples.sigma1[r]}, {e.samples.sigma2[r]}};
    mean += estimate_sources(t.x, s, one).first.values;
  }
  mean /= e.samples.size();
  EXPECT_LT((all.first.values - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EstimateSources, SingleSampleMatchesWienerGain) {
  const auto t = make_toy(6);
  McemConfig cfg;
  SeparationState s = init_state(t.x, t.v1, t.v2, t.models(), cfg);
  const auto est = estimate_sources(t.x, s, current_sample(s));
  for (int n : {0, 11})
    for (int f : {0, 5, 11}) {
      const double g = wiener_gain(s, t.models(), n, f, s.speaker(1).z.col(n), s.speaker(2).z.col(n), 2);
      EXPECT_NEAR(std::abs(est.second.values(f, n) - g * t.x.values(f, n)), 0.0, 1e-12);
    }
  EXPECT_THROW(estimate_sources(t.x, s, SampleBuffer{}), DataError);
}

TEST(Separate, EndToEndOnNoiseFreeSyntheticMixture) {
  synth::CorpusConfig cc;
  cc.n_utt = 6;
  cc.seed = 3;
  const auto corpus = synth::build_corpus(cc, synth::default_speakers());
  const auto triples = synth::training_triples(corpus, synth::Split::Train, 4);
  ModelDims d;
  d.bins = cc.stft.num_bins();
  d.latent = 8;
  Rng rng(5);
  CvaeModel m = make_random_model(d, rng);
  init_decoder_bias(m, triples.frames);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.epochs = 30;
  tc.batch_size = 64;
  tc.seed = 6;
  m = train(m, triples.frames, tc).model;

  const auto t1 = corpus.select(synth::Split::Test, 0), t2 = corpus.select(synth::Split::Test, 1);
  Rng mix_rng(7);
  const auto mx = synth::mix(t1[0]->data.wave, t2[0]->data.wave,
                             {0.0, synth::NoiseType::White, std::numeric_limits<double>::infinity()}, mix_rng);
  McemConfig cfg;
  cfg.em_iters = 20;
  cfg.seed = 8;
  const auto out = separate(mx.mixture, t1[0]->data.embedding, t2[0]->data.embedding, shared_model(m), cc.stft, cfg);
  ASSERT_EQ(out.speaker1.waveform.size(), mx.mixture.size());
  ASSERT_EQ(out.speaker2.waveform.size(), mx.mixture.size());
  const auto score = eval::evaluate_pair(mx.ref1, mx.ref2, out.speaker1.waveform, out.speaker2.waveform, mx.mixture);
  EXPECT_FALSE(score.swapped);
  EXPECT_GT(score.mean_improvement(), 5.0);

  const auto again = separate(mx.mixture, t1[0]->data.embedding, t2[0]->data.embedding, shared_model(m), cc.stft, cfg);
  EXPECT_EQ(again.speaker1.waveform.samples, out.speaker1.waveform.samples);

  cfg.final_sweeps = 20;
  const auto extra = separate(mx.mixture, t1[0]->data.embedding, t2[0]->data.embedding, shared_model(m), cc.stft, cfg);
  EXPECT_EQ(extra.mcem.samples.size(), cfg.samples);
}
