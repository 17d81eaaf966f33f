// avsep/train.hpp

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
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "avsep/vae.hpp"

namespace avsep {

struct TrainConfig {
  double alpha = 0.9;
  double learning_rate = 1e-4;
  int epochs = 45;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double variance_floor = 1e-6;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(variance_floor > 0.0)) throw ConfigError("variance_floor must be positive");
  }
};

/// Adam with bias-corrected moments.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(double lr) : lr_(lr) {}

  void step(Vector& params, const Vector& g, std::size_t slot) {
    if (slots_.size() <= slot) slots_.resize(slot + 1);
    auto& s = slots_[slot];
    if (s.m.size() != params.size()) {
      s.m = Vector::Zero(params.size());
      s.v = Vector::Zero(params.size());
      s.t = 0;
    }
    ++s.t;
    s.m = kBeta1 * s.m + (1.0 - kBeta1) * g;
    s.v = kBeta2 * s.v + (1.0 - kBeta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, s.t);
    const double c2 = 1.0 - std::pow(kBeta2, s.t);
    params.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + kEps);
  }

 private:
  struct Moments {
    Vector m, v;
    long t = 0;
  };
  double lr_;
  std::vector<Moments> slots_;
};

struct TrainResult {
  CvaeModel model;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
};

inline FrameBatch gather_columns(const FrameBatch& corpus, const std::vector<Eigen::Index>& idx,
                                 std::size_t begin, std::size_t end) {
  const auto n = static_cast<Eigen::Index>(end - begin);
  FrameBatch b{Matrix(corpus.mix_power.rows(), n), Matrix(corpus.clean_power.rows(), n),
               Matrix(corpus.visual.rows(), n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index c = idx[begin + static_cast<std::size_t>(j)];
    b.mix_power.col(j) = corpus.mix_power.col(c);
    b.clean_power.col(j) = corpus.clean_power.col(c);
    b.visual.col(j) = corpus.visual.col(c);
  }
  return b;
}

namespace detail {

inline TrainResult optimize(CvaeModel m, const FrameBatch& corpus, const TrainConfig& cfg,
                            std::array<bool, 4> trainable, std::string_view stream) {
  cfg.validate();
  if (corpus.size() == 0) throw DataError("training corpus is empty");
  check_batch(m, corpus);
  Rng rng = make_rng(cfg.seed, stream);
  Adam adam(cfg.learning_rate);
  const LossWeights w = LossWeights::from_alpha(cfg.alpha);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(corpus.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const FrameBatch batch = gather_columns(corpus, order, b, e);
      const LossNoise noise = draw_loss_noise(m.dims.latent, batch.size(), rng);
      LossResult r = evaluate_loss(m, batch, noise, w, true);
      if (!std::isfinite(r.loss)) throw NumericalError("training loss became non-finite");
      auto nets = m.nets();
      for (std::size_t i = 0; i < nets.size(); ++i)
        if (trainable[i]) adam.step(nets[i]->params(), r.grad.nets[i], i);
      sum += r.loss;
      ++batches;
    }
    res.loss_trace.push_back(sum / batches);
  }
  res.model = std::move(m);
  return res;
}

}  // namespace detail

/// Trains every network of `m` on (mixture power, clean power, embedding)
/// triples with Adam.
inline TrainResult train(CvaeModel m, const FrameBatch& corpus, const TrainConfig& cfg) {
  return detail::optimize(std::move(m), corpus, cfg, {true, true, true, true}, "train");
}

/// Speaker adaptation: only the decoder is updated; the encoder, prior
/// network and visual front end stay frozen.
inline TrainResult finetune_decoder(CvaeModel m, const FrameBatch& speaker_corpus,
                                    const TrainConfig& cfg) {
  return detail::optimize(std::move(m), speaker_corpus, cfg, {false, false, false, true},
                          "finetune");
}

/// Sets the decoder's output bias to the log of the mean clean power per bin,
/// so training starts from the average spectrum.
inline void init_decoder_bias(CvaeModel& m, const FrameBatch& corpus) {
  detail::check_batch(m, corpus);
  const Vector mean = corpus.clean_power.rowwise().mean();
  m.decoder.bias(m.decoder.num_layers() - 1) =
      (mean.array() + m.variance_floor).log().matrix();
}

}  // namespace avsep
