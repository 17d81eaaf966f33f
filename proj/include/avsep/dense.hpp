// avsep/dense.hpp

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
#include <string>
#include <vector>

#include "avsep/common.hpp"

namespace avsep {

enum class Activation { Tanh = 0, Identity = 1 };

/// How the last layer of a network is interpreted by its owner.
enum class OutputHead {
  Plain = 0,          // raw affine output
  LogVariance = 1,    // exp(.) floored from below
  MeanLogVariance = 2 // first half mean, second half log-variance
};

/// Fully connected network. Hidden layers use `hidden`; the last layer is
/// affine. All weights and biases live in one contiguous parameter vector,
/// layer by layer: W_l (column-major, out x in) followed by b_l.
class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::vector<int> dims, OutputHead head, Activation hidden = Activation::Tanh)
      : dims_(std::move(dims)), head_(head), hidden_(hidden) {
    if (dims_.size() < 2) throw ConfigError("DenseNet: need at least input and output dims");
    for (int d : dims_)
      if (d <= 0) throw ConfigError("DenseNet: layer dims must be positive");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(n);
      n += static_cast<std::size_t>(dims_[l + 1]) * (dims_[l] + 1);
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(n));
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  OutputHead head() const { return head_; }
  Activation hidden_activation() const { return hidden_; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  Eigen::Map<Matrix> weight(int l) {
    return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<const Matrix> weight(int l) const {
    return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<Vector> bias(int l) {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }
  Eigen::Map<const Vector> bias(int l) const {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }

  /// N(0, 1/fan_in) weights, zero biases.
  void init_random(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int l = 0; l < num_layers(); ++l) {
      auto w = weight(l);
      const double scale = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * normal(rng);
      bias(l).setZero();
    }
  }

  /// Per-layer activations of one forward pass; column-wise batch.
  struct Cache {
    std::vector<Matrix> act;  // act[0] = input, act[k] = output
  };

  Matrix forward(const Eigen::Ref<const Matrix>& x) const {
    Cache c;
    return forward(x, c);
  }

  Matrix forward(const Eigen::Ref<const Matrix>& x, Cache& cache) const {
    if (x.rows() != input_dim())
      throw DataError("DenseNet: input has " + std::to_string(x.rows()) +
                      " rows, expected " + std::to_string(input_dim()));
    cache.act.resize(dims_.size());
    cache.act[0] = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix h = weight(l) * cache.act[l];
      h.colwise() += bias(l);
      if (l + 1 < num_layers() && hidden_ == Activation::Tanh) h = h.array().tanh().matrix();
      cache.act[l + 1] = std::move(h);
    }
    return cache.act.back();
  }

  /// Backpropagates d(loss)/d(output) through a cached forward pass.
  /// Parameter gradients are added into `grad` (same layout as params());
  /// returns d(loss)/d(input).
  Matrix backward(const Cache& cache, const Eigen::Ref<const Matrix>& d_out,
                  Vector& grad) const {
    if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
    Matrix delta = d_out;
    for (int l = num_layers() - 1; l >= 0; --l) {
      Eigen::Map<Matrix> gw(grad.data() + offsets_[l], dims_[l + 1], dims_[l]);
      Eigen::Map<Vector> gb(grad.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]);
      gw.noalias() += delta * cache.act[l].transpose();
      gb += delta.rowwise().sum();
      Matrix d_in = weight(l).transpose() * delta;
      if (l > 0 && hidden_ == Activation::Tanh)
        d_in.array() *= 1.0 - cache.act[l].array().square();
      delta = std::move(d_in);
    }
    return delta;
  }

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  Vector params_;
  OutputHead head_ = OutputHead::Plain;
  Activation hidden_ = Activation::Tanh;
};

}  // namespace avsep
