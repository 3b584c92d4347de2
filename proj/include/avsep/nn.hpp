// Copyright 2026 The AVSepChain Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small building blocks shared by the separator and synthesizer. Each layer
// only stores parameter names; values live in the owning ParamSet so a
// model can be copied, cast or checkpointed as one flat collection.

#pragma once

#include <cmath>
#include <random>
#include <string>

#include "avsep/autograd.hpp"

namespace avsep::nn {

using ag::Matrix;
using ag::ParamSet;
using ag::Tape;
using ag::Var;

template <typename T>
Matrix<T> random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

/// Glorot-style normal initialization for a [in x out] weight.
template <typename T>
Matrix<T> glorot(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  return random_normal<T>(in, out, std::sqrt(2.0 / static_cast<double>(in + out)), rng);
}

/// y = x W (+ b). W is [in x out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, int in, int out, bool bias, std::mt19937_64& rng,
         double gain = 1.0)
      : name_(name), bias_(bias) {
    ps.add(name + ".weight", glorot<T>(in, out, rng) * static_cast<T>(gain));
    if (bias) ps.add(name + ".bias", Matrix<T>::Zero(1, out));
  }

  Var<T> operator()(Tape<T>& tape, ParamSet<T>& ps, Var<T> x) const {
    auto w = tape.parameter(ps.get(name_ + ".weight"));
    if (!bias_) return ag::matmul(x, w);
    return ag::affine(x, w, tape.parameter(ps.get(name_ + ".bias")));
  }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  bool bias_ = false;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamSet<T>& ps, const std::string& name, int dim) : name_(name) {
    ps.add(name + ".gamma", Matrix<T>::Ones(1, dim));
    ps.add(name + ".beta", Matrix<T>::Zero(1, dim));
  }
  Var<T> operator()(Tape<T>& tape, ParamSet<T>& ps, Var<T> x) const {
    return ag::layer_norm(x, tape.parameter(ps.get(name_ + ".gamma")),
                          tape.parameter(ps.get(name_ + ".beta")));
  }

 private:
  std::string name_;
};

/// Same-padded 1-D convolution over the rows of a [T x in] sequence.
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamSet<T>& ps, const std::string& name, int in, int out, int kernel, std::mt19937_64& rng,
         double gain = 1.0)
      : kernel_(kernel), linear_(ps, name, in * kernel, out, true, rng, gain) {}

  Var<T> operator()(Tape<T>& tape, ParamSet<T>& ps, Var<T> x) const {
    return linear_(tape, ps, ag::conv_context(x, kernel_));
  }

 private:
  int kernel_ = 1;
  Linear<T> linear_;
};

/// Pre-norm transformer encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)).
/// Attention is restricted to contiguous row blocks so the same layer serves
/// the intra-chunk and inter-chunk paths.
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParamSet<T>& ps, const std::string& name, int dim, int heads, int ff_dim,
                   std::mt19937_64& rng)
      : heads_(heads),
        norm1_(ps, name + ".norm1", dim),
        q_(ps, name + ".q", dim, dim, true, rng),
        k_(ps, name + ".k", dim, dim, true, rng),
        v_(ps, name + ".v", dim, dim, true, rng),
        o_(ps, name + ".o", dim, dim, true, rng),
        norm2_(ps, name + ".norm2", dim),
        ff1_(ps, name + ".ff1", dim, ff_dim, true, rng),
        ff2_(ps, name + ".ff2", ff_dim, dim, true, rng) {}

  Var<T> operator()(Tape<T>& tape, ParamSet<T>& ps, Var<T> x, int blocks) const {
    auto h = norm1_(tape, ps, x);
    auto att = ag::attention(q_(tape, ps, h), k_(tape, ps, h), v_(tape, ps, h), blocks, heads_);
    x = ag::add(x, o_(tape, ps, att));
    h = norm2_(tape, ps, x);
    h = ff2_(tape, ps, ag::relu(ff1_(tape, ps, h)));
    return ag::add(x, h);
  }

 private:
  int heads_ = 1;
  LayerNorm<T> norm1_;
  Linear<T> q_, k_, v_, o_;
  LayerNorm<T> norm2_;
  Linear<T> ff1_, ff2_;
};

/// Sinusoidal position table [length x dim].
inline Eigen::MatrixXd sinusoidal_positions(int length, int dim) {
  Eigen::MatrixXd pe(length, dim);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(p, i) = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pe;
}

}  // namespace avsep::nn
