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

// Cross-modal fusion. The key/value modality is the dominant one: the
// attention output is a mixture of its (projected) frames, selected by the
// conditional query modality.

#pragma once

#include <random>
#include <string>

#include "avsep/nn.hpp"

namespace avsep::fusion {

enum class Strategy { kCrossAttention, kConcatenation, kSummation };
enum class Modality { kAudio, kVideo };

struct Dominance {
  Modality query = Modality::kVideo;
  Modality kv = Modality::kAudio;

  /// Throws InvalidArgument when both roles use the same modality.
  void validate() const;
  bool operator==(const Dominance&) const = default;
};

std::string to_string(Strategy s);
std::string to_string(Modality m);
std::string to_string(const Dominance& d);  // e.g. "video/audio" = query/kv
Strategy parse_strategy(const std::string& s);
Modality parse_modality(const std::string& s);
Dominance parse_dominance(const std::string& s);

/// Query/key/value projections of one attention layer, each [d x d].
struct AttentionWeights {
  Eigen::MatrixXd w_q;
  Eigen::MatrixXd w_k;
  Eigen::MatrixXd w_v;
};

struct AttentionResult {
  Eigen::MatrixXd output;   // [T_q x d]
  Eigen::MatrixXd weights;  // [T_q x T_kv], rows sum to one
};

/// Softmax((query W_Q)(kv W_K)^T / sqrt(d)) (kv W_V), single head.
AttentionResult cross_modal_attention(const Eigen::MatrixXd& query, const Eigen::MatrixXd& kv,
                                      const AttentionWeights& params);

/// Differentiable single-/multi-head cross-modal attention on time-major
/// features. `blocks` restricts attention to matching row blocks.
template <typename T>
ag::Var<T> cross_modal_attention(ag::Var<T> query, ag::Var<T> kv, ag::Var<T> w_q, ag::Var<T> w_k,
                                 ag::Var<T> w_v, int blocks = 1, int heads = 1) {
  AVSEP_REQUIRE(query.cols() == kv.cols() && w_q.rows() == query.cols(), InvalidArgument,
                "cross_modal_attention: dimension mismatch");
  return ag::attention(ag::matmul(query, w_q), ag::matmul(kv, w_k), ag::matmul(kv, w_v), blocks,
                       heads);
}

/// One fusion layer: parameters for the chosen strategy plus dispatch over
/// the dominance configuration. Inputs are already projected to `dim`.
template <typename T>
class FusionLayer {
 public:
  FusionLayer() = default;
  FusionLayer(ag::ParamSet<T>& ps, const std::string& name, int dim, Strategy strategy,
              Dominance dominance, std::mt19937_64& rng, int heads = 1)
      : name_(name), strategy_(strategy), dominance_(dominance), heads_(heads) {
    dominance_.validate();
    switch (strategy_) {
      case Strategy::kCrossAttention:
        ps.add(name + ".w_q", nn::glorot<T>(dim, dim, rng));
        ps.add(name + ".w_k", nn::glorot<T>(dim, dim, rng));
        ps.add(name + ".w_v", nn::glorot<T>(dim, dim, rng));
        break;
      case Strategy::kConcatenation:
        ps.add(name + ".w_cat", nn::glorot<T>(2 * dim, dim, rng));
        break;
      case Strategy::kSummation:
        ps.add(name + ".w_sum", nn::glorot<T>(dim, dim, rng));
        break;
    }
  }

  Strategy strategy() const { return strategy_; }
  const Dominance& dominance() const { return dominance_; }

  /// Fuses time-aligned audio/video features. For cross-attention the
  /// feature lengths may differ and `blocks` partitions both into aligned
  /// groups; the output has the query's length.
  ag::Var<T> operator()(ag::Tape<T>& tape, ag::ParamSet<T>& ps, ag::Var<T> audio, ag::Var<T> video,
                        int blocks = 1) const {
    AVSEP_REQUIRE(audio.cols() == video.cols(), InvalidArgument,
                  "fuse: audio and video dimensions differ");
    const bool video_query = dominance_.query == Modality::kVideo;
    ag::Var<T> cond = video_query ? video : audio;
    ag::Var<T> dom = video_query ? audio : video;
    if (strategy_ == Strategy::kCrossAttention) {
      return cross_modal_attention(cond, dom, tape.parameter(ps.get(name_ + ".w_q")),
                                   tape.parameter(ps.get(name_ + ".w_k")),
                                   tape.parameter(ps.get(name_ + ".w_v")), blocks, heads_);
    }
    AVSEP_REQUIRE(audio.rows() == video.rows(), InvalidArgument,
                  "fuse: concatenation/summation need time-aligned features");
    if (strategy_ == Strategy::kConcatenation) {
      return ag::matmul(ag::concat_cols(dom, cond), tape.parameter(ps.get(name_ + ".w_cat")));
    }
    return ag::add(dom, ag::matmul(cond, tape.parameter(ps.get(name_ + ".w_sum"))));
  }

 private:
  std::string name_;
  Strategy strategy_ = Strategy::kCrossAttention;
  Dominance dominance_;
  int heads_ = 1;
};

}  // namespace avsep::fusion
