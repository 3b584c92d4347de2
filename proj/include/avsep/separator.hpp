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

// Speech-perception stage. The mixture is encoded, chunked, fused with the
// lip stream (video queries, audio keys/values, per chunk), refined by
// dual-path transformer repeats and masked before decoding.

#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "avsep/fusion.hpp"
#include "avsep/nn.hpp"
#include "avsep/signal.hpp"
#include "avsep/types.hpp"

namespace avsep {

struct SeparatorConfig {
  int n_channels = 256;
  int chunk_len = 160;
  int n_intra = 8;
  int n_inter = 7;
  int n_repeats = 2;
  int encoder_kernel = 16;
  int encoder_stride = 8;
  int n_heads = 4;
  int ff_dim = 1024;
  int video_dim = 768;
  fusion::Strategy fusion = fusion::Strategy::kCrossAttention;
  fusion::Dominance dominance{fusion::Modality::kVideo, fusion::Modality::kAudio};

  void validate() const;
  static SeparatorConfig paper();
  static SeparatorConfig toy();
};

enum class DualPathKind { kIntra, kInter };

/// Intermediate tensors of one separator pass, kept for inspection.
template <typename T>
struct SeparatorTrace {
  ag::Var<T> encoded;  // [T_X x N]
  ag::Var<T> chunked;  // [S*K x N], row s*K + k
  ag::Var<T> video;    // [S*K x N], replicated lip feature
  ag::Var<T> mask;     // [S*K x N]
  ag::Var<T> output;   // [1 x T_a]
  signal::ChunkPlan plan;
};

template <typename T>
class Separator {
 public:
  Separator(const SeparatorConfig& cfg, std::uint64_t seed);

  const SeparatorConfig& config() const { return cfg_; }
  ag::ParamSet<T>& params() { return params_; }
  const ag::ParamSet<T>& params() const { return params_; }

  int encoded_length(Eigen::Index samples) const;

  /// Strided convolution + ReLU: [1 x T_a] -> [T_X x N].
  ag::Var<T> encode(ag::Tape<T>& tape, ag::Var<T> wave);
  /// Projects, resamples to S chunks and replicates K times: [F x V] -> [S*K x N].
  ag::Var<T> align_video(ag::Tape<T>& tape, ag::Var<T> video, int num_chunks);
  /// One stack of intra- or inter-chunk layers with positional encodings.
  ag::Var<T> dual_path_block(ag::Tape<T>& tape, ag::Var<T> chunked, const signal::ChunkPlan& plan,
                             int repeat, DualPathKind kind);
  /// Full pass; `video` is [F x video_dim] at 25 Hz.
  SeparatorTrace<T> forward(ag::Tape<T>& tape, ag::Var<T> wave, ag::Var<T> video);

  /// Name of the fusion layer's parameter group.
  static constexpr const char* kFusionName = "separator.fusion";

 private:
  SeparatorConfig cfg_;
  ag::ParamSet<T> params_;
  nn::Linear<T> video_proj_;
  fusion::FusionLayer<T> fusion_;
  nn::LayerNorm<T> fusion_norm_;
  std::vector<nn::TransformerLayer<T>> intra_;
  std::vector<nn::TransformerLayer<T>> inter_;
  nn::LayerNorm<T> out_norm_;
  nn::Linear<T> mask_;
};

/// Convenience pass on value types; returns s_pre with the input's length.
Waveform separate(const Waveform& x, const EmbeddingSeq& f_v, Separator<double>& model);

/// Throws InvalidArgument when the lip stream and the audio differ in
/// duration by more than one video frame.
void check_duration(Eigen::Index samples, Eigen::Index video_frames, double video_rate);

extern template class Separator<float>;
extern template class Separator<double>;

}  // namespace avsep
