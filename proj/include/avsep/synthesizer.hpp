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

// Speech-production stage: the mel of the preliminary estimate queries the
// lip stream, three convolutions map the fused feature to one hop of
// samples per mel frame, and the frames are folded into a residual.

#pragma once

#include <array>
#include <random>

#include "avsep/fusion.hpp"
#include "avsep/nn.hpp"
#include "avsep/signal.hpp"
#include "avsep/types.hpp"

namespace avsep {

struct SynthesizerConfig {
  int proj_dim = 256;
  std::array<int, 3> conv_channels{256, 128, 160};
  int conv_kernel = 7;
  int n_mels = 80;
  int video_dim = 768;
  fusion::Strategy fusion = fusion::Strategy::kCrossAttention;
  fusion::Dominance dominance{fusion::Modality::kAudio, fusion::Modality::kVideo};

  void validate() const;
  static SynthesizerConfig paper();
  static SynthesizerConfig toy();
};

template <typename T>
class Synthesizer {
 public:
  Synthesizer(const SynthesizerConfig& cfg, std::uint64_t seed);

  const SynthesizerConfig& config() const { return cfg_; }
  ag::ParamSet<T>& params() { return params_; }
  const ag::ParamSet<T>& params() const { return params_; }

  /// mel: [T_mel x n_mels] at 100 Hz; video: [F x video_dim] at
  /// `video_rate`. Returns the folded output [1 x hop * T_mel].
  ag::Var<T> forward(ag::Tape<T>& tape, ag::Var<T> mel, ag::Var<T> video,
                     double video_rate = kVideoRate);

  static constexpr const char* kFusionName = "synthesizer.fusion";
  static constexpr const char* kFinalConv = "synthesizer.conv3";

 private:
  SynthesizerConfig cfg_;
  ag::ParamSet<T> params_;
  nn::Linear<T> mel_proj_;
  nn::Linear<T> video_proj_;
  fusion::FusionLayer<T> fusion_;
  nn::Conv1d<T> conv1_, conv2_, conv3_;
};

/// Value-type pass: residual waveform of length 160 * T_mel.
Waveform synthesize_residual(const MelSpec& s_pre, const EmbeddingSeq& f_v,
                             Synthesizer<double>& model);

/// s_fin = s_pre + s_res. A residual longer than s_pre by less than one hop
/// is trimmed; any larger gap is an error.
Waveform produce(const Waveform& s_pre, const Waveform& s_res);

/// Trims or rejects a [1 x L] residual row against the target length.
template <typename T>
ag::Var<T> trim_to(ag::Var<T> row, Eigen::Index length) {
  AVSEP_REQUIRE(row.rows() == 1, InvalidArgument, "trim_to: expects a row");
  const Eigen::Index gap = row.cols() - length;
  AVSEP_REQUIRE(gap >= 0 && gap < kHopSamples, InvalidArgument,
                "residual and preliminary estimate differ by a hop or more");
  if (gap == 0) return row;
  auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(length));
  for (Eigen::Index i = 0; i < length; ++i) (*idx)[i] = static_cast<int>(i);
  auto col = ag::reshape(row, row.cols(), 1);
  return ag::reshape(ag::gather_rows(col, std::shared_ptr<const std::vector<int>>(idx)), 1, length);
}

extern template class Synthesizer<float>;
extern template class Synthesizer<double>;

}  // namespace avsep
