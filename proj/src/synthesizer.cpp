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

#include "avsep/synthesizer.hpp"

#include <cmath>

namespace avsep {

void SynthesizerConfig::validate() const {
  AVSEP_REQUIRE(proj_dim > 0 && conv_kernel > 0 && n_mels > 0 && video_dim > 0, InvalidArgument,
                "synthesizer: all sizes must be positive");
  for (int c : conv_channels) AVSEP_REQUIRE(c > 0, InvalidArgument, "synthesizer: empty conv layer");
  AVSEP_REQUIRE(conv_kernel % 2 == 1, InvalidArgument, "synthesizer: conv kernel must be odd");
  AVSEP_REQUIRE(conv_channels[2] == kHopSamples, InvalidArgument,
                "synthesizer: last conv layer must emit one hop of samples per frame");
  dominance.validate();
}

SynthesizerConfig SynthesizerConfig::paper() { return SynthesizerConfig{}; }

SynthesizerConfig SynthesizerConfig::toy() {
  SynthesizerConfig c;
  c.proj_dim = 64;
  c.conv_channels = {64, 64, 160};
  c.video_dim = 64;
  return c;
}

template <typename T>
Synthesizer<T>::Synthesizer(const SynthesizerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int p = cfg_.proj_dim;
  // Log-mel values span tens of nats; keep the first projection small.
  mel_proj_ = nn::Linear<T>(params_, "synthesizer.mel_proj", cfg_.n_mels, p, true, rng, 0.1);
  video_proj_ = nn::Linear<T>(params_, "synthesizer.video_proj", cfg_.video_dim, p, true, rng);
  fusion_ = fusion::FusionLayer<T>(params_, kFusionName, p, cfg_.fusion, cfg_.dominance, rng);
  conv1_ = nn::Conv1d<T>(params_, "synthesizer.conv1", p, cfg_.conv_channels[0], cfg_.conv_kernel, rng);
  conv2_ = nn::Conv1d<T>(params_, "synthesizer.conv2", cfg_.conv_channels[0], cfg_.conv_channels[1],
                         cfg_.conv_kernel, rng);
  // The residual head starts silent so s_fin begins at s_pre.
  conv3_ = nn::Conv1d<T>(params_, kFinalConv, cfg_.conv_channels[1], cfg_.conv_channels[2],
                         cfg_.conv_kernel, rng, 0.0);
}

template <typename T>
ag::Var<T> Synthesizer<T>::forward(ag::Tape<T>& tape, ag::Var<T> mel, ag::Var<T> video,
                                   double video_rate) {
  AVSEP_REQUIRE(mel.cols() == cfg_.n_mels, InvalidArgument, "synthesizer: mel band count mismatch");
  AVSEP_REQUIRE(video.cols() == cfg_.video_dim, InvalidArgument,
                "synthesizer: lip embedding dimension mismatch");
  const double ratio = kMelRate / video_rate;
  const int factor = static_cast<int>(std::lround(ratio));
  AVSEP_REQUIRE(factor >= 1 && std::abs(ratio - factor) < 1e-9, InvalidArgument,
                "synthesizer: mel frame rate is not an integer multiple of the video rate");
  const int mel_frames = static_cast<int>(mel.rows());
  AVSEP_REQUIRE(std::abs(static_cast<double>(video.rows()) * factor - mel_frames) <= factor,
                InvalidArgument, "synthesizer: mel and lip stream cover different durations");

  auto idx = std::make_shared<const std::vector<int>>(
      signal::repeat_index(static_cast<int>(video.rows()), factor, mel_frames));
  auto video_up = ag::gather_rows(video, idx);
  auto s_hat = mel_proj_(tape, params_, mel);
  auto v_hat = video_proj_(tape, params_, video_up);
  auto h = fusion_(tape, params_, s_hat, v_hat, 1);
  h = ag::relu(conv1_(tape, params_, h));
  h = ag::relu(conv2_(tape, params_, h));
  h = conv3_(tape, params_, h);
  return ag::reshape(h, 1, h.rows() * h.cols());
}

Waveform synthesize_residual(const MelSpec& s_pre, const EmbeddingSeq& f_v,
                             Synthesizer<double>& model) {
  ag::Tape<double> tape;
  tape.set_grad_enabled(false);
  auto mel = tape.constant(s_pre.data.transpose());
  auto video = tape.constant(f_v.data.transpose());
  auto out = model.forward(tape, mel, video, f_v.frame_rate);
  return Waveform(out.value().row(0).transpose());
}

Waveform produce(const Waveform& s_pre, const Waveform& s_res) {
  const Eigen::Index gap = s_res.size() - s_pre.size();
  AVSEP_REQUIRE(gap >= 0 && gap < kHopSamples, InvalidArgument,
                "produce: residual and preliminary estimate differ by a hop or more");
  return Waveform(s_pre.samples + s_res.samples.head(s_pre.size()), s_pre.sample_rate);
}

template class Synthesizer<float>;
template class Synthesizer<double>;

}  // namespace avsep
