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

#include "avsep/separator.hpp"

#include <string>

namespace avsep {

void SeparatorConfig::validate() const {
  AVSEP_REQUIRE(n_channels > 0 && chunk_len > 0 && n_intra > 0 && n_inter > 0 && n_repeats > 0 &&
                    encoder_kernel > 0 && encoder_stride > 0 && n_heads > 0 && ff_dim > 0 &&
                    video_dim > 0,
                InvalidArgument, "separator: all sizes must be positive");
  AVSEP_REQUIRE(chunk_len % 2 == 0, InvalidArgument, "separator: chunk_len must be even");
  AVSEP_REQUIRE(encoder_stride <= encoder_kernel, InvalidArgument,
                "separator: encoder stride must not exceed the kernel");
  AVSEP_REQUIRE(n_channels % n_heads == 0, InvalidArgument,
                "separator: n_channels must be divisible by n_heads");
  dominance.validate();
}

SeparatorConfig SeparatorConfig::paper() { return SeparatorConfig{}; }

SeparatorConfig SeparatorConfig::toy() {
  SeparatorConfig c;
  c.n_channels = 64;
  c.chunk_len = 40;
  c.n_intra = 2;
  c.n_inter = 2;
  c.n_repeats = 1;
  c.ff_dim = 256;
  c.video_dim = 64;
  return c;
}

void check_duration(Eigen::Index samples, Eigen::Index video_frames, double video_rate) {
  const double expected = static_cast<double>(samples) / kSampleRate * video_rate;
  AVSEP_REQUIRE(std::abs(expected - static_cast<double>(video_frames)) <= 1.0, InvalidArgument,
                "audio and lip stream durations differ by more than one video frame");
}

template <typename T>
Separator<T>::Separator(const SeparatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int n = cfg_.n_channels;
  params_.add("separator.encoder.weight", nn::glorot<T>(cfg_.encoder_kernel, n, rng));
  video_proj_ = nn::Linear<T>(params_, "separator.video_proj", cfg_.video_dim, n, true, rng);
  fusion_ = fusion::FusionLayer<T>(params_, kFusionName, n, cfg_.fusion, cfg_.dominance, rng);
  fusion_norm_ = nn::LayerNorm<T>(params_, "separator.fusion_norm", n);
  for (int r = 0; r < cfg_.n_repeats; ++r) {
    const std::string base = "separator.r" + std::to_string(r);
    for (int l = 0; l < cfg_.n_intra; ++l) {
      intra_.emplace_back(params_, base + ".intra" + std::to_string(l), n, cfg_.n_heads, cfg_.ff_dim,
                          rng);
    }
    for (int l = 0; l < cfg_.n_inter; ++l) {
      inter_.emplace_back(params_, base + ".inter" + std::to_string(l), n, cfg_.n_heads, cfg_.ff_dim,
                          rng);
    }
  }
  out_norm_ = nn::LayerNorm<T>(params_, "separator.out_norm", n);
  mask_ = nn::Linear<T>(params_, "separator.mask", n, n, true, rng);
  params_.add("separator.decoder.weight", nn::glorot<T>(n, cfg_.encoder_kernel, rng));
}

template <typename T>
int Separator<T>::encoded_length(Eigen::Index samples) const {
  AVSEP_REQUIRE(samples >= cfg_.encoder_kernel, InvalidArgument,
                "encode: input shorter than the encoder kernel");
  return static_cast<int>((samples - cfg_.encoder_kernel) / cfg_.encoder_stride) + 1;
}

template <typename T>
ag::Var<T> Separator<T>::encode(ag::Tape<T>& tape, ag::Var<T> wave) {
  AVSEP_REQUIRE(wave.rows() == 1, InvalidArgument, "encode: expects a [1 x T] waveform row");
  const int frames = encoded_length(wave.cols());
  auto framed = ag::frame_signal(wave, cfg_.encoder_kernel, cfg_.encoder_stride, frames, 0);
  return ag::relu(ag::matmul(framed, tape.parameter(params_.get("separator.encoder.weight"))));
}

template <typename T>
ag::Var<T> Separator<T>::align_video(ag::Tape<T>& tape, ag::Var<T> video, int num_chunks) {
  AVSEP_REQUIRE(video.rows() >= 1, InvalidArgument, "align_video: empty lip stream");
  AVSEP_REQUIRE(video.cols() == cfg_.video_dim, InvalidArgument,
                "align_video: lip embedding dimension mismatch");
  auto projected = video_proj_(tape, params_, video);
  auto interp = tape.constant(
      signal::interpolation_matrix(static_cast<int>(video.rows()), num_chunks).template cast<T>());
  auto per_chunk = ag::matmul(interp, projected);
  auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(num_chunks) * cfg_.chunk_len);
  for (int s = 0; s < num_chunks; ++s) {
    for (int k = 0; k < cfg_.chunk_len; ++k) (*idx)[static_cast<std::size_t>(s) * cfg_.chunk_len + k] = s;
  }
  return ag::gather_rows(per_chunk, std::shared_ptr<const std::vector<int>>(idx));
}

namespace {

template <typename T>
ag::Matrix<T> tiled_positions(int chunk_len, int num_chunks, int dim, bool along_chunk) {
  const int len = along_chunk ? chunk_len : num_chunks;
  const Eigen::MatrixXd pe = nn::sinusoidal_positions(len, dim);
  ag::Matrix<T> out(static_cast<Eigen::Index>(chunk_len) * num_chunks, dim);
  // Intra rows are s*K + k; inter rows are k*S + s.
  for (int a = 0; a < (along_chunk ? num_chunks : chunk_len); ++a) {
    for (int b = 0; b < len; ++b) out.row(static_cast<Eigen::Index>(a) * len + b) = pe.row(b).template cast<T>();
  }
  return out;
}

}  // namespace

template <typename T>
ag::Var<T> Separator<T>::dual_path_block(ag::Tape<T>& tape, ag::Var<T> chunked,
                                         const signal::ChunkPlan& plan, int repeat,
                                         DualPathKind kind) {
  const int k_len = plan.chunk_len;
  const int s_len = plan.num_chunks;
  const int n = cfg_.n_channels;
  AVSEP_REQUIRE(chunked.rows() == static_cast<Eigen::Index>(k_len) * s_len && chunked.cols() == n,
                InvalidArgument, "dual_path_block: feature does not match chunk layout");
  if (kind == DualPathKind::kIntra) {
    auto z = ag::add(chunked, tape.constant(tiled_positions<T>(k_len, s_len, n, true)));
    for (int l = 0; l < cfg_.n_intra; ++l) z = intra_[repeat * cfg_.n_intra + l](tape, params_, z, s_len);
    return z;
  }
  auto to_inter = std::make_shared<std::vector<int>>(chunked.rows());
  auto to_intra = std::make_shared<std::vector<int>>(chunked.rows());
  for (int s = 0; s < s_len; ++s) {
    for (int k = 0; k < k_len; ++k) {
      (*to_inter)[static_cast<std::size_t>(k) * s_len + s] = s * k_len + k;
      (*to_intra)[static_cast<std::size_t>(s) * k_len + k] = k * s_len + s;
    }
  }
  auto z = ag::gather_rows(chunked, std::shared_ptr<const std::vector<int>>(to_inter));
  z = ag::add(z, tape.constant(tiled_positions<T>(k_len, s_len, n, false)));
  for (int l = 0; l < cfg_.n_inter; ++l) z = inter_[repeat * cfg_.n_inter + l](tape, params_, z, k_len);
  return ag::gather_rows(z, std::shared_ptr<const std::vector<int>>(to_intra));
}

template <typename T>
SeparatorTrace<T> Separator<T>::forward(ag::Tape<T>& tape, ag::Var<T> wave, ag::Var<T> video) {
  SeparatorTrace<T> tr;
  tr.encoded = encode(tape, wave);
  tr.plan = signal::ChunkPlan::make(static_cast<int>(tr.encoded.rows()), cfg_.chunk_len);
  auto gather = std::make_shared<const std::vector<int>>(tr.plan.gather_index());
  tr.chunked = ag::gather_rows(tr.encoded, gather);
  tr.video = align_video(tape, video, tr.plan.num_chunks);

  auto fused = fusion_(tape, params_, tr.chunked, tr.video, tr.plan.num_chunks);
  if (cfg_.fusion == fusion::Strategy::kCrossAttention) fused = ag::add(tr.chunked, fused);
  auto z = fusion_norm_(tape, params_, fused);
  for (int r = 0; r < cfg_.n_repeats; ++r) {
    z = dual_path_block(tape, z, tr.plan, r, DualPathKind::kIntra);
    z = dual_path_block(tape, z, tr.plan, r, DualPathKind::kInter);
  }
  z = out_norm_(tape, params_, z);
  tr.mask = ag::sigmoid(mask_(tape, params_, z));
  auto masked = ag::mul(tr.mask, tr.chunked);

  auto weights = tr.plan.scatter_weight();
  auto w = std::make_shared<std::vector<T>>(weights.begin(), weights.end());
  auto feat = ag::scatter_rows(masked, gather, std::shared_ptr<const std::vector<T>>(w),
                               tr.encoded.rows());
  auto frames = ag::matmul(feat, tape.parameter(params_.get("separator.decoder.weight")));
  tr.output = ag::overlap_add(frames, cfg_.encoder_stride, wave.cols(), 0);
  return tr;
}

Waveform separate(const Waveform& x, const EmbeddingSeq& f_v, Separator<double>& model) {
  check_duration(x.size(), f_v.frames(), f_v.frame_rate);
  ag::Tape<double> tape;
  tape.set_grad_enabled(false);
  auto wave = tape.constant(x.samples.transpose());
  auto video = tape.constant(f_v.data.transpose());
  auto tr = model.forward(tape, wave, video);
  return Waveform(tr.output.value().row(0).transpose(), x.sample_rate);
}

template class Separator<float>;
template class Separator<double>;

}  // namespace avsep
