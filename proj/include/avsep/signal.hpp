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

#pragma once

#include <memory>
#include <vector>

#include "avsep/autograd.hpp"
#include "avsep/types.hpp"

namespace avsep::signal {

/// Layout of half-overlapping chunks over a sequence of `time` frames.
struct ChunkPlan {
  int time = 0;
  int chunk_len = 0;
  int hop = 0;
  int num_chunks = 0;

  /// Throws InvalidArgument unless chunk_len is even and >= 2.
  static ChunkPlan make(int time, int chunk_len);

  int padded_time() const { return chunk_len + (num_chunks - 1) * hop; }
  int start(int s) const { return s * hop; }

  /// For chunked row s * chunk_len + k: the source frame, or -1 in padding.
  std::vector<int> gather_index() const;
  /// For chunked row s * chunk_len + k: the target frame (or -1) and the
  /// 1 / coverage weight used by the overlap-add inverse.
  std::vector<int> scatter_index() const;
  std::vector<double> scatter_weight() const;
};

ChunkedFeature chunk(const FeatureMap& feat, int chunk_len);
FeatureMap unchunk(const ChunkedFeature& cf);

struct MelConfig {
  int sample_rate = kSampleRate;
  int n_fft = 1024;
  int hop = kHopSamples;
  int win = 640;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double floor = 1e-10;
};

/// Fixed analysis matrices for a MelConfig: Hann-windowed real DFT bases
/// [win x bins] and the triangular filterbank [bins x n_mels].
struct MelBasis {
  Eigen::MatrixXd cos_basis;
  Eigen::MatrixXd sin_basis;
  Eigen::MatrixXd filterbank;
};

const MelBasis& mel_basis(const MelConfig& cfg = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Number of centered frames for a signal of `length` samples.
inline int mel_frame_count(Eigen::Index length, int hop = kHopSamples) {
  return static_cast<int>(length / hop);
}

MelSpec log_mel(const Waveform& w, const MelConfig& cfg = {});

/// Linear interpolation along frames to exactly `target_frames`.
EmbeddingSeq resample_embedding(const EmbeddingSeq& e, int target_frames);

/// Nearest-neighbour repetition of 25 Hz frames onto the 100 Hz mel grid.
EmbeddingSeq upsample_to_mel(const EmbeddingSeq& e, int mel_frames);

/// Column t of a [hop x T] map becomes samples [hop * t, hop * (t + 1)).
Waveform fold_frames(const FeatureMap& f, int hop = kHopSamples);
FeatureMap unfold_frames(const Waveform& w, int hop = kHopSamples);

/// [target x source] matrix M such that M * frames resamples linearly.
Eigen::MatrixXd interpolation_matrix(int source_frames, int target_frames);

/// Row index map for nearest-neighbour upsampling by an integer factor with
/// edge replication to `target_frames`.
std::vector<int> repeat_index(int source_frames, int factor, int target_frames);

// ---------------------------------------------------------------------------
// Differentiable counterparts used inside models. Sequences are time-major.

/// Log-mel of a [1 x L] waveform row; returns [frames x n_mels].
template <typename T>
ag::Var<T> log_mel(ag::Var<T> wave, const MelConfig& cfg = {}) {
  const Eigen::Index len = wave.cols();
  AVSEP_REQUIRE(len >= cfg.win, InvalidArgument, "log_mel: input shorter than one window");
  const MelBasis& basis = mel_basis(cfg);
  ag::Tape<T>* t = wave.tape();
  const int frames = mel_frame_count(len, cfg.hop);
  auto framed = ag::frame_signal(wave, cfg.win, cfg.hop, frames, -cfg.win / 2);
  auto re = ag::matmul(framed, t->constant(basis.cos_basis.cast<T>()));
  auto im = ag::matmul(framed, t->constant(basis.sin_basis.cast<T>()));
  auto power = ag::add(ag::square(re), ag::square(im));
  auto mel = ag::matmul(power, t->constant(basis.filterbank.cast<T>()));
  return ag::log_floor(mel, static_cast<T>(cfg.floor));
}

}  // namespace avsep::signal
