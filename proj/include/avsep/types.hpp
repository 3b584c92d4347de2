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

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace avsep {

inline constexpr int kSampleRate = 16000;
inline constexpr int kHopSamples = 160;     // 10 ms mel hop
inline constexpr int kVideoFrameSamples = 640;  // 40 ms video frame
inline constexpr double kVideoRate = 25.0;
inline constexpr double kMelRate = 100.0;

/// Mono audio. Samples are dimensionless amplitudes.
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(Eigen::VectorXd s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}
  Eigen::Index size() const { return samples.size(); }
};

/// Latent feature, [channels x time].
struct FeatureMap {
  Eigen::MatrixXd data;
  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index time() const { return data.cols(); }
};

/// Overlapping chunks of a FeatureMap.
///
/// `data` has shape [channels x (chunk_len * num_chunks)] where column
/// `s * chunk_len + k` holds position k of chunk s.
struct ChunkedFeature {
  Eigen::MatrixXd data;
  int chunk_len = 0;
  int num_chunks = 0;
  int original_time = 0;

  Eigen::Index channels() const { return data.rows(); }
  double at(Eigen::Index n, int k, int s) const { return data(n, s * chunk_len + k); }
};

/// Log-mel spectrogram, [n_mels x frames].
struct MelSpec {
  Eigen::MatrixXd data;
  double hop_seconds = 0.01;
  double win_seconds = 0.04;
  Eigen::Index n_mels() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

/// Frame-rate-tagged embedding sequence, [dim x frames].
struct EmbeddingSeq {
  Eigen::MatrixXd data;
  double frame_rate = kVideoRate;
  Eigen::Index dim() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

/// Discrete lip units, one per 40 ms video frame.
struct VisemeStream {
  std::vector<int> unit_ids;
  double frame_rate = kVideoRate;
  int n_units = 12;
};

}  // namespace avsep
