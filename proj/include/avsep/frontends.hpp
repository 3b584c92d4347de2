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

// Frozen embedding extractors. The audio embedder is a fixed spectral
// feature map at 25 Hz; the lip embedder is a lookup table whose rows are
// the audio embeddings of canonical renders of each unit, so the two
// streams share one embedding space.

#pragma once

#include <cstdint>
#include <string>

#include "avsep/autograd.hpp"
#include "avsep/container.hpp"
#include "avsep/types.hpp"

namespace avsep {

enum class FrontendKind { kOracleAudio, kOracleVideo, kPrecomputed };

struct FrontendSpec {
  FrontendKind kind = FrontendKind::kOracleAudio;
  int embed_dim = 64;
  std::uint64_t seed = 0;
  int n_units = 12;
};

std::string to_string(FrontendKind k);
FrontendKind parse_frontend_kind(const std::string& s);

class AudioFrontend {
 public:
  static constexpr int kFrame = kVideoFrameSamples;  // 40 ms, 25 Hz
  static constexpr int kBands = 16;
  static constexpr double kFloor = 1e-8;

  explicit AudioFrontend(const FrontendSpec& spec);

  const FrontendSpec& spec() const { return spec_; }
  int embed_dim() const { return spec_.embed_dim; }
  double frame_rate() const { return kVideoRate; }

  /// [dim x L / 640] embedding of a 16 kHz waveform.
  EmbeddingSeq embed(const Waveform& w) const;

  /// Differentiable form: [1 x L] row -> [L / 640 x dim]. Gradients reach
  /// the waveform; the frozen matrices enter as constants.
  template <typename T>
  ag::Var<T> embed(ag::Var<T> wave) const;

  /// Content hash of every frozen matrix.
  std::uint64_t digest() const;

 private:
  template <typename T>
  struct Basis {
    ag::Matrix<T> cos;   // [640 x 321], Hann folded in
    ag::Matrix<T> sin;
    ag::Matrix<T> bank;  // [321 x 16]
    ag::Matrix<T> proj;  // [16 x dim], band-centering folded in
  };
  template <typename T>
  const Basis<T>& basis() const;

  FrontendSpec spec_;
  Basis<double> basis_d_;
  Basis<float> basis_f_;
};

class VideoFrontend {
 public:
  /// Builds the unit table from `audio`'s embeddings of seeded renders.
  VideoFrontend(const FrontendSpec& spec, const AudioFrontend& audio);

  const FrontendSpec& spec() const { return spec_; }
  const Eigen::MatrixXd& table() const { return table_; }  // [n_units x dim]

  /// Frame t maps to table row unit_ids[t]; throws on out-of-range ids.
  EmbeddingSeq embed(const VisemeStream& v) const;
  /// Time-major [frames x dim].
  Eigen::MatrixXd embed_rows(const VisemeStream& v) const;

  std::uint64_t digest() const;

 private:
  FrontendSpec spec_;
  Eigen::MatrixXd table_;
};

/// Convenience wrappers matching the operation names.
inline EmbeddingSeq embed_audio(const Waveform& w, const AudioFrontend& fe) { return fe.embed(w); }
inline EmbeddingSeq embed_video(const VisemeStream& v, const VideoFrontend& fe) { return fe.embed(v); }

std::uint64_t hash_matrix(const Eigen::MatrixXd& m, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace avsep
