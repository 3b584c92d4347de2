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

#include "avsep/frontends.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "avsep/data.hpp"
#include "avsep/errors.hpp"
#include "avsep/signal.hpp"

namespace avsep {

namespace {

constexpr double kLowHz = 100.0;
constexpr double kHighHz = 7000.0;
constexpr int kBins = AudioFrontend::kFrame / 2 + 1;
constexpr int kReferenceSpeakers = 4;
constexpr int kReferenceFrames = 8;

template <typename U>
ag::Matrix<U> cast(const ag::Matrix<double>& m) {
  return m.template cast<U>();
}

}  // namespace

std::string to_string(FrontendKind k) {
  switch (k) {
    case FrontendKind::kOracleAudio: return "oracle_audio";
    case FrontendKind::kOracleVideo: return "oracle_video";
    case FrontendKind::kPrecomputed: return "precomputed";
  }
  return "?";
}

FrontendKind parse_frontend_kind(const std::string& s) {
  if (s == "oracle_audio") return FrontendKind::kOracleAudio;
  if (s == "oracle_video") return FrontendKind::kOracleVideo;
  if (s == "precomputed") return FrontendKind::kPrecomputed;
  throw InvalidArgument("unknown frontend kind '" + s + "'");
}

std::uint64_t hash_matrix(const Eigen::MatrixXd& m, std::uint64_t h) {
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  mix(shape, sizeof(shape));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      mix(&v, sizeof(v));
    }
  return h;
}

AudioFrontend::AudioFrontend(const FrontendSpec& spec) : spec_(spec) {
  AVSEP_REQUIRE(spec.embed_dim > 0, InvalidArgument, "frontend: embed_dim must be positive");
  AVSEP_REQUIRE(spec.n_units > 0, InvalidArgument, "frontend: n_units must be positive");
  auto& b = basis_d_;
  b.cos.resize(kFrame, kBins);
  b.sin.resize(kFrame, kBins);
  for (int n = 0; n < kFrame; ++n) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFrame);
    for (int k = 0; k < kBins; ++k) {
      const double ph = 2.0 * std::numbers::pi * static_cast<double>((n * k) % kFrame) / kFrame;
      b.cos(n, k) = w * std::cos(ph);
      b.sin(n, k) = -w * std::sin(ph);
    }
  }
  // Triangular bands equally spaced on the mel scale.
  b.bank = ag::Matrix<double>::Zero(kBins, kBands);
  const double m_lo = signal::hz_to_mel(kLowHz), m_hi = signal::hz_to_mel(kHighHz);
  std::vector<double> edges(kBands + 2);
  for (int i = 0; i < kBands + 2; ++i) edges[i] = signal::mel_to_hz(m_lo + (m_hi - m_lo) * i / (kBands + 1));
  for (int k = 0; k < kBins; ++k) {
    const double hz = static_cast<double>(k) * kSampleRate / kFrame;
    for (int j = 0; j < kBands; ++j) {
      const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
      double g = 0.0;
      if (hz > lo && hz <= mid) g = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) g = (hi - hz) / (hi - mid);
      b.bank(k, j) = g;
    }
  }
  std::mt19937_64 rng(data::derive_seed(spec.seed, "frontend.audio.proj"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  ag::Matrix<double> r(kBands, spec.embed_dim);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = gauss(rng) / std::sqrt(double(kBands));
  // Centering across bands removes overall loudness before the projection.
  const ag::Matrix<double> center = ag::Matrix<double>::Identity(kBands, kBands) -
                                    ag::Matrix<double>::Constant(kBands, kBands, 1.0 / kBands);
  b.proj = center * r;

  basis_f_ = {cast<float>(b.cos), cast<float>(b.sin), cast<float>(b.bank), cast<float>(b.proj)};
}

template <>
const AudioFrontend::Basis<double>& AudioFrontend::basis<double>() const {
  return basis_d_;
}
template <>
const AudioFrontend::Basis<float>& AudioFrontend::basis<float>() const {
  return basis_f_;
}

template <typename T>
ag::Var<T> AudioFrontend::embed(ag::Var<T> wave) const {
  AVSEP_REQUIRE(wave.rows() == 1, InvalidArgument, "embed_audio: expected a [1 x L] row");
  const int frames = static_cast<int>(wave.cols() / kFrame);
  AVSEP_REQUIRE(frames > 0, InvalidArgument, "embed_audio: input shorter than one 40 ms frame");
  ag::Tape<T>* tape = wave.tape();
  const auto& b = basis<T>();
  auto fr = ag::frame_signal(wave, kFrame, kFrame, frames, 0);
  auto re = ag::matmul(fr, tape->constant(b.cos));
  auto im = ag::matmul(fr, tape->constant(b.sin));
  auto power = ag::add(ag::square(re), ag::square(im));
  auto energy = ag::matmul(power, tape->constant(b.bank));
  auto logs = ag::log_floor(energy, static_cast<T>(kFloor));
  return ag::matmul(logs, tape->constant(b.proj));
}

EmbeddingSeq AudioFrontend::embed(const Waveform& w) const {
  AVSEP_REQUIRE(w.size() > 0, InvalidArgument, "embed_audio: empty waveform");
  AVSEP_REQUIRE(w.sample_rate == kSampleRate, InvalidArgument, "embed_audio: expected 16 kHz input");
  ag::Tape<double> tape;
  tape.set_grad_enabled(false);
  auto x = tape.constant(w.samples.transpose());
  auto e = embed(x);
  EmbeddingSeq out;
  out.frame_rate = kVideoRate;
  out.data = e.value().transpose();
  return out;
}

std::uint64_t AudioFrontend::digest() const {
  std::uint64_t h = hash_matrix(basis_d_.cos);
  h = hash_matrix(basis_d_.sin, h);
  h = hash_matrix(basis_d_.bank, h);
  h = hash_matrix(basis_d_.proj, h);
  h = hash_matrix(basis_f_.proj.cast<double>(), h);
  return h;
}

template ag::Var<float> AudioFrontend::embed<float>(ag::Var<float>) const;
template ag::Var<double> AudioFrontend::embed<double>(ag::Var<double>) const;

VideoFrontend::VideoFrontend(const FrontendSpec& spec, const AudioFrontend& audio) : spec_(spec) {
  AVSEP_REQUIRE(spec.embed_dim == audio.embed_dim(), InvalidArgument,
                "video frontend: embed_dim must match the audio frontend");
  AVSEP_REQUIRE(spec.n_units > 0, InvalidArgument, "video frontend: n_units must be positive");
  table_ = Eigen::MatrixXd::Zero(spec.n_units, spec.embed_dim);
  // Row u is the audio embedding of unit u averaged over reference voices
  // that never appear in a corpus.
  for (int r = 0; r < kReferenceSpeakers; ++r) {
    const auto spk = data::make_speaker(100000 + r, data::derive_seed(spec.seed, "frontend.video.ref"));
    for (int u = 0; u < spec.n_units; ++u) {
      VisemeStream v;
      v.n_units = spec.n_units;
      v.unit_ids.assign(kReferenceFrames, u);
      const EmbeddingSeq e = audio.embed(data::render_units(v, spk));
      table_.row(u) += e.data.rowwise().mean().transpose() / kReferenceSpeakers;
    }
  }
}

Eigen::MatrixXd VideoFrontend::embed_rows(const VisemeStream& v) const {
  AVSEP_REQUIRE(!v.unit_ids.empty(), InvalidArgument, "embed_video: empty stream");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.unit_ids.size()), table_.cols());
  for (std::size_t t = 0; t < v.unit_ids.size(); ++t) {
    const int u = v.unit_ids[t];
    AVSEP_REQUIRE(u >= 0 && u < table_.rows(), InvalidArgument, "embed_video: unit id out of range");
    out.row(static_cast<Eigen::Index>(t)) = table_.row(u);
  }
  return out;
}

EmbeddingSeq VideoFrontend::embed(const VisemeStream& v) const {
  EmbeddingSeq e;
  e.frame_rate = v.frame_rate;
  e.data = embed_rows(v).transpose();
  return e;
}

std::uint64_t VideoFrontend::digest() const { return hash_matrix(table_); }

}  // namespace avsep
