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

#include "avsep/signal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace avsep::signal {

ChunkPlan ChunkPlan::make(int time, int chunk_len) {
  AVSEP_REQUIRE(chunk_len >= 2 && chunk_len % 2 == 0, InvalidArgument,
                "chunk: chunk length must be even and >= 2");
  AVSEP_REQUIRE(time >= 1, InvalidArgument, "chunk: empty feature");
  ChunkPlan p;
  p.time = time;
  p.chunk_len = chunk_len;
  p.hop = chunk_len / 2;
  const int over = time - chunk_len;
  p.num_chunks = over <= 0 ? 1 : (over + p.hop - 1) / p.hop + 1;
  return p;
}

std::vector<int> ChunkPlan::gather_index() const {
  std::vector<int> idx(static_cast<std::size_t>(chunk_len) * num_chunks);
  for (int s = 0; s < num_chunks; ++s) {
    for (int k = 0; k < chunk_len; ++k) {
      const int src = start(s) + k;
      idx[static_cast<std::size_t>(s) * chunk_len + k] = src < time ? src : -1;
    }
  }
  return idx;
}

std::vector<int> ChunkPlan::scatter_index() const { return gather_index(); }

std::vector<double> ChunkPlan::scatter_weight() const {
  std::vector<int> coverage(static_cast<std::size_t>(time), 0);
  const auto idx = gather_index();
  for (int i : idx) {
    if (i >= 0) ++coverage[i];
  }
  std::vector<double> w(idx.size(), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) w[i] = 1.0 / coverage[idx[i]];
  }
  return w;
}

ChunkedFeature chunk(const FeatureMap& feat, int chunk_len) {
  const auto plan = ChunkPlan::make(static_cast<int>(feat.time()), chunk_len);
  const auto idx = plan.gather_index();
  ChunkedFeature cf;
  cf.chunk_len = plan.chunk_len;
  cf.num_chunks = plan.num_chunks;
  cf.original_time = plan.time;
  cf.data = Eigen::MatrixXd::Zero(feat.channels(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) cf.data.col(i) = feat.data.col(idx[i]);
  }
  return cf;
}

FeatureMap unchunk(const ChunkedFeature& cf) {
  AVSEP_REQUIRE(cf.chunk_len >= 2 && cf.chunk_len % 2 == 0 && cf.num_chunks >= 1, InvalidState,
                "unchunk: malformed chunk layout");
  AVSEP_REQUIRE(cf.data.cols() == static_cast<Eigen::Index>(cf.chunk_len) * cf.num_chunks,
                InvalidState, "unchunk: data does not match chunk layout");
  const auto plan = ChunkPlan::make(std::max(cf.original_time, 1), cf.chunk_len);
  AVSEP_REQUIRE(cf.original_time >= 1 && plan.num_chunks == cf.num_chunks, InvalidState,
                "unchunk: original_time inconsistent with chunk count");
  const auto idx = plan.scatter_index();
  const auto w = plan.scatter_weight();
  FeatureMap out;
  out.data = Eigen::MatrixXd::Zero(cf.channels(), cf.original_time);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) out.data.col(idx[i]) += w[i] * cf.data.col(i);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

MelBasis build_basis(const MelConfig& cfg) {
  AVSEP_REQUIRE(cfg.win <= cfg.n_fft && cfg.win > 0, InvalidArgument,
                "mel: window must fit inside the FFT size");
  const int bins = cfg.n_fft / 2 + 1;
  const int pad = (cfg.n_fft - cfg.win) / 2;
  MelBasis b;
  b.cos_basis.resize(cfg.win, bins);
  b.sin_basis.resize(cfg.win, bins);
  for (int j = 0; j < cfg.win; ++j) {
    // Periodic Hann.
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / cfg.win);
    for (int k = 0; k < bins; ++k) {
      const double ang = 2.0 * std::numbers::pi * k * (j + pad) / cfg.n_fft;
      b.cos_basis(j, k) = w * std::cos(ang);
      b.sin_basis(j, k) = -w * std::sin(ang);
    }
  }
  const double mlo = hz_to_mel(cfg.fmin);
  const double mhi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * i / (cfg.n_mels + 1));
  }
  b.filterbank = Eigen::MatrixXd::Zero(bins, cfg.n_mels);
  for (int k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      const double up = (f - lo) / (c - lo);
      const double down = (hi - f) / (hi - c);
      b.filterbank(k, m) = std::max(0.0, std::min(up, down));
    }
  }
  return b;
}

}  // namespace

const MelBasis& mel_basis(const MelConfig& cfg) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int, int, double, double>, std::unique_ptr<MelBasis>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(cfg.sample_rate, cfg.n_fft, cfg.win, cfg.n_mels, cfg.fmin, cfg.fmax);
  auto& slot = cache[key];
  if (!slot) slot = std::make_unique<MelBasis>(build_basis(cfg));
  return *slot;
}

MelSpec log_mel(const Waveform& w, const MelConfig& cfg) {
  AVSEP_REQUIRE(w.sample_rate == cfg.sample_rate, InvalidArgument, "log_mel: sample rate mismatch");
  AVSEP_REQUIRE(w.size() >= cfg.win, InvalidArgument, "log_mel: input shorter than one window");
  ag::Tape<double> tape;
  auto x = tape.constant(w.samples.transpose());
  auto mel = log_mel(x, cfg);
  MelSpec out;
  out.data = mel.value().transpose();
  out.hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;
  out.win_seconds = static_cast<double>(cfg.win) / cfg.sample_rate;
  return out;
}

Eigen::MatrixXd interpolation_matrix(int source_frames, int target_frames) {
  AVSEP_REQUIRE(source_frames >= 1, InvalidArgument, "resample: empty input");
  AVSEP_REQUIRE(target_frames >= 1, InvalidArgument, "resample: target_frames must be >= 1");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(target_frames, source_frames);
  if (source_frames == 1 || target_frames == 1) {
    m.col(0).setOnes();
    return m;
  }
  const double step = static_cast<double>(source_frames - 1) / (target_frames - 1);
  for (int i = 0; i < target_frames; ++i) {
    const double pos = i * step;
    int lo = static_cast<int>(std::floor(pos));
    lo = std::min(lo, source_frames - 2);
    const double frac = pos - lo;
    m(i, lo) += 1.0 - frac;
    m(i, lo + 1) += frac;
  }
  return m;
}

EmbeddingSeq resample_embedding(const EmbeddingSeq& e, int target_frames) {
  AVSEP_REQUIRE(e.frames() >= 1 && e.dim() >= 1, InvalidArgument, "resample: empty input");
  const auto m = interpolation_matrix(static_cast<int>(e.frames()), target_frames);
  EmbeddingSeq out;
  out.data = e.data * m.transpose();
  out.frame_rate = e.frame_rate * target_frames / static_cast<double>(e.frames());
  return out;
}

std::vector<int> repeat_index(int source_frames, int factor, int target_frames) {
  AVSEP_REQUIRE(source_frames >= 1 && factor >= 1 && target_frames >= 1, InvalidArgument,
                "repeat_index: sizes must be positive");
  std::vector<int> idx(target_frames);
  for (int i = 0; i < target_frames; ++i) idx[i] = std::min(i / factor, source_frames - 1);
  return idx;
}

EmbeddingSeq upsample_to_mel(const EmbeddingSeq& e, int mel_frames) {
  AVSEP_REQUIRE(e.frames() >= 1, InvalidArgument, "upsample_to_mel: empty input");
  const double ratio = kMelRate / e.frame_rate;
  const int factor = static_cast<int>(std::lround(ratio));
  AVSEP_REQUIRE(factor >= 1 && std::abs(ratio - factor) < 1e-9, InvalidArgument,
                "upsample_to_mel: mel rate is not an integer multiple of the frame rate");
  const auto idx = repeat_index(static_cast<int>(e.frames()), factor, mel_frames);
  EmbeddingSeq out;
  out.frame_rate = kMelRate;
  out.data.resize(e.dim(), mel_frames);
  for (int i = 0; i < mel_frames; ++i) out.data.col(i) = e.data.col(idx[i]);
  return out;
}

Waveform fold_frames(const FeatureMap& f, int hop) {
  AVSEP_REQUIRE(f.channels() == hop, InvalidArgument,
                "fold_frames: channel count must equal the hop size");
  Waveform w;
  w.samples.resize(f.channels() * f.time());
  for (Eigen::Index t = 0; t < f.time(); ++t) w.samples.segment(t * hop, hop) = f.data.col(t);
  return w;
}

FeatureMap unfold_frames(const Waveform& w, int hop) {
  AVSEP_REQUIRE(w.size() % hop == 0, InvalidArgument,
                "unfold_frames: length must be a multiple of the hop size");
  FeatureMap f;
  f.data.resize(hop, w.size() / hop);
  for (Eigen::Index t = 0; t < f.time(); ++t) f.data.col(t) = w.samples.segment(t * hop, hop);
  return f;
}

}  // namespace avsep::signal
