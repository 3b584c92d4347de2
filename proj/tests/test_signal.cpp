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

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "avsep/errors.hpp"
#include "avsep/signal.hpp"

using namespace avsep;
using namespace avsep::signal;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Brute-force chunk starts: step K/2 from 0 while the previous chunk ends
// before T.
std::vector<int> oracle_starts(int t, int k) {
  std::vector<int> starts{0};
  while (starts.back() + k < t) starts.push_back(starts.back() + k / 2);
  return starts;
}

double oracle_hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

}  // namespace

TEST_CASE("chunk shapes follow the padding rule") {
  FeatureMap f{Eigen::MatrixXd::Random(2, 8)};
  auto c = chunk(f, 4);
  CHECK(c.num_chunks == 3);
  CHECK(c.chunk_len == 4);
  CHECK(c.data.cols() == 12);
  CHECK(c.original_time == 8);

  FeatureMap one{Eigen::MatrixXd::Random(1, 4)};
  CHECK(chunk(one, 4).num_chunks == 1);

  FeatureMap nine{Eigen::MatrixXd::Random(3, 9)};
  auto c9 = chunk(nine, 4);
  CHECK(c9.num_chunks == 4);
  CHECK(oracle_starts(9, 4) == std::vector<int>{0, 2, 4, 6});
  // Chunk starting at 6 covers 6, 7, 8 and one padded zero.
  for (int n = 0; n < 3; ++n) {
    CHECK(c9.at(n, 2, 3) == nine.data(n, 8));
    CHECK(c9.at(n, 3, 3) == 0.0);
  }
}

TEST_CASE("chunk rejects odd or tiny chunk lengths") {
  FeatureMap f{Eigen::MatrixXd::Random(2, 8)};
  CHECK_THROWS_AS(chunk(f, 3), InvalidArgument);
  CHECK_THROWS_AS(chunk(f, 0), InvalidArgument);
}

TEST_CASE("chunk copies values verbatim and pads with exact zeros") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 * std::uniform_int_distribution<int>(1, 16)(rng);
    const int t = std::uniform_int_distribution<int>(1, 90)(rng);
    const int n = std::uniform_int_distribution<int>(1, 5)(rng);
    FeatureMap f{random_matrix(n, t, rng)};
    auto c = chunk(f, k);
    const auto starts = oracle_starts(t, k);
    REQUIRE(c.num_chunks == static_cast<int>(starts.size()));
    for (int s = 0; s < c.num_chunks; ++s) {
      for (int j = 0; j < k; ++j) {
        const int src = starts[s] + j;
        for (int r = 0; r < n; ++r) {
          if (src < t) {
            CHECK(c.at(r, j, s) == f.data(r, src));
          } else {
            CHECK(c.at(r, j, s) == 0.0);
          }
        }
      }
    }
  }
}

TEST_CASE("unchunk inverts chunk") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 * std::uniform_int_distribution<int>(1, 32)(rng);
    const int t = std::uniform_int_distribution<int>(1, 200)(rng);
    const int n = std::uniform_int_distribution<int>(1, 6)(rng);
    FeatureMap f{random_matrix(n, t, rng)};
    auto back = unchunk(chunk(f, k));
    REQUIRE(back.data.cols() == t);
    CHECK((back.data - f.data).cwiseAbs().maxCoeff() <= 1e-6);
  }
  FeatureMap ones{Eigen::MatrixXd::Ones(1, 8)};
  CHECK((unchunk(chunk(ones, 4)).data.array() == 1.0).all());
}

TEST_CASE("unchunk rejects an inconsistent layout") {
  FeatureMap f{Eigen::MatrixXd::Random(2, 8)};
  auto c = chunk(f, 4);
  c.original_time = 40;
  CHECK_THROWS_AS(unchunk(c), InvalidState);
}

TEST_CASE("log_mel shape, silence floor and determinism") {
  Waveform silence(Eigen::VectorXd::Zero(32000));
  auto m = log_mel(silence);
  CHECK(m.n_mels() == 80);
  CHECK(m.frames() == 200);
  CHECK((m.data.array() == std::log(1e-10)).all());

  std::mt19937_64 rng(5);
  Waveform noise(random_matrix(32000, 1, rng).col(0) * 0.1);
  auto a = log_mel(noise);
  auto b = log_mel(noise);
  CHECK((a.data.array() == b.data.array()).all());
  CHECK_THROWS_AS(log_mel(Waveform(Eigen::VectorXd::Zero(100))), InvalidArgument);
}

TEST_CASE("log_mel matches a direct DFT oracle") {
  std::mt19937_64 rng(9);
  Eigen::VectorXd x = random_matrix(4000, 1, rng).col(0);
  auto m = log_mel(Waveform(x));
  const int n_fft = 1024, win = 640, hop = 160;
  // Oracle filterbank from the HTK formula.
  std::vector<double> edges(82);
  for (int i = 0; i < 82; ++i) {
    const double mel = oracle_hz_to_mel(8000.0) * i / 81.0;
    edges[i] = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  }
  for (int frame : {0, 7, 24}) {
    std::vector<double> power(n_fft / 2 + 1, 0.0);
    for (int k = 0; k <= n_fft / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (int j = 0; j < win; ++j) {
        const int s = frame * hop - win / 2 + j;
        if (s < 0 || s >= x.size()) continue;
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / win);
        acc += w * x(s) * std::polar(1.0, -2.0 * std::numbers::pi * k * j / n_fft);
      }
      power[k] = std::norm(acc);
    }
    for (int band : {0, 10, 40, 79}) {
      double e = 0.0;
      for (int k = 0; k <= n_fft / 2; ++k) {
        const double f = k * 16000.0 / n_fft;
        const double lo = edges[band], c = edges[band + 1], hi = edges[band + 2];
        double wgt = 0.0;
        if (f > lo && f < c) wgt = (f - lo) / (c - lo);
        else if (f >= c && f < hi) wgt = (hi - f) / (hi - c);
        e += wgt * power[k];
      }
      CHECK(m.data(band, frame) == doctest::Approx(std::log(std::max(e, 1e-10))).epsilon(1e-9));
    }
  }
}

TEST_CASE("log_mel of a 1 kHz sine peaks in the band containing 1 kHz") {
  Eigen::VectorXd x(32000);
  for (int i = 0; i < x.size(); ++i) x(i) = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0);
  auto m = log_mel(Waveform(x));
  // Band whose centre is closest to 1 kHz on the mel scale.
  int expect = 0;
  double best = 1e9;
  for (int b = 0; b < 80; ++b) {
    const double centre_mel = oracle_hz_to_mel(8000.0) * (b + 1) / 81.0;
    const double d = std::abs(centre_mel - oracle_hz_to_mel(1000.0));
    if (d < best) {
      best = d;
      expect = b;
    }
  }
  for (int t = 2; t < 198; ++t) {
    Eigen::Index arg;
    m.data.col(t).maxCoeff(&arg);
    CHECK(arg == expect);
  }
}

TEST_CASE("resample_embedding examples and linearity") {
  EmbeddingSeq e;
  e.data.resize(1, 2);
  e.data << 0.0, 2.0;
  auto r = resample_embedding(e, 3);
  REQUIRE(r.frames() == 3);
  CHECK(r.data(0, 0) == 0.0);
  CHECK(r.data(0, 1) == doctest::Approx(1.0));
  CHECK(r.data(0, 2) == 2.0);

  std::mt19937_64 rng(2);
  EmbeddingSeq a{random_matrix(4, 13, rng)}, b{random_matrix(4, 13, rng)};
  CHECK((resample_embedding(a, 13).data - a.data).cwiseAbs().maxCoeff() <= 1e-12);
  for (int target : {1, 5, 13, 31}) {
    EmbeddingSeq mix{2.0 * a.data - 0.5 * b.data};
    const Eigen::MatrixXd lhs = resample_embedding(mix, target).data;
    const Eigen::MatrixXd rhs = 2.0 * resample_embedding(a, target).data - 0.5 * resample_embedding(b, target).data;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    EmbeddingSeq c{Eigen::MatrixXd::Constant(3, 13, 0.7)};
    CHECK((resample_embedding(c, target).data.array() - 0.7).abs().maxCoeff() <= 1e-12);
    if (target > 1) {
      auto ra = resample_embedding(a, target).data;
      CHECK((ra.col(0) - a.data.col(0)).norm() == 0.0);
      CHECK((ra.col(target - 1) - a.data.col(12)).norm() <= 1e-12);
    }
  }
  EmbeddingSeq empty;
  empty.data.resize(2, 0);
  CHECK_THROWS_AS(resample_embedding(empty, 3), InvalidArgument);
}

TEST_CASE("upsample_to_mel repeats frames four times") {
  EmbeddingSeq e;
  e.data.resize(1, 2);
  e.data << 1.0, 2.0;
  auto u = upsample_to_mel(e, 8);
  REQUIRE(u.frames() == 8);
  for (int i = 0; i < 8; ++i) CHECK(u.data(0, i) == (i < 4 ? 1.0 : 2.0));
  CHECK(u.frame_rate == 100.0);

  EmbeddingSeq one{Eigen::MatrixXd::Constant(2, 1, 3.0)};
  CHECK(upsample_to_mel(one, 4).frames() == 4);
  EmbeddingSeq fifty{Eigen::MatrixXd::Random(3, 50)};
  auto up = upsample_to_mel(fifty, 200);
  CHECK(up.frames() == 200);
  CHECK(up.data.col(199) == fifty.data.col(49));
  // Edge replication when the mel grid runs one frame longer.
  CHECK(upsample_to_mel(fifty, 201).data.col(200) == fifty.data.col(49));
}

TEST_CASE("fold_frames is a bijection") {
  std::mt19937_64 rng(4);
  FeatureMap f{random_matrix(160, 200, rng)};
  f.data.col(3).setZero();
  auto w = fold_frames(f);
  CHECK(w.size() == 32000);
  for (int i = 0; i < 160; ++i) CHECK(w.samples(3 * 160 + i) == 0.0);
  CHECK(w.samples(160 * 7 + 11) == f.data(11, 7));
  auto back = unfold_frames(w);
  CHECK((back.data.array() == f.data.array()).all());
  CHECK_THROWS_AS(fold_frames(FeatureMap{Eigen::MatrixXd::Zero(80, 3)}), InvalidArgument);
}

TEST_CASE("repeat_index edge replication") {
  auto idx = repeat_index(3, 4, 14);
  REQUIRE(idx.size() == 14);
  CHECK(idx[0] == 0);
  CHECK(idx[4] == 1);
  CHECK(idx[11] == 2);
  CHECK(idx[13] == 2);
}
