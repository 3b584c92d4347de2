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

#include "avsep/container.hpp"
#include "avsep/data.hpp"
#include "avsep/errors.hpp"
#include "avsep/frontends.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace avsep;
using namespace avsep::testing;

namespace {

double mean_frame_distance(const EmbeddingSeq& a, const EmbeddingSeq& b) {
  double d = 0.0;
  for (Eigen::Index t = 0; t < a.frames(); ++t) d += (a.data.col(t).normalized() - b.data.col(t).normalized()).norm();
  return d / static_cast<double>(a.frames());
}

}  // namespace

TEST_CASE("audio embedding shape, rate and silence") {
  AudioFrontend fe(FrontendSpec{FrontendKind::kOracleAudio, 64, 3, 12});
  std::mt19937_64 rng(1);
  auto e = embed_audio(Waveform(random_mat(32000, 1, rng).col(0)), fe);
  CHECK(e.dim() == 64);
  CHECK(e.frames() == 50);
  CHECK(e.frame_rate == 25.0);
  auto s = fe.embed(Waveform(Eigen::VectorXd::Zero(32000)));
  for (Eigen::Index t = 1; t < s.frames(); ++t) CHECK((s.data.col(t) - s.data.col(0)).norm() == 0.0);
  CHECK_THROWS_AS(fe.embed(Waveform(Eigen::VectorXd())), InvalidArgument);
  CHECK_THROWS_AS(fe.embed(Waveform(Eigen::VectorXd::Zero(640), 8000)), InvalidArgument);
}

TEST_CASE("audio embedding is deterministic in its seed") {
  AudioFrontend a(FrontendSpec{FrontendKind::kOracleAudio, 16, 3, 12});
  AudioFrontend b(FrontendSpec{FrontendKind::kOracleAudio, 16, 3, 12});
  AudioFrontend c(FrontendSpec{FrontendKind::kOracleAudio, 16, 4, 12});
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != c.digest());
}

TEST_CASE("differentiable audio embedding matches the value form and finite differences") {
  AudioFrontend fe(FrontendSpec{FrontendKind::kOracleAudio, 8, 1, 12});
  std::mt19937_64 rng(2);
  Mat w = random_mat(1, 1280, rng, 0.3);
  Tape t;
  auto rows = fe.embed(t.constant(w)).value();
  auto ref = fe.embed(Waveform(w.row(0).transpose()));
  CHECK((rows.transpose() - ref.data).cwiseAbs().maxCoeff() < 1e-9);
  auto rep = check_gradients(
      [&](Tape&, const std::vector<Var>& x) { return probe(fe.embed(x[0])); }, {&w}, {}, 80);
  CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
}

TEST_CASE("video lookup semantics") {
  AudioFrontend audio(FrontendSpec{FrontendKind::kOracleAudio, 16, 0, 12});
  VideoFrontend video(FrontendSpec{FrontendKind::kOracleVideo, 16, 0, 12}, audio);
  VisemeStream v;
  v.unit_ids = {3, 3, 7};
  auto e = embed_video(v, video);
  CHECK(e.frames() == 3);
  CHECK(e.frame_rate == 25.0);
  CHECK(e.data.col(0) == video.table().row(3).transpose());
  CHECK(e.data.col(1) == e.data.col(0));
  CHECK(e.data.col(2) == video.table().row(7).transpose());
  CHECK(video.embed_rows(v).row(2) == video.table().row(7));
  v.unit_ids = {12};
  CHECK_THROWS_AS(video.embed(v), InvalidArgument);
  v.unit_ids = {-1};
  CHECK_THROWS_AS(video.embed(v), InvalidArgument);
  // Distinct units get distinct rows.
  for (int a = 0; a < 12; ++a) {
    for (int b = a + 1; b < 12; ++b) CHECK((video.table().row(a) - video.table().row(b)).norm() > 1e-6);
  }
}

TEST_CASE("lip and clean-audio embeddings are coherent across speakers") {
  AudioFrontend audio(FrontendSpec{FrontendKind::kOracleAudio, 64, 0, 12});
  VideoFrontend video(FrontendSpec{FrontendKind::kOracleVideo, 64, 0, 12}, audio);
  int wins = 0;
  double pos = 0.0, neg = 0.0;
  const int n = 120;
  for (int i = 0; i < n; ++i) {
    const std::string id = "coh-" + std::to_string(i);
    const std::uint64_t seed = data::derive_seed(31, id);
    auto spk_a = data::make_speaker(i % 10, 31);
    auto spk_b = data::make_speaker(10 + i % 7, 31);
    auto ex = data::synthesize_example(id, spk_a, spk_b, seed);
    auto fv = video.embed(ex.visemes);
    const double dp = mean_frame_distance(fv, audio.embed(ex.target));
    const double dn = mean_frame_distance(fv, audio.embed(ex.interferer));
    pos += dp / n;
    neg += dn / n;
    wins += dp < dn;
  }
  MESSAGE("coherence: d_pos " << pos << " d_neg " << neg << " wins " << wins << "/" << n);
  CHECK(pos < neg);
  CHECK(wins >= 0.95 * n);
}

TEST_CASE("embedding container round trip and errors") {
  TempDir dir("container");
  std::mt19937_64 rng(3);
  EmbeddingSeq e{random_mat(768, 50, rng).cast<float>().cast<double>(), 25.0};
  save_embedding(dir.path / "e.avse", e);
  auto back = load_precomputed(dir.path / "e.avse");
  CHECK(back.dim() == 768);
  CHECK(back.frames() == 50);
  CHECK(back.frame_rate == 25.0);
  CHECK((back.data.array() == e.data.array()).all());

  auto bytes = encode_embedding(e);
  CHECK(bytes.size() == 20 + 4 * 768 * 50);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 4, "AVSE"));
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(decode_embedding(cut), FormatError);
  auto header_only = bytes;
  header_only.resize(12);
  CHECK_THROWS_AS(decode_embedding(header_only), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_embedding(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_embedding(bad_version), FormatError);
  CHECK_THROWS_AS(load_precomputed(dir.path / "missing.avse"), IoError);
}

TEST_CASE("viseme container and CSV forms") {
  TempDir dir("visemes");
  VisemeStream v;
  v.unit_ids = {0, 5, 11, 11};
  auto e = visemes_to_embedding(v);
  CHECK(e.dim() == 1);
  CHECK(embedding_to_visemes(e, 12).unit_ids == v.unit_ids);
  CHECK_THROWS_AS(embedding_to_visemes(e, 11), FormatError);
  std::ofstream(dir.path / "v.csv") << "frame,unit_id\n0,0\n1,5\n2,11\n3,11\n";
  CHECK(load_viseme_csv(dir.path / "v.csv", 12).unit_ids == v.unit_ids);
  std::ofstream(dir.path / "bad.csv") << "0,0\n2,5\n";
  CHECK_THROWS_AS(load_viseme_csv(dir.path / "bad.csv", 12), FormatError);
}

TEST_CASE("frontend kind names") {
  for (auto k : {FrontendKind::kOracleAudio, FrontendKind::kOracleVideo, FrontendKind::kPrecomputed}) {
    CHECK(parse_frontend_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_frontend_kind("hubert"), InvalidArgument);
}
