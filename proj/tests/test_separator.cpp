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

#include "avsep/errors.hpp"
#include "avsep/losses.hpp"
#include "avsep/separator.hpp"
#include "gradcheck.hpp"

using namespace avsep;
using namespace avsep::testing;

namespace {

SeparatorConfig tiny_config() {
  SeparatorConfig c;
  c.n_channels = 4;
  c.chunk_len = 4;
  c.n_intra = 1;
  c.n_inter = 1;
  c.n_repeats = 1;
  c.encoder_kernel = 4;
  c.encoder_stride = 2;
  c.n_heads = 2;
  c.ff_dim = 8;
  c.video_dim = 3;
  return c;
}

}  // namespace

TEST_CASE("encoder length formula and zero input") {
  auto cfg = SeparatorConfig::toy();
  Separator<double> sep(cfg, 1);
  CHECK(sep.encoded_length(32000) == 3999);
  CHECK_THROWS_AS(sep.encoded_length(15), InvalidArgument);
  Tape t;
  t.set_grad_enabled(false);
  auto z = sep.encode(t, t.constant(Mat::Zero(1, 32000)));
  CHECK(z.rows() == 3999);
  CHECK(z.cols() == 64);
  CHECK(z.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder is shift covariant by one stride") {
  auto cfg = tiny_config();
  Separator<double> sep(cfg, 2);
  std::mt19937_64 rng(3);
  Mat x = random_mat(1, 64, rng);
  Mat shifted = Mat::Zero(1, 64);
  shifted.rightCols(64 - cfg.encoder_stride) = x.leftCols(64 - cfg.encoder_stride);
  Tape t;
  t.set_grad_enabled(false);
  auto a = sep.encode(t, t.constant(x)).value();
  auto b = sep.encode(t, t.constant(shifted)).value();
  for (Eigen::Index r = 1; r + 1 < a.rows(); ++r) CHECK((b.row(r + 1) - a.row(r)).norm() < 1e-12);
}

TEST_CASE("align_video replicates each chunk and preserves constants") {
  auto cfg = tiny_config();
  Separator<double> sep(cfg, 4);
  std::mt19937_64 rng(5);
  Tape t;
  t.set_grad_enabled(false);
  auto out = sep.align_video(t, t.constant(random_mat(5, 3, rng)), 7).value();
  REQUIRE(out.rows() == 7 * cfg.chunk_len);
  CHECK(out.cols() == cfg.n_channels);
  for (int s = 0; s < 7; ++s) {
    for (int k = 1; k < cfg.chunk_len; ++k) CHECK(out.row(s * cfg.chunk_len + k) == out.row(s * cfg.chunk_len));
  }
  Mat constant(5, 3);
  constant.rowwise() = Eigen::RowVector3d(0.2, -1.0, 0.7);
  auto c = sep.align_video(t, t.constant(constant), 3).value();
  for (Eigen::Index r = 1; r < c.rows(); ++r) CHECK((c.row(r) - c.row(0)).norm() < 1e-12);
  CHECK_THROWS_AS(sep.align_video(t, t.constant(Mat::Zero(5, 4)), 3), InvalidArgument);
}

TEST_CASE("dual-path blocks keep shape and process chunks independently") {
  auto cfg = tiny_config();
  Separator<double> sep(cfg, 6);
  std::mt19937_64 rng(7);
  const auto plan = signal::ChunkPlan::make(10, cfg.chunk_len);  // 4 chunks of 4
  REQUIRE(plan.num_chunks == 4);
  Mat x = random_mat(16, 4, rng);
  Tape t;
  t.set_grad_enabled(false);
  auto intra = sep.dual_path_block(t, t.constant(x), plan, 0, DualPathKind::kIntra).value();
  auto inter = sep.dual_path_block(t, t.constant(x), plan, 0, DualPathKind::kInter).value();
  CHECK(intra.rows() == 16);
  CHECK(inter.rows() == 16);

  // Intra: chunk s alone, as a one-chunk plan, gives the same rows.
  const auto single = signal::ChunkPlan::make(4, cfg.chunk_len);
  for (int s = 0; s < 4; ++s) {
    Mat chunk_rows = x.middleRows(4 * s, 4);
    auto alone = sep.dual_path_block(t, t.constant(chunk_rows), single, 0, DualPathKind::kIntra).value();
    CHECK((alone - intra.middleRows(4 * s, 4)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Inter: perturbing position k of one chunk only moves position k rows.
  Mat y = x;
  // A constant shift would vanish under LayerNorm; use a random one.
  y.row(4 * 2 + 1) += random_mat(1, 4, rng);
  auto inter_y = sep.dual_path_block(t, t.constant(y), plan, 0, DualPathKind::kInter).value();
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < 4; ++k) {
      const double moved = (inter_y.row(4 * s + k) - inter.row(4 * s + k)).norm();
      if (k == 1) {
        CHECK(moved > 1e-9);
      } else {
        CHECK(moved < 1e-12);
      }
    }
  }
}

TEST_CASE("intra block on one chunk is a plain transformer stack") {
  auto cfg = tiny_config();
  Separator<double> sep(cfg, 8);
  std::mt19937_64 rng(9);
  Mat x = random_mat(4, 4, rng);
  ag::ParamSet<double> ps;
  std::mt19937_64 unused(0);
  nn::TransformerLayer<double> layer(ps, "separator.r0.intra0", 4, 2, 8, unused);
  for (auto& p : ps) p.value = sep.params().get(p.name).value;
  Tape t;
  t.set_grad_enabled(false);
  Mat with_pos = x + nn::sinusoidal_positions(4, 4);
  auto expect = layer(t, ps, t.constant(with_pos), 1).value();
  auto got = sep.dual_path_block(t, t.constant(x), signal::ChunkPlan::make(4, 4), 0, DualPathKind::kIntra).value();
  CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dual-path block gradients") {
  auto cfg = tiny_config();
  for (DualPathKind kind : {DualPathKind::kIntra, DualPathKind::kInter}) {
    Separator<double> sep(cfg, 10);
    std::mt19937_64 rng(11);
    const auto plan = signal::ChunkPlan::make(7, cfg.chunk_len);
    Mat x = random_mat(static_cast<Eigen::Index>(plan.num_chunks) * plan.chunk_len, 4, rng);
    auto rep = check_gradients(
        [&](Tape& t, const std::vector<Var>& v) { return probe(sep.dual_path_block(t, v[0], plan, 0, kind)); },
        {&x}, {&sep.params()}, 16);
    CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
  }
}

TEST_CASE("separator end to end: gradients reach every parameter and match finite differences") {
  auto cfg = tiny_config();
  Separator<double> sep(cfg, 12);
  std::mt19937_64 rng(13);
  Mat x = random_mat(1, 40, rng), s = random_mat(1, 40, rng), v = random_mat(2, 3, rng);
  auto loss = [&](Tape& t, const std::vector<Var>& in) {
    auto tr = sep.forward(t, in[0], t.constant(v));
    return si_snr_loss(t.constant(s), tr.output);
  };
  auto rep = check_gradients(loss, {&x}, {&sep.params()}, 12);
  CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
  for (const auto& p : sep.params()) CHECK_MESSAGE(p.grad.cwiseAbs().maxCoeff() > 0.0, p.name);
}

TEST_CASE("separate keeps length, bounds the mask and is deterministic") {
  auto cfg = SeparatorConfig::toy();
  Separator<double> sep(cfg, 14);
  std::mt19937_64 rng(15);
  Waveform x(random_mat(32000, 1, rng).col(0) * 0.1);
  EmbeddingSeq fv{random_mat(64, 50, rng)};
  auto a = separate(x, fv, sep);
  auto b = separate(x, fv, sep);
  CHECK(a.size() == 32000);
  CHECK((a.samples.array() == b.samples.array()).all());

  Tape t;
  t.set_grad_enabled(false);
  auto tr = sep.forward(t, t.constant(x.samples.transpose()), t.constant(fv.data.transpose()));
  CHECK(tr.mask.value().minCoeff() >= 0.0);
  CHECK(tr.mask.value().maxCoeff() <= 1.0);

  EmbeddingSeq short_fv{random_mat(64, 40, rng)};
  CHECK_THROWS_AS(separate(x, short_fv, sep), InvalidArgument);
  EmbeddingSeq near_fv{random_mat(64, 51, rng)};
  CHECK_NOTHROW(separate(x, near_fv, sep));
}

TEST_CASE("unit mask with a pseudo-inverse decoder reconstructs the input") {
  for (int kernel : {8, 16}) {
    SeparatorConfig cfg = tiny_config();
    cfg.encoder_kernel = kernel;
    cfg.encoder_stride = 8;
    cfg.n_channels = 2 * kernel;
    cfg.n_heads = 2;
    Separator<double> sep(cfg, 16);
    Mat enc(kernel, 2 * kernel);
    enc << Mat::Identity(kernel, kernel), -Mat::Identity(kernel, kernel);
    Mat dec = enc.transpose() * (8.0 / kernel);
    sep.params().get("separator.encoder.weight").value = enc;
    sep.params().get("separator.decoder.weight").value = dec;
    sep.params().get("separator.mask.weight").value.setZero();
    sep.params().get("separator.mask.bias").value.setConstant(60.0);
    std::mt19937_64 rng(17);
    Waveform x(random_mat(800, 1, rng).col(0));
    EmbeddingSeq fv{random_mat(3, 2, rng)};
    auto y = separate(x, fv, sep);
    const int edge = kernel - 8;
    const Eigen::Index n = 800 - 2 * edge;
    CHECK((y.samples.segment(edge, n) - x.samples.segment(edge, n)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("default separator fusion is video query over audio keys") {
  const auto d = SeparatorConfig::paper().dominance;
  CHECK(d.query == fusion::Modality::kVideo);
  CHECK(d.kv == fusion::Modality::kAudio);
  CHECK(SeparatorConfig::toy().dominance == d);
  CHECK(SeparatorConfig::paper().fusion == fusion::Strategy::kCrossAttention);
}

TEST_CASE("separator config validation") {
  auto c = tiny_config();
  c.chunk_len = 5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = tiny_config();
  c.encoder_stride = 8;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = tiny_config();
  c.n_channels = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  const auto p = SeparatorConfig::paper();
  CHECK(p.n_channels == 256);
  CHECK(p.chunk_len == 160);
  CHECK(p.n_intra == 8);
  CHECK(p.n_inter == 7);
  CHECK(p.n_repeats == 2);
}
