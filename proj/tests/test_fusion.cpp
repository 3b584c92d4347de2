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

#include <algorithm>
#include <numeric>

#include "avsep/errors.hpp"
#include "avsep/fusion.hpp"
#include "gradcheck.hpp"

using namespace avsep;
using namespace avsep::fusion;
using namespace avsep::testing;

namespace {

AttentionWeights random_weights(int d, std::mt19937_64& rng) {
  return {random_mat(d, d, rng), random_mat(d, d, rng), random_mat(d, d, rng)};
}

// Textbook attention with explicit loops.
Eigen::MatrixXd naive_attention(const Eigen::MatrixXd& query, const Eigen::MatrixXd& kv, const AttentionWeights& w) {
  const Eigen::MatrixXd q = query * w.w_q, k = kv * w.w_k, v = kv * w.w_v;
  const double d = static_cast<double>(query.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(query.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> e(static_cast<std::size_t>(k.rows()));
    double z = 0.0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      e[static_cast<std::size_t>(j)] = std::exp(dot / std::sqrt(d));
      z += e[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index j = 0; j < k.rows(); ++j) out.row(i) += e[static_cast<std::size_t>(j)] / z * v.row(j);
  }
  return out;
}

}  // namespace

TEST_CASE("cross_modal_attention matches a naive oracle") {
  std::mt19937_64 rng(1);
  for (auto [tq, tkv] : {std::pair{3, 5}, std::pair{1, 1}, std::pair{7, 2}}) {
    Mat q = random_mat(tq, 4, rng), kv = random_mat(tkv, 4, rng);
    auto w = random_weights(4, rng);
    auto r = cross_modal_attention(q, kv, w);
    CHECK(r.output.rows() == tq);
    CHECK((r.output - naive_attention(q, kv, w)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.weights.array() >= 0.0).all());
    for (Eigen::Index i = 0; i < r.weights.rows(); ++i) CHECK(std::abs(r.weights.row(i).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("single key gives the projected value row") {
  std::mt19937_64 rng(2);
  Mat q = random_mat(4, 3, rng), kv = random_mat(1, 3, rng);
  auto w = random_weights(3, rng);
  auto r = cross_modal_attention(q, kv, w);
  const Eigen::RowVectorXd expect = kv.row(0) * w.w_v;
  for (Eigen::Index i = 0; i < 4; ++i) CHECK((r.output.row(i) - expect).norm() < 1e-12);
}

TEST_CASE("attention output is invariant to joint key/value permutation") {
  std::mt19937_64 rng(3);
  Mat q = random_mat(5, 4, rng), kv = random_mat(6, 4, rng);
  auto w = random_weights(4, rng);
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat shuffled(6, 4);
    for (int i = 0; i < 6; ++i) shuffled.row(i) = kv.row(perm[static_cast<std::size_t>(i)]);
    auto a = cross_modal_attention(q, kv, w).output;
    auto b = cross_modal_attention(q, shuffled, w).output;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention rejects mismatched dimensions") {
  std::mt19937_64 rng(4);
  auto w = random_weights(4, rng);
  CHECK_THROWS_AS(cross_modal_attention(random_mat(3, 4, rng), random_mat(5, 3, rng), w), InvalidArgument);
  CHECK_THROWS_AS(cross_modal_attention(random_mat(3, 3, rng), random_mat(5, 3, rng), w), InvalidArgument);
}

TEST_CASE("cross_modal_attention gradient on a 3x4 / 5x4 instance") {
  std::mt19937_64 rng(5);
  Mat q = random_mat(3, 4, rng), kv = random_mat(5, 4, rng);
  Mat wq = random_mat(4, 4, rng), wk = random_mat(4, 4, rng), wv = random_mat(4, 4, rng);
  auto rep = check_gradients(
      [](Tape&, const std::vector<Var>& x) { return probe(cross_modal_attention(x[0], x[1], x[2], x[3], x[4])); },
      {&q, &kv, &wq, &wk, &wv}, {}, 64);
  CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
}

TEST_CASE("fusion layer gradients for every strategy and dominance") {
  for (Strategy s : {Strategy::kCrossAttention, Strategy::kConcatenation, Strategy::kSummation}) {
    for (Dominance d : {Dominance{Modality::kVideo, Modality::kAudio}, Dominance{Modality::kAudio, Modality::kVideo}}) {
      std::mt19937_64 rng(6);
      ag::ParamSet<double> ps;
      FusionLayer<double> layer(ps, "f", 4, s, d, rng);
      Mat a = random_mat(6, 4, rng), v = random_mat(6, 4, rng);
      auto rep = check_gradients(
          [&](Tape& t, const std::vector<Var>& x) { return probe(layer(t, ps, x[0], x[1], 2)); }, {&a, &v}, {&ps},
          64);
      CHECK_MESSAGE(rep.worst < 1e-4, to_string(s) << " " << to_string(d) << " " << rep.where);
    }
  }
}

TEST_CASE("summation with a zero conditional projection returns the dominant feature") {
  std::mt19937_64 rng(7);
  ag::ParamSet<double> ps;
  FusionLayer<double> layer(ps, "f", 3, Strategy::kSummation, {Modality::kVideo, Modality::kAudio}, rng);
  ps.get("f.w_sum").value.setZero();
  Tape t;
  Mat a = random_mat(4, 3, rng), v = random_mat(4, 3, rng);
  auto out = layer(t, ps, t.constant(a), t.constant(v)).value();
  CHECK((out - a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("concatenation projects back to the model width") {
  std::mt19937_64 rng(8);
  ag::ParamSet<double> ps;
  FusionLayer<double> layer(ps, "f", 5, Strategy::kConcatenation, {Modality::kAudio, Modality::kVideo}, rng);
  CHECK(ps.get("f.w_cat").value.rows() == 10);
  Tape t;
  auto out = layer(t, ps, t.constant(random_mat(7, 5, rng)), t.constant(random_mat(7, 5, rng)));
  CHECK(out.rows() == 7);
  CHECK(out.cols() == 5);
  CHECK_THROWS_AS(layer(t, ps, t.constant(random_mat(7, 5, rng)), t.constant(random_mat(6, 5, rng))),
                  InvalidArgument);
}

TEST_CASE("cross-attention accepts unequal lengths and keeps the query length") {
  std::mt19937_64 rng(9);
  ag::ParamSet<double> ps;
  FusionLayer<double> layer(ps, "f", 4, Strategy::kCrossAttention, {Modality::kAudio, Modality::kVideo}, rng);
  Tape t;
  auto out = layer(t, ps, t.constant(random_mat(8, 4, rng)), t.constant(random_mat(3, 4, rng)));
  CHECK(out.rows() == 8);
}

TEST_CASE("both dominance orders are distinct on random input") {
  std::mt19937_64 data_rng(10);
  Mat a = random_mat(6, 4, data_rng), v = random_mat(6, 4, data_rng);
  std::vector<Mat> outs;
  for (Dominance d : {Dominance{Modality::kVideo, Modality::kAudio}, Dominance{Modality::kAudio, Modality::kVideo}}) {
    std::mt19937_64 rng(11);
    ag::ParamSet<double> ps;
    FusionLayer<double> layer(ps, "f", 4, Strategy::kCrossAttention, d, rng);
    Tape t;
    outs.push_back(layer(t, ps, t.constant(a), t.constant(v)).value());
  }
  CHECK((outs[0] - outs[1]).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("dominance parsing and validation") {
  CHECK(parse_dominance("video/audio") == Dominance{Modality::kVideo, Modality::kAudio});
  CHECK(to_string(parse_dominance("audio/video")) == "audio/video");
  CHECK_THROWS_AS(parse_dominance("audio/audio"), InvalidArgument);
  CHECK_THROWS_AS(parse_dominance("video"), InvalidArgument);
  CHECK_THROWS_AS(parse_strategy("gating"), InvalidArgument);
  for (Strategy s : {Strategy::kCrossAttention, Strategy::kConcatenation, Strategy::kSummation}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  std::mt19937_64 rng(1);
  ag::ParamSet<double> ps;
  CHECK_THROWS_AS(FusionLayer<double>(ps, "f", 4, Strategy::kSummation, {Modality::kVideo, Modality::kVideo}, rng),
                  InvalidArgument);
}
