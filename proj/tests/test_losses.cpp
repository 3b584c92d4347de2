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
#include <limits>
#include <numbers>

#include "avsep/errors.hpp"
#include "avsep/losses.hpp"
#include "gradcheck.hpp"

using namespace avsep;
using namespace avsep::testing;

namespace {

// Loop-level SI-SNR loss written out term by term.
double brute_si_snr_loss(const std::vector<double>& u_in, const std::vector<double>& e_in, double eps) {
  const std::size_t n = u_in.size();
  double mu = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += u_in[i] / n;
    me += e_in[i] / n;
  }
  std::vector<double> u(n), e(n);
  double dot = 0.0, uu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = u_in[i] - mu;
    e[i] = e_in[i] - me;
    dot += u[i] * e[i];
    uu += u[i] * u[i];
  }
  double st = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = dot / (uu + eps) * u[i];
    st += s * s;
    noise += (e[i] - s) * (e[i] - s);
  }
  return -10.0 * std::log10((st + eps) / (noise + eps));
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::VectorXd tone(double hz, int n, double phase = 0.0) {
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out(i) = std::sqrt(2.0) * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0 + phase);
  return out;
}

}  // namespace

TEST_CASE("worked SI-SNR value") {
  const double oracle = brute_si_snr_loss({1, -1, 0}, {1, 0, -1}, 1e-8);
  // s_t = u / 2, noise = e - u / 2; power ratio 1/3.
  CHECK(oracle == doctest::Approx(10.0 * std::log10(3.0)).epsilon(1e-6));
  CHECK(oracle == doctest::Approx(4.771).epsilon(1e-3 / 4.771));
  const double got = si_snr_loss(vec({1, -1, 0}), vec({1, 0, -1}));
  CHECK(std::abs(got - oracle) < 1e-9);
  CHECK(std::abs(got - 4.771) < 1e-3);
}

TEST_CASE("SI-SNR loss agrees with the brute-force oracle on random signals") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd u = random_mat(50, 1, rng).col(0), e = random_mat(50, 1, rng).col(0);
    std::vector<double> uv(u.data(), u.data() + 50), ev(e.data(), e.data() + 50);
    CHECK(std::abs(si_snr_loss(u, e) - brute_si_snr_loss(uv, ev, 1e-8)) < 1e-9);
  }
}

TEST_CASE("SI-SNR is scale invariant in both arguments") {
  std::mt19937_64 rng(2);
  Eigen::VectorXd u = random_mat(400, 1, rng).col(0), e = u + 0.5 * random_mat(400, 1, rng).col(0);
  const double base = si_snr_loss(u, e);
  for (double a : {0.1, 3.0, 250.0}) {
    CHECK(std::abs(si_snr_loss(u, a * e) - base) < 1e-6);
    CHECK(std::abs(si_snr_loss(a * u, e) - base) < 1e-6);
  }
  // eps breaks invariance once the scaled energies approach it.
  CHECK(std::abs(si_snr_loss(u, 1e-4 * e) - base) > 1e-3);
}

TEST_CASE("orthogonal estimate gives a large positive loss") {
  Eigen::VectorXd u = vec({1, -1, 0, 0}), e = vec({0, 0, 1, -1});
  const double expect = -10.0 * std::log10(1e-8 / (e.squaredNorm() + 1e-8));
  CHECK(si_snr_loss(u, e) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(si_snr_loss(u, e) > 70.0);
}

TEST_CASE("SI-SNR errors") {
  CHECK_THROWS_AS(si_snr_loss(vec({1, 2}), vec({1, 2, 3})), InvalidArgument);
  CHECK_THROWS_AS(si_snr_loss(vec({0, 0, 0}), vec({1, 2, 3})), DegenerateInput);
  CHECK_THROWS_AS(si_snr_loss(vec({2, 2, 2}), vec({1, 2, 3})), DegenerateInput);
}

TEST_CASE("differentiable SI-SNR matches the value form and finite differences") {
  std::mt19937_64 rng(3);
  Mat u = random_mat(1, 30, rng), e = random_mat(1, 30, rng);
  Tape t;
  auto l = si_snr_loss(t.constant(u), t.constant(e));
  CHECK(std::abs(l.scalar() - si_snr_loss(Eigen::VectorXd(u.row(0).transpose()), Eigen::VectorXd(e.row(0).transpose()))) <
        1e-10);
  auto rep = check_gradients(
      [](Tape&, const std::vector<Var>& x) { return si_snr_loss(x[0], x[1]); }, {&u, &e}, {}, 30);
  CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
}

TEST_CASE("matching hinge arithmetic") {
  CHECK(matching_hinge(0.3, 1.0, 0.5) == 0.0);
  CHECK(matching_hinge(0.9, 0.2, 0.5) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(std::abs(matching_hinge(0.9, 0.2, 0.5) - 1.2) <= 2.0 * std::numeric_limits<double>::epsilon());
}

TEST_CASE("matching loss with identical lip and audio embeddings") {
  std::mt19937_64 rng(4);
  EmbeddingSeq fv{random_mat(6, 10, rng)};
  EmbeddingSeq neg{random_mat(6, 10, rng)};
  auto m = matching_loss(fv, fv, neg, 0.5);
  CHECK(m.d_pos == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.loss == doctest::Approx(std::max(0.5 - m.d_neg, 0.0)));
}

TEST_CASE("matching loss oracle, non-negativity and scale invariance") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    EmbeddingSeq fv{random_mat(5, 8, rng)}, fa{random_mat(5, 8, rng)}, fn{random_mat(5, 8, rng)};
    const double margin = 0.1 * trial;
    auto m = matching_loss(fv, fa, fn, margin);
    double dp = 0.0, dn = 0.0;
    for (int t = 0; t < 8; ++t) {
      const Eigen::VectorXd v = fv.data.col(t).normalized();
      dp += (v - fa.data.col(t).normalized()).norm() / 8.0;
      dn += (v - fn.data.col(t).normalized()).norm() / 8.0;
    }
    CHECK(m.d_pos == doctest::Approx(dp).epsilon(1e-12));
    CHECK(m.d_neg == doctest::Approx(dn).epsilon(1e-12));
    CHECK(m.loss >= 0.0);
    CHECK(m.loss == doctest::Approx(std::max(dp - dn + margin, 0.0)).epsilon(1e-12));
    if (dn >= dp + margin) CHECK(m.loss == 0.0);
    EmbeddingSeq fv2{fv.data * 7.5}, fa2{fa.data * 0.02}, fn2{fn.data * 3.0};
    CHECK(matching_loss(fv2, fa2, fn2, margin).loss == doctest::Approx(m.loss).epsilon(1e-10));
  }
}

TEST_CASE("matching loss indexes audio frames by the rate ratio") {
  CHECK(align_frames(3, 25.0, 6, 50.0) == std::vector<int>{0, 2, 4});
  CHECK(align_frames(4, 25.0, 4, 25.0) == std::vector<int>{0, 1, 2, 3});
  CHECK(align_frames(4, 50.0, 2, 25.0) == std::vector<int>{0, 0, 1, 1});
  CHECK_THROWS_AS(align_frames(4, 25.0, 4, 30.0), InvalidArgument);

  std::mt19937_64 rng(6);
  EmbeddingSeq fv{random_mat(4, 3, rng)};
  EmbeddingSeq fa{random_mat(4, 6, rng), 50.0}, fn{random_mat(4, 6, rng), 50.0};
  EmbeddingSeq fa_even{Eigen::MatrixXd(4, 3)}, fn_even{Eigen::MatrixXd(4, 3)};
  for (int t = 0; t < 3; ++t) {
    fa_even.data.col(t) = fa.data.col(2 * t);
    fn_even.data.col(t) = fn.data.col(2 * t);
  }
  CHECK(matching_loss(fv, fa, fn, 0.5).loss == doctest::Approx(matching_loss(fv, fa_even, fn_even, 0.5).loss));
  EmbeddingSeq odd{random_mat(4, 6, rng), 30.0};
  CHECK_THROWS_AS(matching_loss(fv, odd, odd, 0.5), InvalidArgument);
}

TEST_CASE("differentiable matching loss gradients") {
  std::mt19937_64 rng(7);
  Mat fv = random_mat(4, 5, rng), fa = random_mat(8, 5, rng), fn = random_mat(8, 5, rng);
  // Margin large enough that the hinge is active.
  auto rep = check_gradients(
      [](Tape&, const std::vector<Var>& x) { return matching_loss(x[0], 25.0, x[1], x[2], 50.0, 2.0); },
      {&fv, &fa, &fn}, {}, 40);
  CHECK_MESSAGE(rep.worst < 1e-4, rep.where);
}

TEST_CASE("total loss arithmetic and finiteness") {
  LossWeights w;
  CHECK(total_loss(2.0, 1.0, 0.5, w) == doctest::Approx(3.5));
  w.lambda = 0.0;
  CHECK(total_loss(2.0, 1.0, 0.5, w) == doctest::Approx(3.0));
  CHECK_THROWS_AS(total_loss(std::nan(""), 1.0, 0.5, w), NumericError);
  CHECK_THROWS_AS(total_loss(1.0, std::numeric_limits<double>::infinity(), 0.5, w), NumericError);
  LossWeights bad;
  bad.margin = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = {};
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK(LossWeights{}.lambda == 1.0);
  CHECK(LossWeights{}.margin == 0.5);
}

TEST_CASE("improvement metrics") {
  std::mt19937_64 rng(8);
  Eigen::VectorXd ref = random_mat(500, 1, rng).col(0), mix = ref + random_mat(500, 1, rng).col(0);
  CHECK(si_snri(mix, mix, ref) == 0.0);
  CHECK(sdri(mix, mix, ref) == 0.0);
  CHECK(si_snri(mix, ref, ref) == 30.0);
  CHECK(sdri(mix, ref, ref) == 30.0);

  const int n = 16000;
  Eigen::VectorXd target = tone(440.0, n), interferer = tone(1250.0, n, 0.3);
  Eigen::VectorXd est = target + 0.1 * interferer;
  Eigen::VectorXd sum = target + interferer;
  std::vector<double> tv(target.data(), target.data() + n), ev(est.data(), est.data() + n),
      mv(sum.data(), sum.data() + n);
  const double oracle = brute_si_snr_loss(tv, mv, 1e-8) - brute_si_snr_loss(tv, ev, 1e-8);
  CHECK(std::abs(si_snri(sum, est, target) - oracle) < 1e-9);
  CHECK(std::abs(si_snri(sum, est, target) - 20.0) < 0.5);
}
