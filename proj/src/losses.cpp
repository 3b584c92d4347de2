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

#include "avsep/losses.hpp"

#include <algorithm>

namespace avsep {

void LossWeights::validate() const {
  AVSEP_REQUIRE(lambda >= 0.0, InvalidArgument, "loss weights: lambda must be >= 0");
  AVSEP_REQUIRE(margin >= 0.0, InvalidArgument, "loss weights: margin must be >= 0");
  AVSEP_REQUIRE(epsilon > 0.0, InvalidArgument, "loss weights: epsilon must be > 0");
  AVSEP_REQUIRE(clamp_db > 0.0, InvalidArgument, "loss weights: clamp_db must be > 0");
}

double si_snr_loss(const Eigen::VectorXd& target, const Eigen::VectorXd& estimate, double eps) {
  AVSEP_REQUIRE(target.size() == estimate.size(), InvalidArgument, "si_snr_loss: length mismatch");
  const Eigen::VectorXd u = target.array() - target.mean();
  const Eigen::VectorXd uh = estimate.array() - estimate.mean();
  AVSEP_REQUIRE(u.squaredNorm() > 0.0, DegenerateInput, "si_snr_loss: zero-power target");
  const Eigen::VectorXd s = (uh.dot(u) / (u.squaredNorm() + eps)) * u;
  const double num = s.squaredNorm() + eps;
  const double den = (uh - s).squaredNorm() + eps;
  return -10.0 * std::log10(num / den);
}

double si_snr_loss(const Waveform& target, const Waveform& estimate, double eps) {
  return si_snr_loss(target.samples, estimate.samples, eps);
}

double si_snr(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate, double eps) {
  return -si_snr_loss(reference, estimate, eps);
}

double sdr(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate, double eps) {
  AVSEP_REQUIRE(reference.size() == estimate.size(), InvalidArgument, "sdr: length mismatch");
  const Eigen::VectorXd r = reference.array() - reference.mean();
  const Eigen::VectorXd e = estimate.array() - estimate.mean();
  AVSEP_REQUIRE(r.squaredNorm() > 0.0, DegenerateInput, "sdr: zero-power reference");
  return 10.0 * std::log10(r.squaredNorm() / ((r - e).squaredNorm() + eps));
}

namespace {
double clamp_db(double v, double cap) { return std::clamp(v, -cap, cap); }
}  // namespace

double si_snri(const Eigen::VectorXd& mixture, const Eigen::VectorXd& estimate,
               const Eigen::VectorXd& reference, const LossWeights& w) {
  AVSEP_REQUIRE(mixture.size() == estimate.size() && estimate.size() == reference.size(),
                InvalidArgument, "si_snri: length mismatch");
  return clamp_db(si_snr(reference, estimate, w.epsilon) - si_snr(reference, mixture, w.epsilon),
                  w.clamp_db);
}

double sdri(const Eigen::VectorXd& mixture, const Eigen::VectorXd& estimate,
            const Eigen::VectorXd& reference, const LossWeights& w) {
  AVSEP_REQUIRE(mixture.size() == estimate.size() && estimate.size() == reference.size(),
                InvalidArgument, "sdri: length mismatch");
  return clamp_db(sdr(reference, estimate, w.epsilon) - sdr(reference, mixture, w.epsilon),
                  w.clamp_db);
}

std::vector<int> align_frames(Eigen::Index lip_frames, double lip_rate, Eigen::Index audio_frames,
                              double audio_rate) {
  AVSEP_REQUIRE(lip_rate > 0.0 && audio_rate > 0.0, InvalidArgument,
                "matching_loss: frame rates must be positive");
  AVSEP_REQUIRE(lip_frames >= 1 && audio_frames >= 1, InvalidArgument,
                "matching_loss: empty embedding sequence");
  const double up = audio_rate / lip_rate;
  const double down = lip_rate / audio_rate;
  const bool integral = std::abs(up - std::round(up)) < 1e-9 || std::abs(down - std::round(down)) < 1e-9;
  AVSEP_REQUIRE(integral, InvalidArgument,
                "matching_loss: audio and lip frame rates are not integer multiples");
  std::vector<int> idx;
  for (Eigen::Index t = 0; t < lip_frames; ++t) {
    const auto a = static_cast<Eigen::Index>(std::floor(t * up + 1e-9));
    if (a >= audio_frames) break;
    idx.push_back(static_cast<int>(a));
  }
  return idx;
}

MatchingTerms matching_loss(const EmbeddingSeq& f_v, const EmbeddingSeq& f_a,
                            const EmbeddingSeq& f_a_neg, double margin) {
  AVSEP_REQUIRE(f_a.frame_rate == f_a_neg.frame_rate, InvalidArgument,
                "matching_loss: positive and negative audio rates differ");
  ag::Tape<double> tape;
  MatchingTerms out;
  auto l = matching_loss(tape.constant(f_v.data.transpose()), f_v.frame_rate,
                         tape.constant(f_a.data.transpose()), tape.constant(f_a_neg.data.transpose()),
                         f_a.frame_rate, margin, &out.d_pos, &out.d_neg);
  out.loss = l.scalar();
  return out;
}

double total_loss(double l_per, double l_syn, double l_mat, const LossWeights& w) {
  AVSEP_REQUIRE(std::isfinite(l_per) && std::isfinite(l_syn) && std::isfinite(l_mat), NumericError,
                "total_loss: non-finite loss component");
  return l_per + l_syn + w.lambda * l_mat;
}

}  // namespace avsep
