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

#include <cmath>
#include <memory>
#include <vector>

#include "avsep/autograd.hpp"
#include "avsep/types.hpp"

namespace avsep {

struct LossWeights {
  double lambda = 1.0;
  double margin = 0.5;
  double epsilon = 1e-8;
  double clamp_db = 30.0;

  void validate() const;
};

/// Negative SI-SNR in dB (lower is better). Both signals are mean-removed.
double si_snr_loss(const Waveform& target, const Waveform& estimate, double eps = 1e-8);
double si_snr_loss(const Eigen::VectorXd& target, const Eigen::VectorXd& estimate, double eps = 1e-8);

/// SI-SNR in dB, i.e. -si_snr_loss.
double si_snr(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate, double eps = 1e-8);
/// Plain SDR after mean removal: 10 log10(|r|^2 / (|r - e|^2 + eps)).
double sdr(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate, double eps = 1e-8);

/// Improvements over the unprocessed mixture, clamped to +-clamp_db.
double si_snri(const Eigen::VectorXd& mixture, const Eigen::VectorXd& estimate,
               const Eigen::VectorXd& reference, const LossWeights& w = {});
double sdri(const Eigen::VectorXd& mixture, const Eigen::VectorXd& estimate,
            const Eigen::VectorXd& reference, const LossWeights& w = {});

/// max(d_pos - d_neg + margin, 0).
inline double matching_hinge(double d_pos, double d_neg, double margin) {
  return std::max(d_pos - d_neg + margin, 0.0);
}

/// For each lip frame, the audio frame it is compared with. Rates must be
/// integer multiples of one another.
std::vector<int> align_frames(Eigen::Index lip_frames, double lip_rate, Eigen::Index audio_frames,
                              double audio_rate);

struct MatchingTerms {
  double d_pos = 0.0;
  double d_neg = 0.0;
  double loss = 0.0;
};

/// Contrastive semantic matching on [dim x frames] sequences.
MatchingTerms matching_loss(const EmbeddingSeq& f_v, const EmbeddingSeq& f_a,
                            const EmbeddingSeq& f_a_neg, double margin);

/// L_per + L_syn + lambda * L_mat; throws NumericError on non-finite input.
double total_loss(double l_per, double l_syn, double l_mat, const LossWeights& w);

// ---------------------------------------------------------------------------
// Differentiable forms.

/// Fused negative SI-SNR of two equal-size tensors (flattened), [1 x 1].
template <typename T>
ag::Var<T> si_snr_loss(ag::Var<T> target, ag::Var<T> estimate, T eps = T(1e-8)) {
  AVSEP_REQUIRE(target.value().size() == estimate.value().size(), InvalidArgument,
                "si_snr_loss: length mismatch");
  ag::Tape<T>* t = target.tape();
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const Eigen::Index n = target.value().size();
  Vec b = Eigen::Map<const Vec>(target.value().data(), n);
  Vec a = Eigen::Map<const Vec>(estimate.value().data(), n);
  b.array() -= b.mean();
  a.array() -= a.mean();
  AVSEP_REQUIRE(b.squaredNorm() > T(0), DegenerateInput, "si_snr_loss: zero-power target");
  const T bb = b.squaredNorm() + eps;
  const T alpha = a.dot(b) / bb;
  Vec s = alpha * b;
  Vec e = a - s;
  const T num = s.squaredNorm() + eps;
  const T den = e.squaredNorm() + eps;
  const T c = T(10) / std::log(T(10));
  ag::Matrix<T> out(1, 1);
  out(0, 0) = c * (std::log(den) - std::log(num));

  struct Saved {
    Vec a, b, s, e;
    T bb, alpha, num, den;
  };
  auto sv = std::make_shared<Saved>(Saved{std::move(a), std::move(b), std::move(s), std::move(e), bb,
                                          alpha, num, den});
  return t->record(std::move(out), {target, estimate}, [t, target, estimate, sv, c](const ag::Matrix<T>& g) {
    const Vec gvec = T(2) * sv->e / sv->den + T(2) * sv->s / sv->num;
    const T gb_dot = gvec.dot(sv->b);
    const T scale = c * g(0, 0);
    if (estimate.requires_grad()) {
      Vec ga = scale * (T(2) * sv->e / sv->den - gb_dot * sv->b / sv->bb);
      ga.array() -= ga.mean();
      t->accumulate(estimate.id(), Eigen::Map<const ag::Matrix<T>>(ga.data(), estimate.rows(), estimate.cols()));
    }
    if (target.requires_grad()) {
      const T ab = sv->alpha * sv->bb;  // <a, b>
      Vec gbv = scale * (-gb_dot * (sv->a / sv->bb - T(2) * ab * sv->b / (sv->bb * sv->bb)) -
                         sv->alpha * gvec);
      gbv.array() -= gbv.mean();
      t->accumulate(target.id(), Eigen::Map<const ag::Matrix<T>>(gbv.data(), target.rows(), target.cols()));
    }
  });
}

/// Matching loss on time-major [frames x dim] sequences; returns the loss
/// and, through the out-parameters, the two frame-mean distances.
template <typename T>
ag::Var<T> matching_loss(ag::Var<T> f_v, double lip_rate, ag::Var<T> f_a, ag::Var<T> f_a_neg,
                         double audio_rate, T margin, T* d_pos_out = nullptr,
                         T* d_neg_out = nullptr) {
  AVSEP_REQUIRE(f_a.rows() == f_a_neg.rows() && f_a.cols() == f_a_neg.cols(), InvalidArgument,
                "matching_loss: positive and negative audio embeddings differ in shape");
  AVSEP_REQUIRE(f_v.cols() == f_a.cols(), InvalidArgument, "matching_loss: embedding dims differ");
  ag::Tape<T>* t = f_v.tape();
  const auto idx = align_frames(f_v.rows(), lip_rate, f_a.rows(), audio_rate);
  auto lip_idx = std::make_shared<std::vector<int>>(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) (*lip_idx)[i] = static_cast<int>(i);
  auto audio_idx = std::make_shared<const std::vector<int>>(idx);
  auto v = ag::row_normalize(ag::gather_rows(f_v, std::shared_ptr<const std::vector<int>>(lip_idx)));
  auto pos = ag::row_normalize(ag::gather_rows(f_a, audio_idx));
  auto neg = ag::row_normalize(ag::gather_rows(f_a_neg, audio_idx));
  auto d_pos = ag::mean_row_distance(v, pos);
  auto d_neg = ag::mean_row_distance(v, neg);
  if (d_pos_out) *d_pos_out = d_pos.scalar();
  if (d_neg_out) *d_neg_out = d_neg.scalar();
  ag::Matrix<T> m(1, 1);
  m(0, 0) = margin;
  return ag::relu(ag::add(ag::sub(d_pos, d_neg), t->constant(std::move(m))));
}

}  // namespace avsep
