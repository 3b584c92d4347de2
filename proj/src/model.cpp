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

#include <cmath>
#include <limits>

#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace avsep::train {

template <typename T>
Model<T>::Model(const ExperimentConfig& cfg)
    : cfg_(cfg), separator_(cfg.separator, data::derive_seed(cfg.seed, "separator")) {
  cfg_.validate();
  if (cfg_.flags.use_synthesizer) {
    synthesizer_ = std::make_unique<Synthesizer<T>>(cfg_.synthesizer, data::derive_seed(cfg_.seed, "synthesizer"));
    if (cfg_.flags.predict_complete) {
      // A silent head has no SI-SNR gradient when it is the whole estimate.
      auto& w = synthesizer_->params().get(std::string(Synthesizer<T>::kFinalConv) + ".weight");
      std::mt19937_64 rng(data::derive_seed(cfg_.seed, "synthesizer.complete"));
      w.value = nn::glorot<T>(w.value.rows(), w.value.cols(), rng);
    }
  }
  audio_fe_ = std::make_shared<AudioFrontend>(cfg_.audio_frontend);
  video_fe_ = std::make_shared<VideoFrontend>(cfg_.video_frontend, *audio_fe_);
}

template <typename T>
std::vector<ag::ParamSet<T>*> Model<T>::param_sets() {
  std::vector<ag::ParamSet<T>*> out{&separator_.params()};
  if (synthesizer_) out.push_back(&synthesizer_->params());
  return out;
}

template <typename T>
std::vector<std::string> Model<T>::param_names() {
  std::vector<std::string> names;
  for (auto* ps : param_sets())
    for (const auto& p : *ps) names.push_back(p.name);
  return names;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* ps : param_sets()) ps->zero_grad();
}

template <typename T>
StepOutputs<T> Model<T>::forward(ag::Tape<T>& tape, const Batchlet<T>& ex, bool joint) {
  AVSEP_REQUIRE(ex.mixture.rows() == 1 && ex.target.rows() == 1 && ex.mixture.cols() == ex.target.cols(),
                InvalidArgument, "model: mixture and target must be equal-length rows");
  const T eps = static_cast<T>(cfg_.weights.epsilon);
  auto x = tape.constant(ex.mixture);
  auto s = tape.constant(ex.target);
  auto v = tape.constant(ex.video);
  StepOutputs<T> out;
  out.s_pre = separator_.forward(tape, x, v).output;
  out.l_per = si_snr_loss(s, out.s_pre, eps);
  out.s_fin = out.s_pre;
  out.total = out.l_per;
  const auto zero = [&] { return tape.constant(ag::Matrix<T>::Zero(1, 1)); };
  out.l_syn = zero();
  out.l_mat = zero();
  if (!joint) return out;

  if (synthesizer_) {
    auto mel = signal::log_mel(out.s_pre);
    out.s_res = trim_to(synthesizer_->forward(tape, mel, v, kVideoRate), ex.mixture.cols());
    out.s_fin = cfg_.flags.predict_complete ? out.s_res : ag::add(out.s_pre, out.s_res);
    out.l_syn = si_snr_loss(s, out.s_fin, eps);
    out.total = ag::add(out.total, out.l_syn);
  }
  if (cfg_.flags.use_matching_loss && cfg_.weights.lambda > 0.0) {
    auto f_a = audio_fe_->embed(out.s_fin);
    auto f_neg = audio_fe_->embed(ag::sub(x, out.s_fin));
    out.l_mat = matching_loss(v, kVideoRate, f_a, f_neg, audio_fe_->frame_rate(),
                              static_cast<T>(cfg_.weights.margin), &out.d_pos, &out.d_neg);
    out.total = ag::add(out.total, ag::scale(out.l_mat, static_cast<T>(cfg_.weights.lambda)));
  }
  return out;
}

template <typename T>
Eigen::VectorXd Model<T>::infer(const Eigen::VectorXd& mixture, const Eigen::MatrixXd& video_rows) {
  ag::Tape<T> tape;
  tape.set_grad_enabled(false);
  auto x = tape.constant(mixture.transpose().template cast<T>());
  auto v = tape.constant(video_rows.template cast<T>());
  auto s_fin = separator_.forward(tape, x, v).output;
  if (synthesizer_) {
    auto mel = signal::log_mel(s_fin);
    auto res = trim_to(synthesizer_->forward(tape, mel, v, kVideoRate), mixture.size());
    s_fin = cfg_.flags.predict_complete ? res : ag::add(s_fin, res);
  }
  return s_fin.value().transpose().template cast<double>();
}

template class Model<float>;
template class Model<double>;

// ---------------------------------------------------------------------------

template <typename T>
double Adam<T>::step(const std::vector<ag::ParamSet<T>*>& groups, double lr) {
  double sq = 0.0;
  for (auto* ps : groups)
    for (const auto& p : *ps) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  AVSEP_REQUIRE(std::isfinite(norm), NumericError, "optimizer: non-finite gradient norm");
  const double clip = cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg_.adam_eps);
  for (auto* ps : groups) {
    for (auto& p : *ps) {
      auto& [m, v] = moments_[p.name];
      if (m.size() == 0) {
        m = ag::Matrix<T>::Zero(p.value.rows(), p.value.cols());
        v = ag::Matrix<T>::Zero(p.value.rows(), p.value.cols());
      }
      const ag::Matrix<T> g = p.grad * static_cast<T>(clip);
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      p.value.array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;

PlateauSchedule::PlateauSchedule(const OptimizerConfig& cfg)
    : cfg_(cfg), lr_(cfg.initial_lr), best_(std::numeric_limits<double>::infinity()) {}

bool PlateauSchedule::observe(double loss) {
  if (std::isfinite(loss) && (!std::isfinite(best_) || best_ - loss >= cfg_.min_improvement)) {
    best_ = loss;
    bad_ = 0;
    return true;
  }
  ++bad_;
  if (bad_ % cfg_.plateau_patience == 0) lr_ *= cfg_.halving_factor;
  return false;
}

}  // namespace avsep::train
