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

// Experiment configuration, the two-stage model, joint training,
// checkpoints, evaluation and the ablation runner.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avsep/data.hpp"
#include "avsep/frontends.hpp"
#include "avsep/losses.hpp"
#include "avsep/separator.hpp"
#include "avsep/synthesizer.hpp"

namespace avsep::train {

struct OptimizerConfig {
  double initial_lr = 1.5e-4;
  int plateau_patience = 3;
  double halving_factor = 0.5;
  int stop_patience = 5;
  double min_improvement = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

struct AblationFlags {
  bool use_synthesizer = true;
  bool use_matching_loss = true;
  bool predict_complete = false;  // s_fin = synthesizer output alone
};

struct ExperimentConfig {
  SeparatorConfig separator;
  SynthesizerConfig synthesizer;
  FrontendSpec audio_frontend{FrontendKind::kOracleAudio, 768, 0, data::kDefaultUnits};
  FrontendSpec video_frontend{FrontendKind::kOracleVideo, 768, 0, data::kDefaultUnits};
  LossWeights weights;
  OptimizerConfig optimizer;
  AblationFlags flags;
  int batch_size = 8;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  int warmup_epochs = 0;       // separator-only epochs before joint training
  long max_steps = 0;          // 0: unlimited
  double time_budget_s = 0.0;  // 0: unlimited; checked between steps

  /// Throws ConfigError.
  void validate() const;
  static ExperimentConfig paper();
  static ExperimentConfig toy();

  /// Canonical `key = value` text; parse(serialize()) round-trips.
  std::string serialize() const;
  /// Starts from paper() defaults; unknown keys and bad values are errors.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::uint64_t hash() const;
};

std::uint64_t fnv1a(const std::string& s);

// ---------------------------------------------------------------------------

template <typename T>
struct StepOutputs {
  ag::Var<T> s_pre, s_res, s_fin;
  ag::Var<T> l_per, l_syn, l_mat, total;
  T d_pos = 0, d_neg = 0;
};

/// One training example in the model's scalar type.
template <typename T>
struct Batchlet {
  std::string id;
  ag::Matrix<T> mixture;  // [1 x L]
  ag::Matrix<T> target;   // [1 x L]
  ag::Matrix<T> video;    // [F x dim], 25 Hz
};

template <typename T>
class Model {
 public:
  explicit Model(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  Separator<T>& separator() { return separator_; }
  Synthesizer<T>* synthesizer() { return synthesizer_ ? synthesizer_.get() : nullptr; }
  const AudioFrontend& audio_frontend() const { return *audio_fe_; }
  const VideoFrontend& video_frontend() const { return *video_fe_; }

  /// Trainable parameter groups in a fixed order.
  std::vector<ag::ParamSet<T>*> param_sets();
  std::vector<std::string> param_names();
  void zero_grad();

  /// Full objective on one example. With `joint` false only the separator
  /// term is built (warm-up epochs).
  StepOutputs<T> forward(ag::Tape<T>& tape, const Batchlet<T>& ex, bool joint = true);

  /// Final estimate for a mixture, no gradients.
  Eigen::VectorXd infer(const Eigen::VectorXd& mixture, const Eigen::MatrixXd& video_rows);
  Eigen::MatrixXd video_rows(const VisemeStream& v) const { return video_fe_->embed_rows(v); }

 private:
  ExperimentConfig cfg_;
  Separator<T> separator_;
  std::unique_ptr<Synthesizer<T>> synthesizer_;
  std::shared_ptr<const AudioFrontend> audio_fe_;
  std::shared_ptr<const VideoFrontend> video_fe_;
};

extern template class Model<float>;
extern template class Model<double>;

// ---------------------------------------------------------------------------

/// Adam with bias correction; moments keyed by parameter name.
template <typename T>
class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) {}

  /// One update over every group; returns the pre-clip global grad norm.
  double step(const std::vector<ag::ParamSet<T>*>& groups, double lr);

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::map<std::string, std::pair<ag::Matrix<T>, ag::Matrix<T>>>& moments() { return moments_; }
  const std::map<std::string, std::pair<ag::Matrix<T>, ag::Matrix<T>>>& moments() const {
    return moments_;
  }

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<ag::Matrix<T>, ag::Matrix<T>>> moments_;
};

/// Validation-driven learning-rate schedule. An epoch improves when its
/// loss is at least min_improvement below the best so far. The rate is
/// halved each time the run of non-improving epochs reaches a multiple of
/// plateau_patience; training stops once the run reaches stop_patience.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const OptimizerConfig& cfg);

  /// Returns true if `loss` is a new best.
  bool observe(double loss);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }
  bool should_stop() const { return bad_ >= cfg_.stop_patience; }

  void restore(double lr, double best, int bad) {
    lr_ = lr;
    best_ = best;
    bad_ = bad;
  }

 private:
  OptimizerConfig cfg_;
  double lr_;
  double best_;
  int bad_ = 0;
};

// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> value, m, v;  // m and v empty when no optimizer state
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  int epoch = 0;
  double best_valid = 0.0;
  double lr = 0.0;
  long adam_step = 0;
  int bad_epochs = 0;
  std::vector<TensorRecord> tensors;

  ExperimentConfig config() const { return ExperimentConfig::parse(config_text); }
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c);
/// FormatError on corruption; IncompatibleError if the stored hash does
/// not match the stored config text.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, const Adam<T>* adam, int epoch, double best_valid, double lr,
                           int bad_epochs = 0);
/// Copies parameters (and optimizer moments if `adam` is given). Throws
/// IncompatibleError on a hash, name or shape mismatch.
template <typename T>
void restore_checkpoint(const Checkpoint& c, Model<T>& model, Adam<T>* adam = nullptr);

// ---------------------------------------------------------------------------

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double l_per = 0, l_syn = 0, l_mat = 0, total = 0, lr = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_total = 0;
  double valid_total = 0;
  double lr = 0;
  bool improved = false;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  bool verbose = false;
  std::function<void(const StepRecord&)> on_step;
  /// Called after every optimizer step with the live model.
  std::function<void(Model<float>&)> after_step;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double best_valid = 0.0;
  double seconds = 0.0;
  bool stopped_early = false;
  bool hit_budget = false;
  Checkpoint best;
};

/// Examples loaded into memory for one split.
struct SplitData {
  std::vector<Batchlet<float>> examples;
};
SplitData load_split(const data::Manifest& m, data::Split split, const Model<float>& model);

/// Keeps freed tape buffers in the process heap (glibc only).
void tune_allocator();

TrainResult train(const ExperimentConfig& cfg, const data::Manifest& manifest, const TrainOptions& opts = {});

/// Mean total loss over a split, no gradients.
double validation_loss(Model<float>& model, const SplitData& split);

// ---------------------------------------------------------------------------

struct EvalRow {
  std::string example_id;
  double si_snri = 0.0;
  double sdri = 0.0;
};

struct EvalReport {
  std::string split;
  std::vector<EvalRow> rows;
  double mean_si_snri = 0.0;
  double mean_sdri = 0.0;
  double median_si_snri = 0.0;

  std::string to_jsonl() const;  // one record per example, then a summary
  std::string table() const;
};

using Estimator = std::function<Eigen::VectorXd(const data::MixtureExample&)>;

Estimator identity_estimator();
Estimator oracle_estimator();
Estimator model_estimator(Model<float>& model);

EvalReport evaluate(const Estimator& est, const data::Manifest& manifest, data::Split split,
                    const LossWeights& w = {});
/// Evaluates a checkpoint; if `expected` is given its hash must match.
EvalReport evaluate(const Checkpoint& ckpt, const data::Manifest& manifest, data::Split split,
                    const ExperimentConfig* expected = nullptr);

// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  ExperimentConfig config;
};

/// Variants of a suite in table order; InvalidArgument on an unknown suite.
std::vector<AblationVariant> ablation_variants(const std::string& suite, const ExperimentConfig& base);

struct AblationRow {
  std::string variant;
  EvalReport report;
  TrainResult train;
};

std::vector<AblationRow> ablate(const std::string& suite, const ExperimentConfig& base,
                                const data::Manifest& manifest, const std::filesystem::path& out_dir = {},
                                bool verbose = false);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace avsep::train
