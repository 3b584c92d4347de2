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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <json.hpp>

#include "avsep/container.hpp"
#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace avsep::train {

namespace {

ag::Matrix<float> to_row(const Eigen::VectorXd& v) { return v.transpose().cast<float>(); }

void dump_nonfinite(const std::filesystem::path& dir, long step, int epoch, const std::vector<std::string>& ids,
                    double l_per, double l_syn, double l_mat) {
  if (dir.empty()) return;
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["batch"] = ids;
  // JSON has no NaN; keep the raw text.
  j["L_per"] = std::to_string(l_per);
  j["L_syn"] = std::to_string(l_syn);
  j["L_mat"] = std::to_string(l_mat);
  std::ofstream(dir / "nonfinite_batch.json") << j.dump(2) << "\n";
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  // Tape buffers are large and short-lived; keep them on the heap instead
  // of returning them to the kernel after every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

SplitData load_split(const data::Manifest& m, data::Split split, const Model<float>& model) {
  SplitData out;
  const auto& cfg = model.config();
  for (const auto& row : m.split(split)) {
    Batchlet<float> b;
    b.id = row.example_id;
    if (cfg.video_frontend.kind == FrontendKind::kPrecomputed) {
      const auto mix = data::read_wav(m.base_dir / row.mixture);
      const auto tgt = data::read_wav(m.base_dir / row.target);
      AVSEP_REQUIRE(mix.size() == tgt.size(), FormatError, row.example_id + ": mixture and target lengths differ");
      const EmbeddingSeq e = load_precomputed(m.base_dir / row.visemes);
      AVSEP_REQUIRE(e.dim() == cfg.video_frontend.embed_dim, FormatError,
                    row.example_id + ": precomputed lip embedding has the wrong dimension");
      check_duration(mix.size(), e.frames(), e.frame_rate);
      b.mixture = to_row(mix.samples);
      b.target = to_row(tgt.samples);
      b.video = e.data.transpose().cast<float>();
    } else {
      const auto ex = data::load_example(row, m.base_dir, cfg.video_frontend.n_units);
      b.mixture = to_row(ex.mixture.samples);
      b.target = to_row(ex.target.samples);
      b.video = model.video_rows(ex.visemes).cast<float>();
    }
    out.examples.push_back(std::move(b));
  }
  return out;
}

double validation_loss(Model<float>& model, const SplitData& split) {
  AVSEP_REQUIRE(!split.examples.empty(), FormatError, "validation split is empty");
  double sum = 0.0;
  for (const auto& ex : split.examples) {
    ag::Tape<float> tape;
    tape.set_grad_enabled(false);
    sum += model.forward(tape, ex, true).total.scalar();
  }
  return sum / static_cast<double>(split.examples.size());
}

TrainResult train(const ExperimentConfig& cfg, const data::Manifest& manifest, const TrainOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  tune_allocator();
  cfg.validate();
  Model<float> model(cfg);
  Adam<float> adam(cfg.optimizer);
  PlateauSchedule sched(cfg.optimizer);

  const SplitData train_set = load_split(manifest, data::Split::kTrain, model);
  const SplitData valid_set = load_split(manifest, data::Split::kValid, model);
  AVSEP_REQUIRE(!train_set.examples.empty(), FormatError, "manifest has no train examples");
  AVSEP_REQUIRE(!valid_set.examples.empty(), FormatError, "manifest has no valid examples");

  std::ofstream metrics;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics.open(opts.out_dir / "metrics.jsonl", std::ios::trunc);
    AVSEP_REQUIRE(metrics.good(), IoError, "cannot write metrics log in " + opts.out_dir.string());
  }

  TrainResult res;
  std::mt19937_64 rng(data::derive_seed(cfg.seed, "data-order"));
  std::vector<std::size_t> order(train_set.examples.size());
  long step = 0;
  bool have_best = false;
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  auto out_of_budget = [&] {
    return (cfg.max_steps > 0 && step >= cfg.max_steps) ||
           (cfg.time_budget_s > 0.0 && elapsed() >= cfg.time_budget_s);
  };

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const bool joint = epoch > cfg.warmup_epochs;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    long epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float inv_b = 1.0f / static_cast<float>(end - start);
      model.zero_grad();
      StepRecord rec;
      rec.epoch = epoch;
      rec.lr = sched.lr();
      std::vector<std::string> ids;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train_set.examples[order[i]];
        ids.push_back(ex.id);
        ag::Tape<float> tape;
        auto o = model.forward(tape, ex, joint);
        const double total = o.total.scalar();
        rec.l_per += o.l_per.scalar() * inv_b;
        rec.l_syn += o.l_syn.scalar() * inv_b;
        rec.l_mat += o.l_mat.scalar() * inv_b;
        rec.total += total * inv_b;
        if (!std::isfinite(total)) {
          dump_nonfinite(opts.out_dir, step + 1, epoch, ids, o.l_per.scalar(), o.l_syn.scalar(), o.l_mat.scalar());
          throw NumericError("non-finite loss at step " + std::to_string(step + 1) + " on example " + ex.id);
        }
        tape.backward(ag::scale(o.total, inv_b));
      }
      try {
        adam.step(model.param_sets(), sched.lr());
      } catch (const NumericError&) {
        dump_nonfinite(opts.out_dir, step + 1, epoch, ids, rec.l_per, rec.l_syn, rec.l_mat);
        std::string joined;
        for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
        throw NumericError("non-finite gradient at step " + std::to_string(step + 1) + " in batch " + joined);
      }
      rec.step = ++step;
      epoch_total += rec.total;
      ++epoch_steps;
      res.steps.push_back(rec);
      if (metrics.is_open()) {
        nlohmann::ordered_json j;
        j["step"] = rec.step;
        j["epoch"] = rec.epoch;
        j["L_per"] = rec.l_per;
        j["L_syn"] = rec.l_syn;
        j["L_mat"] = rec.l_mat;
        j["total"] = rec.total;
        j["lr"] = rec.lr;
        metrics << j.dump() << "\n" << std::flush;
      }
      if (opts.on_step) opts.on_step(rec);
      if (opts.after_step) opts.after_step(model);
      if (out_of_budget()) break;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_total = epoch_steps ? epoch_total / static_cast<double>(epoch_steps) : 0.0;
    er.lr = sched.lr();
    er.valid_total = validation_loss(model, valid_set);
    er.improved = sched.observe(er.valid_total);
    if (er.improved || !have_best) {
      res.best = make_checkpoint(model, &adam, epoch, sched.best(), sched.lr(), sched.bad_epochs());
      have_best = true;
      if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "best.ckpt", res.best);
    }
    if (!opts.out_dir.empty()) {
      save_checkpoint(opts.out_dir / "last.ckpt",
                      make_checkpoint(model, &adam, epoch, sched.best(), sched.lr(), sched.bad_epochs()));
    }
    res.epochs.push_back(er);
    if (opts.verbose) {
      std::cerr << "epoch " << epoch << " train " << er.train_total << " valid " << er.valid_total << " lr "
                << er.lr << (er.improved ? " *" : "") << " (" << static_cast<int>(elapsed()) << " s)\n";
    }
    if (sched.should_stop()) {
      res.stopped_early = true;
      break;
    }
    if (out_of_budget()) {
      res.hit_budget = true;
      break;
    }
  }
  res.best_valid = sched.best();
  res.seconds = elapsed();
  return res;
}

}  // namespace avsep::train
