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
#include <cstdio>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace avsep::train {

namespace {

EvalReport summarize(std::string split, std::vector<EvalRow> rows) {
  EvalReport r;
  r.split = std::move(split);
  r.rows = std::move(rows);
  if (r.rows.empty()) return r;
  // Sum in id order so the mean does not depend on manifest order.
  std::vector<const EvalRow*> sorted;
  for (const auto& row : r.rows) sorted.push_back(&row);
  std::sort(sorted.begin(), sorted.end(),
            [](const EvalRow* a, const EvalRow* b) { return a->example_id < b->example_id; });
  double si = 0.0, sd = 0.0;
  std::vector<double> vals;
  for (const auto* row : sorted) {
    si += row->si_snri;
    sd += row->sdri;
    vals.push_back(row->si_snri);
  }
  const double n = static_cast<double>(sorted.size());
  r.mean_si_snri = si / n;
  r.mean_sdri = sd / n;
  std::sort(vals.begin(), vals.end());
  const std::size_t h = vals.size() / 2;
  r.median_si_snri = vals.size() % 2 ? vals[h] : 0.5 * (vals[h - 1] + vals[h]);
  return r;
}

EvalRow score(const std::string& id, const Eigen::VectorXd& mix, const Eigen::VectorXd& est,
              const Eigen::VectorXd& ref, const LossWeights& w) {
  AVSEP_REQUIRE(est.size() == ref.size(), InvalidArgument, id + ": estimate length differs from reference");
  return EvalRow{id, si_snri(mix, est, ref, w), sdri(mix, est, ref, w)};
}

}  // namespace

std::string EvalReport::to_jsonl() const {
  std::ostringstream o;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["example_id"] = r.example_id;
    j["si_snri"] = r.si_snri;
    j["sdri"] = r.sdri;
    o << j.dump() << "\n";
  }
  nlohmann::ordered_json s;
  s["split"] = split;
  s["count"] = rows.size();
  s["mean_si_snri"] = mean_si_snri;
  s["mean_sdri"] = mean_sdri;
  s["median_si_snri"] = median_si_snri;
  o << s.dump() << "\n";
  return o.str();
}

std::string EvalReport::table() const {
  std::size_t w = std::string("example").size();
  for (const auto& r : rows) w = std::max(w, r.example_id.size());
  std::ostringstream o;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s\n", static_cast<int>(w), "example", "SI-SNRi", "SDRi");
  o << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %9.3f  %9.3f\n", static_cast<int>(w), r.example_id.c_str(), r.si_snri,
                  r.sdri);
    o << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s  %9.3f  %9.3f\n", static_cast<int>(w), "mean", mean_si_snri, mean_sdri);
  o << buf;
  std::snprintf(buf, sizeof(buf), "%-*s  %9.3f\n", static_cast<int>(w), "median", median_si_snri);
  o << buf;
  return o.str();
}

Estimator identity_estimator() {
  return [](const data::MixtureExample& ex) { return ex.mixture.samples; };
}

Estimator oracle_estimator() {
  return [](const data::MixtureExample& ex) { return ex.target.samples; };
}

Estimator model_estimator(Model<float>& model) {
  return [&model](const data::MixtureExample& ex) {
    return model.infer(ex.mixture.samples, model.video_rows(ex.visemes));
  };
}

EvalReport evaluate(const Estimator& est, const data::Manifest& manifest, data::Split split,
                    const LossWeights& w) {
  std::vector<EvalRow> rows;
  for (const auto& row : manifest.split(split)) {
    const auto ex = data::load_example(row, manifest.base_dir);
    rows.push_back(score(row.example_id, ex.mixture.samples, est(ex), ex.target.samples, w));
  }
  AVSEP_REQUIRE(!rows.empty(), FormatError, "split '" + data::to_string(split) + "' has no examples");
  return summarize(data::to_string(split), std::move(rows));
}

EvalReport evaluate(const Checkpoint& ckpt, const data::Manifest& manifest, data::Split split,
                    const ExperimentConfig* expected) {
  if (expected) {
    AVSEP_REQUIRE(expected->hash() == ckpt.config_hash, IncompatibleError,
                  "checkpoint was trained with a different configuration");
  }
  const ExperimentConfig cfg = ckpt.config();
  Model<float> model(cfg);
  restore_checkpoint(ckpt, model);
  const SplitData data = load_split(manifest, split, model);
  AVSEP_REQUIRE(!data.examples.empty(), FormatError, "split '" + data::to_string(split) + "' has no examples");
  std::vector<EvalRow> rows;
  for (const auto& ex : data.examples) {
    const Eigen::VectorXd mix = ex.mixture.transpose().cast<double>();
    const Eigen::VectorXd ref = ex.target.transpose().cast<double>();
    const Eigen::VectorXd est = model.infer(mix, ex.video.cast<double>());
    rows.push_back(score(ex.id, mix, est, ref, cfg.weights));
  }
  return summarize(data::to_string(split), std::move(rows));
}

// ---------------------------------------------------------------------------

std::vector<AblationVariant> ablation_variants(const std::string& suite, const ExperimentConfig& base) {
  using fusion::Modality;
  using fusion::Strategy;
  std::vector<AblationVariant> out;
  if (suite == "stage_ablation") {
    ExperimentConfig full = base;
    full.flags = AblationFlags{};
    out.push_back({"full", full});
    ExperimentConfig no_syn = full;
    no_syn.flags.use_synthesizer = false;
    out.push_back({"w/o AV-Synthesizer", no_syn});
    ExperimentConfig no_mat = full;
    no_mat.flags.use_matching_loss = false;
    out.push_back({"w/o L_mat", no_mat});
    ExperimentConfig complete = full;
    complete.flags.predict_complete = true;
    out.push_back({"predict complete signal", complete});
  } else if (suite == "fusion_ablation") {
    for (Strategy s : {Strategy::kCrossAttention, Strategy::kConcatenation, Strategy::kSummation}) {
      ExperimentConfig c = base;
      c.separator.fusion = s;
      c.synthesizer.fusion = s;
      out.push_back({fusion::to_string(s), c});
    }
  } else if (suite == "dominance_ablation") {
    const fusion::Dominance va{Modality::kVideo, Modality::kAudio};
    const fusion::Dominance av{Modality::kAudio, Modality::kVideo};
    for (const auto& sep : {va, av}) {
      for (const auto& syn : {av, va}) {
        ExperimentConfig c = base;
        c.separator.dominance = sep;
        c.synthesizer.dominance = syn;
        out.push_back({"separator " + fusion::to_string(sep) + ", synthesizer " + fusion::to_string(syn), c});
      }
    }
  } else {
    throw InvalidArgument("unknown ablation suite '" + suite +
                          "' (expected stage_ablation, fusion_ablation or dominance_ablation)");
  }
  for (auto& v : out) v.config.validate();
  return out;
}

std::vector<AblationRow> ablate(const std::string& suite, const ExperimentConfig& base,
                                const data::Manifest& manifest, const std::filesystem::path& out_dir,
                                bool verbose) {
  std::vector<AblationRow> rows;
  int i = 0;
  for (const auto& v : ablation_variants(suite, base)) {
    TrainOptions opts;
    opts.verbose = verbose;
    if (!out_dir.empty()) opts.out_dir = out_dir / ("variant" + std::to_string(i));
    ++i;
    if (verbose) std::cerr << "== " << v.name << "\n";
    AblationRow row;
    row.variant = v.name;
    row.train = train(v.config, manifest, opts);
    row.report = evaluate(row.train.best, manifest, data::Split::kTest);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t w = std::string("variant").size();
  for (const auto& r : rows) w = std::max(w, r.variant.size());
  std::ostringstream o;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s\n", static_cast<int>(w), "variant", "SI-SNRi", "SDRi",
                "median");
  o << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %9.3f  %9.3f  %9.3f\n", static_cast<int>(w), r.variant.c_str(),
                  r.report.mean_si_snri, r.report.mean_sdri, r.report.median_si_snri);
    o << buf;
  }
  return o.str();
}

}  // namespace avsep::train
