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

// avsep: corpus generation, training, evaluation and ablations.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 data
// error, 4 numeric failure, 1 anything else.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace {

int exit_code(const avsep::Error& e) {
  switch (e.kind()) {
    case avsep::ErrorKind::kConfig:
    case avsep::ErrorKind::kInvalidArgument:
    case avsep::ErrorKind::kIncompatible:
      return 2;
    case avsep::ErrorKind::kFormat:
    case avsep::ErrorKind::kIo:
    case avsep::ErrorKind::kDegenerate:
      return 3;
    case avsep::ErrorKind::kNumeric:
      return 4;
    case avsep::ErrorKind::kInvalidState:
      return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace avsep;
  CLI::App app{"Audio-visual target speech extraction toolkit"};
  app.require_subcommand(1);

  data::CorpusSpec corpus;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic corpus and its manifest");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", corpus.seed, "Corpus seed");
  gen->add_option("--speakers", corpus.n_speakers, "Number of speakers");
  gen->add_option("--train", corpus.n_train, "Train examples");
  gen->add_option("--valid", corpus.n_valid, "Valid examples");
  gen->add_option("--test", corpus.n_test, "Test examples");
  gen->add_option("--units", corpus.n_units, "Unit inventory size");
  gen->add_option("--noise-db", corpus.noise_db, "White noise level relative to the target (dB)");

  std::string cfg_path, data_path, out_dir;
  bool verbose = false;
  auto* tr = app.add_subcommand("train", "Train both stages jointly");
  tr->add_option("--config", cfg_path, "Experiment config file")->required();
  tr->add_option("--data", data_path, "Manifest (JSON lines)")->required();
  tr->add_option("--out", out_dir, "Run directory")->required();
  tr->add_flag("-v,--verbose", verbose, "Print per-epoch progress");

  std::string ckpt_path, split_name = "test", json_out, expect_cfg;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on one split");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  ev->add_option("--data", data_path, "Manifest (JSON lines)")->required();
  ev->add_option("--split", split_name, "train, valid or test");
  ev->add_option("--config", expect_cfg, "Refuse checkpoints trained with a different config");
  ev->add_option("--json", json_out, "Also write JSON-lines records here");

  std::string suite;
  auto* ab = app.add_subcommand("ablate", "Train and score every variant of an ablation suite");
  ab->add_option("--suite", suite, "stage_ablation, fusion_ablation or dominance_ablation")->required();
  ab->add_option("--config", cfg_path, "Base experiment config")->required();
  ab->add_option("--data", data_path, "Manifest (JSON lines)")->required();
  ab->add_option("--out", out_dir, "Directory for per-variant runs");
  ab->add_flag("-v,--verbose", verbose, "Print per-epoch progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto m = data::build_corpus(corpus, gen_out);
      std::cout << "wrote " << m.rows.size() << " examples to " << gen_out << "/manifest.jsonl\n";
    } else if (tr->parsed()) {
      const auto cfg = train::ExperimentConfig::load(cfg_path);
      const auto manifest = data::read_manifest(data_path);
      train::TrainOptions opts;
      opts.out_dir = out_dir;
      opts.verbose = verbose;
      const auto res = train::train(cfg, manifest, opts);
      std::cout << "trained " << res.epochs.size() << " epochs, " << res.steps.size()
                << " steps, best valid loss " << res.best_valid << ", " << res.seconds << " s\n"
                << "checkpoint: " << (std::filesystem::path(out_dir) / "best.ckpt").string() << "\n";
    } else if (ev->parsed()) {
      const auto ckpt = train::load_checkpoint(ckpt_path);
      const auto manifest = data::read_manifest(data_path);
      std::optional<train::ExperimentConfig> expected;
      if (!expect_cfg.empty()) expected = train::ExperimentConfig::load(expect_cfg);
      const auto rep = train::evaluate(ckpt, manifest, data::parse_split(split_name),
                                       expected ? &*expected : nullptr);
      std::cout << rep.table();
      if (!json_out.empty()) {
        std::ofstream(json_out) << rep.to_jsonl();
      }
    } else if (ab->parsed()) {
      const auto cfg = train::ExperimentConfig::load(cfg_path);
      const auto manifest = data::read_manifest(data_path);
      const auto rows = train::ablate(suite, cfg, manifest, out_dir, verbose);
      std::cout << train::ablation_table(rows);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
