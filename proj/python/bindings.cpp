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

// Python bindings: metrics, signal helpers, corpus generation, training,
// evaluation and checkpoint inference.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "avsep/errors.hpp"
#include "avsep/signal.hpp"
#include "avsep/train.hpp"

namespace py = pybind11;
using namespace avsep;

namespace {

py::dict report_dict(const train::EvalReport& r) {
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["example_id"] = row.example_id;
    d["si_snri"] = row.si_snri;
    d["sdri"] = row.sdri;
    rows.append(d);
  }
  py::dict out;
  out["split"] = r.split;
  out["rows"] = rows;
  out["mean_si_snri"] = r.mean_si_snri;
  out["mean_sdri"] = r.mean_sdri;
  out["median_si_snri"] = r.median_si_snri;
  return out;
}

VisemeStream visemes(const std::vector<int>& units, int n_units) {
  VisemeStream v;
  v.unit_ids = units;
  v.n_units = n_units;
  return v;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Audio-visual target speech extraction core";

  static py::exception<Error> error(m, "AVSepError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.attr("SAMPLE_RATE") = kSampleRate;

  m.def(
      "si_snr_loss",
      [](const Eigen::VectorXd& target, const Eigen::VectorXd& estimate, double eps) {
        return si_snr_loss(target, estimate, eps);
      },
      py::arg("target"), py::arg("estimate"), py::arg("eps") = 1e-8,
        "Negative scale-invariant SNR in dB.");
  m.def(
      "si_snri",
      [](const Eigen::VectorXd& mix, const Eigen::VectorXd& est, const Eigen::VectorXd& ref) {
        return si_snri(mix, est, ref);
      },
      py::arg("mixture"), py::arg("estimate"), py::arg("reference"));
  m.def(
      "sdri",
      [](const Eigen::VectorXd& mix, const Eigen::VectorXd& est, const Eigen::VectorXd& ref) {
        return sdri(mix, est, ref);
      },
      py::arg("mixture"), py::arg("estimate"), py::arg("reference"));
  m.def("matching_hinge", &matching_hinge, py::arg("d_pos"), py::arg("d_neg"), py::arg("margin"));

  m.def(
      "chunk",
      [](const Eigen::MatrixXd& feat, int chunk_len) {
        auto c = signal::chunk(FeatureMap{feat}, chunk_len);
        return py::make_tuple(c.data, c.num_chunks);
      },
      py::arg("feature"), py::arg("chunk_len"),
      "Split [channels x time] into half-overlapping chunks; returns (data, num_chunks).");
  m.def(
      "unchunk",
      [](const Eigen::MatrixXd& data, int chunk_len, int num_chunks, int original_time) {
        ChunkedFeature c;
        c.data = data;
        c.chunk_len = chunk_len;
        c.num_chunks = num_chunks;
        c.original_time = original_time;
        return signal::unchunk(c).data;
      },
      py::arg("data"), py::arg("chunk_len"), py::arg("num_chunks"), py::arg("original_time"));
  m.def(
      "log_mel", [](const Eigen::VectorXd& wave) { return signal::log_mel(Waveform(wave)).data; },
      py::arg("wave"), "80-band log-mel spectrogram [80 x frames] at 100 Hz.");

  m.def(
      "gen_corpus",
      [](const std::filesystem::path& out, std::uint64_t seed, int speakers, int n_train, int n_valid,
         int n_test) {
        data::CorpusSpec spec;
        spec.seed = seed;
        spec.n_speakers = speakers;
        spec.n_train = n_train;
        spec.n_valid = n_valid;
        spec.n_test = n_test;
        py::gil_scoped_release release;
        return data::build_corpus(spec, out).rows.size();
      },
      py::arg("out_dir"), py::arg("seed") = 7, py::arg("speakers") = 8, py::arg("n_train") = 500,
      py::arg("n_valid") = 50, py::arg("n_test") = 50, "Render a synthetic corpus; returns the example count.");

  m.def(
      "config_text",
      [](const std::string& preset) {
        if (preset == "paper") return train::ExperimentConfig::paper().serialize();
        if (preset == "toy") return train::ExperimentConfig::toy().serialize();
        throw InvalidArgument("unknown preset '" + preset + "'");
      },
      py::arg("preset"), "Canonical config text for the 'paper' or 'toy' preset.");
  m.def(
      "validate_config", [](const std::string& text) { return train::ExperimentConfig::parse(text).serialize(); },
      py::arg("text"), "Parse and validate config text; returns its canonical form.");

  m.def(
      "train",
      [](const std::string& config_text, const std::filesystem::path& manifest, const std::filesystem::path& out,
         bool verbose) {
        const auto cfg = train::ExperimentConfig::parse(config_text);
        const auto mf = data::read_manifest(manifest);
        train::TrainOptions opts;
        opts.out_dir = out;
        opts.verbose = verbose;
        train::TrainResult res;
        {
          py::gil_scoped_release release;
          res = train::train(cfg, mf, opts);
        }
        py::list losses;
        for (const auto& s : res.steps) losses.append(s.total);
        py::dict d;
        d["steps"] = res.steps.size();
        d["epochs"] = res.epochs.size();
        d["best_valid"] = res.best_valid;
        d["seconds"] = res.seconds;
        d["stopped_early"] = res.stopped_early;
        d["step_losses"] = losses;
        return d;
      },
      py::arg("config_text"), py::arg("manifest"), py::arg("out_dir"), py::arg("verbose") = false);

  m.def(
      "evaluate",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& manifest, const std::string& split) {
        const auto c = train::load_checkpoint(ckpt);
        const auto mf = data::read_manifest(manifest);
        train::EvalReport rep;
        {
          py::gil_scoped_release release;
          rep = train::evaluate(c, mf, data::parse_split(split));
        }
        return report_dict(rep);
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "test");
  m.def(
      "evaluate_baseline",
      [](const std::string& kind, const std::filesystem::path& manifest, const std::string& split) {
        const auto mf = data::read_manifest(manifest);
        train::Estimator est;
        if (kind == "identity") {
          est = train::identity_estimator();
        } else if (kind == "oracle") {
          est = train::oracle_estimator();
        } else {
          throw InvalidArgument("unknown baseline '" + kind + "'");
        }
        return report_dict(train::evaluate(est, mf, data::parse_split(split)));
      },
      py::arg("kind"), py::arg("manifest"), py::arg("split") = "test",
      "Score the est=mix ('identity') or est=target ('oracle') estimator.");

  m.def(
      "separate",
      [](const std::filesystem::path& ckpt, const Eigen::VectorXd& mixture, const std::vector<int>& units) {
        const auto c = train::load_checkpoint(ckpt);
        train::Model<float> model(c.config());
        train::restore_checkpoint(c, model);
        const auto rows = model.video_rows(visemes(units, c.config().video_frontend.n_units));
        py::gil_scoped_release release;
        return model.infer(mixture, rows);
      },
      py::arg("checkpoint"), py::arg("mixture"), py::arg("lip_units"),
      "Extract the target speaker from a 16 kHz mixture given its 25 Hz lip units.");
}
