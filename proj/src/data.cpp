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

#include "avsep/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "avsep/container.hpp"
#include "avsep/errors.hpp"

namespace avsep::data {

namespace {

constexpr double kPeak = 0.5;
constexpr double kMixPeak = 0.95;
constexpr double kResonanceQ = 5.0;
constexpr int kFadeSamples = 80;  // 5 ms
constexpr double kPcmScale = 32768.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double resonance_gain(double f, double fc) {
  const double r = f / fc - fc / f;
  return 1.0 / std::sqrt(1.0 + kResonanceQ * kResonanceQ * r * r);
}

double quantize(double x) {
  return std::clamp(std::round(x * kPcmScale), -kPcmScale, kPcmScale - 1.0) / kPcmScale;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

ToySpeakerSpec make_speaker(int speaker_id, std::uint64_t seed) {
  ToySpeakerSpec spk;
  spk.speaker_id = speaker_id;
  spk.seed = derive_seed(seed, "speaker-" + std::to_string(speaker_id));
  std::mt19937_64 rng(spk.seed);
  std::uniform_real_distribution<double> f0(90.0, 300.0);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  spk.f0 = f0(rng);
  const int n_harm = static_cast<int>(7800.0 / spk.f0);
  for (int h = 1; h <= n_harm; ++h) {
    spk.timbre_weights.push_back(std::pow(static_cast<double>(h), -0.7) * jitter(rng));
    spk.phases.push_back(phase(rng));
  }
  return spk;
}

double unit_resonance_hz(int unit, int n_units) {
  AVSEP_REQUIRE(unit >= 0 && unit < n_units, InvalidArgument, "unit id out of range");
  if (n_units == 1) return 1000.0;
  return 300.0 * std::pow(12.0, static_cast<double>(unit) / (n_units - 1));
}

Waveform render_units(const VisemeStream& units, const ToySpeakerSpec& spk) {
  AVSEP_REQUIRE(!units.unit_ids.empty(), InvalidArgument, "render_units: empty unit stream");
  AVSEP_REQUIRE(spk.f0 > 0.0 && !spk.timbre_weights.empty(), InvalidArgument,
                "render_units: invalid speaker");
  const int n_harm = static_cast<int>(spk.timbre_weights.size());
  const std::size_t frames = units.unit_ids.size();
  // Per-frame harmonic gains.
  std::vector<std::vector<double>> gains(frames, std::vector<double>(n_harm));
  for (std::size_t f = 0; f < frames; ++f) {
    const double fc = unit_resonance_hz(units.unit_ids[f], units.n_units);
    for (int h = 0; h < n_harm; ++h) {
      gains[f][h] = spk.timbre_weights[h] * resonance_gain((h + 1) * spk.f0, fc);
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(frames) * kVideoFrameSamples);
  const double w0 = 2.0 * std::numbers::pi * spk.f0 / kSampleRate;
  for (int h = 0; h < n_harm; ++h) {
    const double w = w0 * (h + 1);
    for (std::size_t f = 0; f < frames; ++f) {
      const double g1 = gains[f][h];
      const double g0 = f == 0 ? g1 : gains[f - 1][h];
      const Eigen::Index base = static_cast<Eigen::Index>(f) * kVideoFrameSamples;
      for (int j = 0; j < kVideoFrameSamples; ++j) {
        const double g = j < kFadeSamples ? g0 + (g1 - g0) * (j + 0.5) / kFadeSamples : g1;
        out(base + j) += g * std::sin(w * static_cast<double>(base + j) + spk.phases[h]);
      }
    }
  }
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0.0) out *= kPeak / peak;
  return Waveform(std::move(out));
}

Mixture make_mixture(const Waveform& s1, const Waveform& s2, double snr_db) {
  AVSEP_REQUIRE(s1.size() == s2.size(), InvalidArgument, "make_mixture: length mismatch");
  AVSEP_REQUIRE(snr_db >= -5.0 && snr_db <= 5.0, InvalidArgument,
                "make_mixture: SNR must lie in [-5, 5] dB");
  const double p1 = s1.samples.squaredNorm();
  const double p2 = s2.samples.squaredNorm();
  AVSEP_REQUIRE(p1 > 0.0 && p2 > 0.0, DegenerateInput, "make_mixture: zero-power input");
  Mixture m;
  m.scale = std::sqrt(p1 / (p2 * std::pow(10.0, snr_db / 10.0)));
  m.interferer = Waveform(s2.samples * m.scale, s2.sample_rate);
  m.mixture = Waveform(s1.samples + m.interferer.samples, s1.sample_rate);
  return m;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw InvalidArgument("unknown split '" + s + "'");
}

std::vector<ManifestRow> Manifest::split(Split s) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  AVSEP_REQUIRE(in.good(), IoError, "cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRow r;
      r.example_id = j.at("example_id").get<std::string>();
      r.mixture = j.at("mixture").get<std::string>();
      r.target = j.at("target").get<std::string>();
      r.interferer = j.at("interferer").get<std::string>();
      r.visemes = j.at("visemes").get<std::string>();
      r.snr_db = j.at("snr_db").get<double>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.target_speaker = j.value("target_speaker", -1);
      r.interferer_speaker = j.value("interferer_speaker", -1);
      AVSEP_REQUIRE(seen.insert(r.example_id).second, FormatError,
                    "duplicate example id " + r.example_id);
      m.rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ostringstream os;
  for (const auto& r : m.rows) {
    nlohmann::ordered_json j;
    j["example_id"] = r.example_id;
    j["mixture"] = r.mixture;
    j["target"] = r.target;
    j["interferer"] = r.interferer;
    j["visemes"] = r.visemes;
    j["snr_db"] = r.snr_db;
    j["split"] = to_string(r.split);
    j["target_speaker"] = r.target_speaker;
    j["interferer_speaker"] = r.interferer_speaker;
    os << j.dump() << '\n';
  }
  const std::string text = os.str();
  write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

SpeakerPartition partition_speakers(int n_speakers, bool need_valid) {
  AVSEP_REQUIRE(n_speakers >= 4, InvalidArgument, "corpus: need at least 4 speakers");
  SpeakerPartition p;
  const int n_test = std::max(2, static_cast<int>(std::lround(n_speakers / 4.0)));
  int n_valid = need_valid ? std::max(2, static_cast<int>(std::lround(n_speakers / 8.0))) : 0;
  // Too few speakers for a disjoint validation split: validate on training voices.
  const bool shared_valid = need_valid && n_speakers - n_test - n_valid < 2;
  if (shared_valid) n_valid = 0;
  const int n_train = n_speakers - n_test - n_valid;
  for (int i = 0; i < n_train; ++i) p.train.push_back(i);
  for (int i = 0; i < n_valid; ++i) p.valid.push_back(n_train + i);
  for (int i = 0; i < n_test; ++i) p.test.push_back(n_train + n_valid + i);
  if (shared_valid) p.valid = p.train;
  return p;
}

MixtureExample synthesize_example(const std::string& example_id, const ToySpeakerSpec& target,
                                  const ToySpeakerSpec& interferer, std::uint64_t seed, int n_units) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> unit(0, n_units - 1);
  std::uniform_int_distribution<int> run(1, 3);
  auto draw_units = [&]() {
    VisemeStream v;
    v.n_units = n_units;
    while (static_cast<int>(v.unit_ids.size()) < kClipFrames) {
      const int u = unit(rng);
      for (int r = run(rng); r > 0 && static_cast<int>(v.unit_ids.size()) < kClipFrames; --r) {
        v.unit_ids.push_back(u);
      }
    }
    return v;
  };
  MixtureExample ex;
  ex.example_id = example_id;
  ex.visemes = draw_units();
  const VisemeStream other = draw_units();
  ex.snr_db = std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
  const Waveform s = render_units(ex.visemes, target);
  const Waveform i = render_units(other, interferer);
  Mixture mix = make_mixture(s, i, ex.snr_db);
  Eigen::VectorXd tgt = s.samples;
  Eigen::VectorXd itf = mix.interferer.samples;
  const double peak = mix.mixture.samples.cwiseAbs().maxCoeff();
  if (peak > kMixPeak) {
    tgt *= kMixPeak / peak;
    itf *= kMixPeak / peak;
  }
  // Quantize each track to the PCM grid; the mixture is then their exact sum.
  ex.target = Waveform(tgt.unaryExpr(&quantize));
  ex.interferer = Waveform(itf.unaryExpr(&quantize));
  ex.mixture = Waveform(ex.target.samples + ex.interferer.samples);
  return ex;
}

Manifest build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  AVSEP_REQUIRE(spec.n_train >= 0 && spec.n_valid >= 0 && spec.n_test >= 0, InvalidArgument,
                "corpus: split sizes must be non-negative");
  const auto part = partition_speakers(spec.n_speakers, spec.n_valid > 0);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  AVSEP_REQUIRE(!ec && std::filesystem::is_directory(out_dir), IoError,
                "cannot create corpus directory " + out_dir.string());

  std::vector<ToySpeakerSpec> speakers;
  for (int i = 0; i < spec.n_speakers; ++i) speakers.push_back(make_speaker(i, spec.seed));

  Manifest m;
  m.base_dir = out_dir;
  auto emit = [&](Split split, int count, const std::vector<int>& pool) {
    const std::string name = to_string(split);
    std::filesystem::create_directories(out_dir / name, ec);
    AVSEP_REQUIRE(!ec, IoError, "cannot create " + (out_dir / name).string());
    for (int n = 0; n < count; ++n) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s-%05d", name.c_str(), n);
      const std::string id = buf;
      const std::uint64_t seed = derive_seed(spec.seed, id);
      std::mt19937_64 pick(seed ^ 0x5bd1e995ull);
      std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
      const int a = pool[d(pick)];
      int b = a;
      while (b == a) b = pool[d(pick)];
      MixtureExample ex = synthesize_example(id, speakers[a], speakers[b], seed, spec.n_units);
      if (std::isfinite(spec.noise_db)) {
        std::mt19937_64 nrng(seed ^ 0xa5a5a5a5ull);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double sigma = std::sqrt(ex.target.samples.squaredNorm() / ex.target.size() *
                                       std::pow(10.0, spec.noise_db / 10.0));
        for (Eigen::Index k = 0; k < ex.interferer.size(); ++k) {
          ex.interferer.samples(k) = quantize(ex.interferer.samples(k) + sigma * gauss(nrng));
        }
        ex.mixture = Waveform(ex.target.samples + ex.interferer.samples);
      }
      ManifestRow r;
      r.example_id = id;
      r.mixture = name + "/" + id + "_mix.wav";
      r.target = name + "/" + id + "_target.wav";
      r.interferer = name + "/" + id + "_interferer.wav";
      r.visemes = name + "/" + id + "_visemes.avse";
      r.snr_db = ex.snr_db;
      r.split = split;
      r.target_speaker = a;
      r.interferer_speaker = b;
      write_wav(out_dir / r.mixture, ex.mixture);
      write_wav(out_dir / r.target, ex.target);
      write_wav(out_dir / r.interferer, ex.interferer);
      save_embedding(out_dir / r.visemes, visemes_to_embedding(ex.visemes));
      m.rows.push_back(std::move(r));
    }
  };
  emit(Split::kTrain, spec.n_train, part.train);
  emit(Split::kValid, spec.n_valid, part.valid);
  emit(Split::kTest, spec.n_test, part.test);
  write_manifest(out_dir / "manifest.jsonl", m);
  return m;
}

MixtureExample load_example(const ManifestRow& row, const std::filesystem::path& base_dir,
                            int n_units) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  MixtureExample ex;
  ex.example_id = row.example_id;
  ex.snr_db = row.snr_db;
  ex.mixture = read_wav(resolve(row.mixture));
  ex.target = read_wav(resolve(row.target));
  ex.interferer = read_wav(resolve(row.interferer));
  ex.visemes = embedding_to_visemes(load_precomputed(resolve(row.visemes)), n_units);
  AVSEP_REQUIRE(ex.mixture.size() == kClipSamples && ex.target.size() == kClipSamples &&
                    ex.interferer.size() == kClipSamples,
                FormatError, row.example_id + ": clips must hold exactly 2 s of audio");
  AVSEP_REQUIRE(static_cast<int>(ex.visemes.unit_ids.size()) == kClipFrames, FormatError,
                row.example_id + ": lip stream must hold 50 frames");
  const double gap =
      (ex.mixture.samples - ex.target.samples - ex.interferer.samples).cwiseAbs().maxCoeff();
  AVSEP_REQUIRE(gap <= 1e-6, FormatError,
                row.example_id + ": mixture is not target + interferer");
  return ex;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * n);
  auto str = [&](const char* s) { b.insert(b.end(), s, s + 4); };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v));
    b.push_back(static_cast<unsigned char>(v >> 8));
  };
  str("RIFF");
  u32(36 + 2 * n);
  str("WAVE");
  str("fmt ");
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(w.sample_rate));
  u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  u16(2);
  u16(16);
  str("data");
  u32(2 * n);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const auto q = static_cast<std::int16_t>(std::lround(quantize(w.samples(i)) * kPcmScale));
    u16(static_cast<std::uint16_t>(q));
  }
  write_file_atomic(path, b);
}

Waveform read_wav(const std::filesystem::path& path) {
  const auto b = read_file(path);
  auto u32 = [&](std::size_t p) {
    return static_cast<std::uint32_t>(b[p]) | (static_cast<std::uint32_t>(b[p + 1]) << 8) |
           (static_cast<std::uint32_t>(b[p + 2]) << 16) | (static_cast<std::uint32_t>(b[p + 3]) << 24);
  };
  auto u16 = [&](std::size_t p) {
    return static_cast<std::uint16_t>(b[p] | (b[p + 1] << 8));
  };
  AVSEP_REQUIRE(b.size() >= 12 && std::equal(b.begin(), b.begin() + 4, "RIFF") &&
                    std::equal(b.begin() + 8, b.begin() + 12, "WAVE"),
                FormatError, path.string() + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  int rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= b.size()) {
    const std::string id(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos) + 4);
    const std::uint32_t size = u32(pos + 4);
    const std::size_t body = pos + 8;
    AVSEP_REQUIRE(body + size <= b.size(), FormatError, path.string() + ": truncated chunk");
    if (id == "fmt ") {
      AVSEP_REQUIRE(size >= 16 && u16(body) == 1 && u16(body + 2) == 1 && u16(body + 14) == 16,
                    FormatError, path.string() + ": only 16-bit PCM mono is supported");
      rate = static_cast<int>(u32(body + 4));
      have_fmt = true;
    } else if (id == "data") {
      AVSEP_REQUIRE(have_fmt, FormatError, path.string() + ": data before fmt chunk");
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (std::uint32_t i = 0; i < size / 2; ++i) {
        w.samples(i) = static_cast<std::int16_t>(u16(body + 2 * i)) / kPcmScale;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError(path.string() + ": missing data chunk");
}

}  // namespace avsep::data
