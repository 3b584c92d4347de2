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

// Synthetic audio-visual corpus. A toy speaker is an f0 plus a harmonic
// timbre; a unit is a resonance centre shared by all speakers. Each 40 ms
// video frame carries one unit, so lip content and audio content agree by
// construction while voice identity stays speaker-specific.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "avsep/types.hpp"

namespace avsep::data {

inline constexpr int kDefaultUnits = 12;
inline constexpr int kClipFrames = 50;  // 2 s at 25 Hz
inline constexpr int kClipSamples = kClipFrames * kVideoFrameSamples;

struct ToySpeakerSpec {
  int speaker_id = 0;
  double f0 = 150.0;
  std::vector<double> timbre_weights;  // amplitude of harmonic h + 1
  std::vector<double> phases;
  std::uint64_t seed = 0;
};

/// Deterministic speaker drawn from (seed, id): f0 uniform in [90, 300] Hz.
ToySpeakerSpec make_speaker(int speaker_id, std::uint64_t seed);

/// Resonance centre of a unit, log-spaced over 300-3600 Hz.
double unit_resonance_hz(int unit, int n_units = kDefaultUnits);

/// 640 samples per unit frame, 5 ms linear gain cross-fades at frame starts,
/// peak-normalized to 0.5.
Waveform render_units(const VisemeStream& units, const ToySpeakerSpec& spk);

struct Mixture {
  Waveform mixture;
  Waveform interferer;  // scaled
  double scale = 1.0;
};

/// Scales s2 so the target-to-interferer ratio equals snr_db in [-5, 5].
Mixture make_mixture(const Waveform& s1, const Waveform& s2, double snr_db);

enum class Split { kTrain, kValid, kTest };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestRow {
  std::string example_id;
  std::string mixture;
  std::string target;
  std::string interferer;
  std::string visemes;
  double snr_db = 0.0;
  Split split = Split::kTrain;
  int target_speaker = -1;
  int interferer_speaker = -1;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::vector<ManifestRow> split(Split s) const;
};

/// JSON lines, one row per line. Throws FormatError on malformed rows or
/// duplicate example ids.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

struct CorpusSpec {
  int n_speakers = 8;
  int n_train = 500;
  int n_valid = 50;
  int n_test = 50;
  std::uint64_t seed = 7;
  int n_units = kDefaultUnits;
  /// Optional white noise (dB relative to the target) folded into the
  /// interferer track; disabled when not finite.
  double noise_db = -std::numeric_limits<double>::infinity();
};

/// Speaker ids assigned to each split; always disjoint between train and test.
struct SpeakerPartition {
  std::vector<int> train, valid, test;
};
SpeakerPartition partition_speakers(int n_speakers, bool need_valid);

Manifest build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

struct MixtureExample {
  Waveform mixture;
  Waveform target;
  Waveform interferer;
  VisemeStream visemes;
  double snr_db = 0.0;
  std::string example_id;
};

/// Loads one row; verifies shapes and mixture = target + interferer.
MixtureExample load_example(const ManifestRow& row, const std::filesystem::path& base_dir,
                            int n_units = kDefaultUnits);

/// Renders an example in memory without touching disk.
MixtureExample synthesize_example(const std::string& example_id, const ToySpeakerSpec& target,
                                  const ToySpeakerSpec& interferer, std::uint64_t seed,
                                  int n_units = kDefaultUnits);

// 16-bit PCM mono WAV.
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

/// Per-example seed derived from the corpus seed and the example id.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& key);

}  // namespace avsep::data
