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

// Binary embedding container, little-endian:
//   "AVSE" | u32 version (1) | u32 dim | u32 frames | f32 frame_rate |
//   dim * frames f32 values, frame-major (all dims of frame 0 first).

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avsep/types.hpp"

namespace avsep {

inline constexpr char kEmbeddingMagic[4] = {'A', 'V', 'S', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

std::vector<unsigned char> encode_embedding(const EmbeddingSeq& e);
/// Throws FormatError on bad magic, unknown version or a size mismatch.
EmbeddingSeq decode_embedding(const std::vector<unsigned char>& bytes);

void save_embedding(const std::filesystem::path& path, const EmbeddingSeq& e);
EmbeddingSeq load_precomputed(const std::filesystem::path& path);

/// Viseme streams travel as dim = 1 containers with integer-valued rows.
EmbeddingSeq visemes_to_embedding(const VisemeStream& v);
VisemeStream embedding_to_visemes(const EmbeddingSeq& e, int n_units);

/// Reads `frame,unit_id` CSV rows (optional header line).
VisemeStream load_viseme_csv(const std::filesystem::path& path, int n_units);

/// Whole-file helpers shared by the IO code.
std::vector<unsigned char> read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace avsep
