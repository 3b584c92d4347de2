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

#include "avsep/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "avsep/errors.hpp"

namespace avsep {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

void put_f32(std::vector<unsigned char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
float get_f32(const std::vector<unsigned char>& in, std::size_t pos) {
  return std::bit_cast<float>(get_u32(in, pos));
}

constexpr std::size_t kHeaderBytes = 20;

}  // namespace

std::vector<unsigned char> encode_embedding(const EmbeddingSeq& e) {
  AVSEP_REQUIRE(e.dim() > 0 && e.frames() > 0, InvalidArgument, "embedding: empty sequence");
  std::vector<unsigned char> out(kEmbeddingMagic, kEmbeddingMagic + 4);
  out.reserve(kHeaderBytes + 4 * e.data.size());
  put_u32(out, kEmbeddingVersion);
  put_u32(out, static_cast<std::uint32_t>(e.dim()));
  put_u32(out, static_cast<std::uint32_t>(e.frames()));
  put_f32(out, static_cast<float>(e.frame_rate));
  for (Eigen::Index f = 0; f < e.frames(); ++f) {
    for (Eigen::Index d = 0; d < e.dim(); ++d) put_f32(out, static_cast<float>(e.data(d, f)));
  }
  return out;
}

EmbeddingSeq decode_embedding(const std::vector<unsigned char>& bytes) {
  AVSEP_REQUIRE(bytes.size() >= kHeaderBytes, FormatError, "embedding: truncated header");
  AVSEP_REQUIRE(std::memcmp(bytes.data(), kEmbeddingMagic, 4) == 0, FormatError,
                "embedding: bad magic");
  AVSEP_REQUIRE(get_u32(bytes, 4) == kEmbeddingVersion, FormatError, "embedding: unsupported version");
  const std::uint32_t dim = get_u32(bytes, 8);
  const std::uint32_t frames = get_u32(bytes, 12);
  const float rate = get_f32(bytes, 16);
  AVSEP_REQUIRE(dim > 0 && frames > 0, FormatError, "embedding: empty dimensions");
  AVSEP_REQUIRE(std::isfinite(rate) && rate > 0.0f, FormatError, "embedding: invalid frame rate");
  const std::size_t expected = kHeaderBytes + 4ull * dim * frames;
  AVSEP_REQUIRE(bytes.size() == expected, FormatError,
                "embedding: payload size does not match dim * frames");
  EmbeddingSeq e;
  e.frame_rate = rate;
  e.data.resize(dim, frames);
  std::size_t pos = kHeaderBytes;
  for (std::uint32_t f = 0; f < frames; ++f) {
    for (std::uint32_t d = 0; d < dim; ++d, pos += 4) e.data(d, f) = get_f32(bytes, pos);
  }
  return e;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  AVSEP_REQUIRE(in.good(), IoError, "cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    AVSEP_REQUIRE(out.good(), IoError, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    AVSEP_REQUIRE(out.good(), IoError, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  AVSEP_REQUIRE(!ec, IoError, "cannot rename " + tmp + ": " + ec.message());
}

void save_embedding(const std::filesystem::path& path, const EmbeddingSeq& e) {
  write_file_atomic(path, encode_embedding(e));
}

EmbeddingSeq load_precomputed(const std::filesystem::path& path) {
  return decode_embedding(read_file(path));
}

EmbeddingSeq visemes_to_embedding(const VisemeStream& v) {
  EmbeddingSeq e;
  e.frame_rate = v.frame_rate;
  e.data.resize(1, static_cast<Eigen::Index>(v.unit_ids.size()));
  for (std::size_t i = 0; i < v.unit_ids.size(); ++i) e.data(0, i) = v.unit_ids[i];
  return e;
}

VisemeStream embedding_to_visemes(const EmbeddingSeq& e, int n_units) {
  AVSEP_REQUIRE(e.dim() == 1, FormatError, "visemes: container must have dim = 1");
  VisemeStream v;
  v.frame_rate = e.frame_rate;
  v.n_units = n_units;
  for (Eigen::Index f = 0; f < e.frames(); ++f) {
    const double x = e.data(0, f);
    AVSEP_REQUIRE(x == std::floor(x) && x >= 0 && x < n_units, FormatError,
                  "visemes: unit id out of range or not an integer");
    v.unit_ids.push_back(static_cast<int>(x));
  }
  return v;
}

VisemeStream load_viseme_csv(const std::filesystem::path& path, int n_units) {
  std::ifstream in(path);
  AVSEP_REQUIRE(in.good(), IoError, "cannot open " + path.string());
  VisemeStream v;
  v.n_units = n_units;
  std::string line;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (expected == 0 && line.find_first_not_of("0123456789,- \r") != std::string::npos) continue;
    std::istringstream ss(line);
    int frame = -1, unit = -1;
    char comma = 0;
    AVSEP_REQUIRE((ss >> frame >> comma >> unit) && comma == ',', FormatError,
                  "visemes: malformed CSV row '" + line + "'");
    AVSEP_REQUIRE(frame == expected, FormatError, "visemes: CSV frames out of order");
    AVSEP_REQUIRE(unit >= 0 && unit < n_units, FormatError, "visemes: unit id out of range");
    v.unit_ids.push_back(unit);
    ++expected;
  }
  return v;
}

}  // namespace avsep
