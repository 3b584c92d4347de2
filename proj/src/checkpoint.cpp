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

// Checkpoint layout, little-endian:
//   "AVCK" | u32 version | u64 config hash | u32 n + config text |
//   i32 epoch | f64 best | f64 lr | i64 adam step | i32 bad epochs |
//   u32 tensor count | per tensor: u32 n + name, u32 rows, u32 cols,
//   u8 has_moments, f64 values, then f64 m and v when present.

#include <bit>
#include <cstring>
#include <set>

#include "avsep/container.hpp"
#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace avsep::train {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<unsigned char>& bytes() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}
  void need(std::size_t n) const {
    AVSEP_REQUIRE(pos_ + n <= b_.size(), FormatError, "checkpoint: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  void values(std::vector<double>& out, std::size_t n) {
    need(8 * n);
    out.resize(n);
    for (auto& x : out) x = f64();
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  for (char ch : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(kCheckpointVersion);
  w.u64(c.config_hash);
  w.str(c.config_text);
  w.u32(static_cast<std::uint32_t>(c.epoch));
  w.f64(c.best_valid);
  w.f64(c.lr);
  w.u64(static_cast<std::uint64_t>(c.adam_step));
  w.u32(static_cast<std::uint32_t>(c.bad_epochs));
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    const auto n = static_cast<std::size_t>(t.rows * t.cols);
    AVSEP_REQUIRE(t.value.size() == n, InvalidArgument, "checkpoint: tensor " + t.name + " has wrong size");
    const bool has = !t.m.empty();
    AVSEP_REQUIRE(!has || (t.m.size() == n && t.v.size() == n), InvalidArgument,
                  "checkpoint: moments of " + t.name + " have wrong size");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.rows));
    w.u32(static_cast<std::uint32_t>(t.cols));
    w.u8(has ? 1 : 0);
    for (double x : t.value) w.f64(x);
    if (has) {
      for (double x : t.m) w.f64(x);
      for (double x : t.v) w.f64(x);
    }
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  r.need(4);
  AVSEP_REQUIRE(std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, FormatError, "checkpoint: bad magic");
  for (int i = 0; i < 4; ++i) r.u8();
  AVSEP_REQUIRE(r.u32() == kCheckpointVersion, FormatError, "checkpoint: unsupported version");
  Checkpoint c;
  c.config_hash = r.u64();
  c.config_text = r.str();
  c.epoch = static_cast<int>(r.u32());
  c.best_valid = r.f64();
  c.lr = r.f64();
  c.adam_step = static_cast<long>(r.u64());
  c.bad_epochs = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.str();
    AVSEP_REQUIRE(names.insert(t.name).second, FormatError, "checkpoint: duplicate tensor " + t.name);
    t.rows = r.u32();
    t.cols = r.u32();
    const bool has = r.u8() != 0;
    const auto n = static_cast<std::size_t>(t.rows * t.cols);
    r.values(t.value, n);
    if (has) {
      r.values(t.m, n);
      r.values(t.v, n);
    }
    c.tensors.push_back(std::move(t));
  }
  AVSEP_REQUIRE(r.done(), FormatError, "checkpoint: trailing bytes");
  AVSEP_REQUIRE(fnv1a(c.config_text) == c.config_hash, IncompatibleError,
                "checkpoint: config hash does not match the stored config");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, const Adam<T>* adam, int epoch, double best_valid, double lr,
                           int bad_epochs) {
  Checkpoint c;
  c.config_text = model.config().serialize();
  c.config_hash = fnv1a(c.config_text);
  c.epoch = epoch;
  c.best_valid = best_valid;
  c.lr = lr;
  c.adam_step = adam ? adam->steps() : 0;
  c.bad_epochs = bad_epochs;
  auto flat = [](const ag::Matrix<T>& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) out[i] = static_cast<double>(m.data()[i]);
    return out;
  };
  for (auto* ps : model.param_sets()) {
    for (const auto& p : *ps) {
      TensorRecord t;
      t.name = p.name;
      t.rows = p.value.rows();
      t.cols = p.value.cols();
      t.value = flat(p.value);
      if (adam) {
        auto it = adam->moments().find(p.name);
        if (it != adam->moments().end()) {
          t.m = flat(it->second.first);
          t.v = flat(it->second.second);
        }
      }
      c.tensors.push_back(std::move(t));
    }
  }
  return c;
}

template <typename T>
void restore_checkpoint(const Checkpoint& c, Model<T>& model, Adam<T>* adam) {
  AVSEP_REQUIRE(c.config_hash == model.config().hash(), IncompatibleError,
                "checkpoint: config hash differs from the model's configuration");
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : c.tensors) by_name[t.name] = &t;
  std::size_t used = 0;
  auto unflat = [](const std::vector<double>& v, Eigen::Index r, Eigen::Index cols) {
    ag::Matrix<T> m(r, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(v[static_cast<std::size_t>(i)]);
    return m;
  };
  for (auto* ps : model.param_sets()) {
    for (auto& p : *ps) {
      auto it = by_name.find(p.name);
      AVSEP_REQUIRE(it != by_name.end(), IncompatibleError, "checkpoint: missing tensor " + p.name);
      const TensorRecord& t = *it->second;
      AVSEP_REQUIRE(t.rows == p.value.rows() && t.cols == p.value.cols(), IncompatibleError,
                    "checkpoint: shape mismatch for " + p.name);
      p.value = unflat(t.value, t.rows, t.cols);
      if (adam && !t.m.empty()) {
        adam->moments()[p.name] = {unflat(t.m, t.rows, t.cols), unflat(t.v, t.rows, t.cols)};
      }
      ++used;
    }
  }
  AVSEP_REQUIRE(used == c.tensors.size(), IncompatibleError, "checkpoint: holds tensors the model lacks");
  if (adam) adam->set_steps(c.adam_step);
}

template Checkpoint make_checkpoint(Model<float>&, const Adam<float>*, int, double, double, int);
template Checkpoint make_checkpoint(Model<double>&, const Adam<double>*, int, double, double, int);
template void restore_checkpoint(const Checkpoint&, Model<float>&, Adam<float>*);
template void restore_checkpoint(const Checkpoint&, Model<double>&, Adam<double>*);

}  // namespace avsep::train
