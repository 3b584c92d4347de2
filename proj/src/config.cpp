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

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "avsep/errors.hpp"
#include "avsep/train.hpp"

namespace avsep::train {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::array<int, 3> parse_channels(const std::string& key, const std::string& v) {
  std::array<int, 3> out{};
  std::stringstream ss(v);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 3) throw ConfigError("config: '" + key + "' expects three comma-separated integers");
    out[i++] = parse_number<int>(key, trim(item));
  }
  if (i != 3) throw ConfigError("config: '" + key + "' expects three comma-separated integers");
  return out;
}

// Wraps a parser so domain errors surface as configuration errors.
template <typename F>
auto as_config(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config: '" + key + "': " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

ExperimentConfig ExperimentConfig::paper() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig c;
  c.separator = SeparatorConfig::toy();
  c.synthesizer = SynthesizerConfig::toy();
  c.audio_frontend.embed_dim = 64;
  c.video_frontend.embed_dim = 64;
  c.batch_size = 8;
  c.optimizer.initial_lr = 1e-3;
  return c;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  check(batch_size > 0, "batch_size must be positive");
  check(max_epochs > 0, "max_epochs must be positive");
  check(warmup_epochs >= 0, "warmup_epochs must be >= 0");
  check(max_steps >= 0, "max_steps must be >= 0");
  check(time_budget_s >= 0.0, "time_budget_s must be >= 0");
  check(optimizer.initial_lr > 0.0, "optimizer.initial_lr must be positive");
  check(optimizer.plateau_patience > 0, "optimizer.plateau_patience must be positive");
  check(optimizer.stop_patience > 0, "optimizer.stop_patience must be positive");
  check(optimizer.halving_factor > 0.0 && optimizer.halving_factor < 1.0,
        "optimizer.halving_factor must lie in (0, 1)");
  check(optimizer.min_improvement >= 0.0, "optimizer.min_improvement must be >= 0");
  check(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1 must lie in [0, 1)");
  check(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2 must lie in [0, 1)");
  check(optimizer.adam_eps > 0.0, "optimizer.adam_eps must be positive");
  check(optimizer.grad_clip >= 0.0, "optimizer.grad_clip must be >= 0");
  check(!flags.predict_complete || flags.use_synthesizer,
        "ablation.predict_complete requires ablation.use_synthesizer");
  check(audio_frontend.kind == FrontendKind::kOracleAudio,
        "frontends.audio_kind must be oracle_audio (the audio embedder is differentiated)");
  check(video_frontend.kind != FrontendKind::kOracleAudio, "frontends.video_kind cannot be oracle_audio");
  check(audio_frontend.embed_dim > 0 && audio_frontend.embed_dim == video_frontend.embed_dim,
        "frontends.embed_dim must be positive");
  check(audio_frontend.n_units > 0, "frontends.n_units must be positive");
  check(separator.video_dim == video_frontend.embed_dim && synthesizer.video_dim == video_frontend.embed_dim,
        "model video_dim must equal frontends.embed_dim");
  as_config("separator", [&] {
    separator.validate();
    return 0;
  });
  as_config("synthesizer", [&] {
    synthesizer.validate();
    return 0;
  });
  as_config("loss", [&] {
    weights.validate();
    return 0;
  });
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream o;
  const auto& s = separator;
  const auto& y = synthesizer;
  o << "seed = " << seed << "\n"
    << "batch_size = " << batch_size << "\n"
    << "max_epochs = " << max_epochs << "\n"
    << "max_steps = " << max_steps << "\n"
    << "time_budget_s = " << fmt(time_budget_s) << "\n"
    << "warmup_epochs = " << warmup_epochs << "\n"
    << "separator.n_channels = " << s.n_channels << "\n"
    << "separator.chunk_len = " << s.chunk_len << "\n"
    << "separator.n_intra = " << s.n_intra << "\n"
    << "separator.n_inter = " << s.n_inter << "\n"
    << "separator.n_repeats = " << s.n_repeats << "\n"
    << "separator.encoder_kernel = " << s.encoder_kernel << "\n"
    << "separator.encoder_stride = " << s.encoder_stride << "\n"
    << "separator.n_heads = " << s.n_heads << "\n"
    << "separator.ff_dim = " << s.ff_dim << "\n"
    << "separator.fusion = " << fusion::to_string(s.fusion) << "\n"
    << "separator.dominance = " << fusion::to_string(s.dominance) << "\n"
    << "synthesizer.proj_dim = " << y.proj_dim << "\n"
    << "synthesizer.conv_channels = " << y.conv_channels[0] << "," << y.conv_channels[1] << ","
    << y.conv_channels[2] << "\n"
    << "synthesizer.conv_kernel = " << y.conv_kernel << "\n"
    << "synthesizer.fusion = " << fusion::to_string(y.fusion) << "\n"
    << "synthesizer.dominance = " << fusion::to_string(y.dominance) << "\n"
    << "frontends.audio_kind = " << to_string(audio_frontend.kind) << "\n"
    << "frontends.video_kind = " << to_string(video_frontend.kind) << "\n"
    << "frontends.embed_dim = " << audio_frontend.embed_dim << "\n"
    << "frontends.seed = " << audio_frontend.seed << "\n"
    << "frontends.n_units = " << audio_frontend.n_units << "\n"
    << "loss.lambda = " << fmt(weights.lambda) << "\n"
    << "loss.margin = " << fmt(weights.margin) << "\n"
    << "loss.epsilon = " << fmt(weights.epsilon) << "\n"
    << "loss.clamp_db = " << fmt(weights.clamp_db) << "\n"
    << "optimizer.initial_lr = " << fmt(optimizer.initial_lr) << "\n"
    << "optimizer.plateau_patience = " << optimizer.plateau_patience << "\n"
    << "optimizer.halving_factor = " << fmt(optimizer.halving_factor) << "\n"
    << "optimizer.stop_patience = " << optimizer.stop_patience << "\n"
    << "optimizer.min_improvement = " << fmt(optimizer.min_improvement) << "\n"
    << "optimizer.beta1 = " << fmt(optimizer.beta1) << "\n"
    << "optimizer.beta2 = " << fmt(optimizer.beta2) << "\n"
    << "optimizer.adam_eps = " << fmt(optimizer.adam_eps) << "\n"
    << "optimizer.grad_clip = " << fmt(optimizer.grad_clip) << "\n"
    << "ablation.use_synthesizer = " << fmt_bool(flags.use_synthesizer) << "\n"
    << "ablation.use_matching_loss = " << fmt_bool(flags.use_matching_loss) << "\n"
    << "ablation.predict_complete = " << fmt_bool(flags.predict_complete) << "\n";
  return o.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c = paper();
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config: duplicate key '" + key + "'");
    auto& s = c.separator;
    auto& y = c.synthesizer;
    auto& o = c.optimizer;
    auto i = [&] { return parse_number<int>(key, v); };
    auto d = [&] { return parse_number<double>(key, v); };
    auto b = [&] { return parse_bool(key, v); };
    if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "batch_size") c.batch_size = i();
    else if (key == "max_epochs") c.max_epochs = i();
    else if (key == "max_steps") c.max_steps = parse_number<long>(key, v);
    else if (key == "time_budget_s") c.time_budget_s = d();
    else if (key == "warmup_epochs") c.warmup_epochs = i();
    else if (key == "separator.n_channels") s.n_channels = i();
    else if (key == "separator.chunk_len") s.chunk_len = i();
    else if (key == "separator.n_intra") s.n_intra = i();
    else if (key == "separator.n_inter") s.n_inter = i();
    else if (key == "separator.n_repeats") s.n_repeats = i();
    else if (key == "separator.encoder_kernel") s.encoder_kernel = i();
    else if (key == "separator.encoder_stride") s.encoder_stride = i();
    else if (key == "separator.n_heads") s.n_heads = i();
    else if (key == "separator.ff_dim") s.ff_dim = i();
    else if (key == "separator.fusion") s.fusion = as_config(key, [&] { return fusion::parse_strategy(v); });
    else if (key == "separator.dominance") s.dominance = as_config(key, [&] { return fusion::parse_dominance(v); });
    else if (key == "synthesizer.proj_dim") y.proj_dim = i();
    else if (key == "synthesizer.conv_channels") y.conv_channels = parse_channels(key, v);
    else if (key == "synthesizer.conv_kernel") y.conv_kernel = i();
    else if (key == "synthesizer.fusion") y.fusion = as_config(key, [&] { return fusion::parse_strategy(v); });
    else if (key == "synthesizer.dominance") y.dominance = as_config(key, [&] { return fusion::parse_dominance(v); });
    else if (key == "frontends.audio_kind") c.audio_frontend.kind = as_config(key, [&] { return parse_frontend_kind(v); });
    else if (key == "frontends.video_kind") c.video_frontend.kind = as_config(key, [&] { return parse_frontend_kind(v); });
    else if (key == "frontends.embed_dim") c.audio_frontend.embed_dim = c.video_frontend.embed_dim = i();
    else if (key == "frontends.seed") c.audio_frontend.seed = c.video_frontend.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "frontends.n_units") c.audio_frontend.n_units = c.video_frontend.n_units = i();
    else if (key == "loss.lambda") c.weights.lambda = d();
    else if (key == "loss.margin") c.weights.margin = d();
    else if (key == "loss.epsilon") c.weights.epsilon = d();
    else if (key == "loss.clamp_db") c.weights.clamp_db = d();
    else if (key == "optimizer.initial_lr") o.initial_lr = d();
    else if (key == "optimizer.plateau_patience") o.plateau_patience = i();
    else if (key == "optimizer.halving_factor") o.halving_factor = d();
    else if (key == "optimizer.stop_patience") o.stop_patience = i();
    else if (key == "optimizer.min_improvement") o.min_improvement = d();
    else if (key == "optimizer.beta1") o.beta1 = d();
    else if (key == "optimizer.beta2") o.beta2 = d();
    else if (key == "optimizer.adam_eps") o.adam_eps = d();
    else if (key == "optimizer.grad_clip") o.grad_clip = d();
    else if (key == "ablation.use_synthesizer") c.flags.use_synthesizer = b();
    else if (key == "ablation.use_matching_loss") c.flags.use_matching_loss = b();
    else if (key == "ablation.predict_complete") c.flags.predict_complete = b();
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  // The lip embedding width is a frontend property shared by both stages.
  c.separator.video_dim = c.video_frontend.embed_dim;
  c.synthesizer.video_dim = c.video_frontend.embed_dim;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(serialize()); }

}  // namespace avsep::train
