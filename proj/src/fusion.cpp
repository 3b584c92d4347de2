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

#include "avsep/fusion.hpp"

#include <cmath>

namespace avsep::fusion {

void Dominance::validate() const {
  AVSEP_REQUIRE(query != kv, InvalidArgument,
                "dominance: query and key/value must use different modalities");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kCrossAttention:
      return "cross_attention";
    case Strategy::kConcatenation:
      return "concatenation";
    case Strategy::kSummation:
      return "summation";
  }
  return "?";
}

std::string to_string(Modality m) { return m == Modality::kAudio ? "audio" : "video"; }

std::string to_string(const Dominance& d) { return to_string(d.query) + "/" + to_string(d.kv); }

Strategy parse_strategy(const std::string& s) {
  if (s == "cross_attention") return Strategy::kCrossAttention;
  if (s == "concatenation") return Strategy::kConcatenation;
  if (s == "summation") return Strategy::kSummation;
  throw InvalidArgument("unknown fusion strategy '" + s + "'");
}

Modality parse_modality(const std::string& s) {
  if (s == "audio") return Modality::kAudio;
  if (s == "video") return Modality::kVideo;
  throw InvalidArgument("unknown modality '" + s + "'");
}

Dominance parse_dominance(const std::string& s) {
  const auto slash = s.find('/');
  AVSEP_REQUIRE(slash != std::string::npos, InvalidArgument,
                "dominance must look like query/kv, got '" + s + "'");
  Dominance d{parse_modality(s.substr(0, slash)), parse_modality(s.substr(slash + 1))};
  d.validate();
  return d;
}

AttentionResult cross_modal_attention(const Eigen::MatrixXd& query, const Eigen::MatrixXd& kv,
                                      const AttentionWeights& params) {
  const Eigen::Index d = query.cols();
  AVSEP_REQUIRE(query.rows() >= 1 && kv.rows() >= 1, InvalidArgument,
                "cross_modal_attention: empty input");
  AVSEP_REQUIRE(kv.cols() == d && params.w_q.rows() == d && params.w_q.cols() == d &&
                    params.w_k.rows() == d && params.w_k.cols() == d && params.w_v.rows() == d &&
                    params.w_v.cols() == d,
                InvalidArgument, "cross_modal_attention: dimension mismatch");
  const Eigen::MatrixXd q = query * params.w_q;
  const Eigen::MatrixXd k = kv * params.w_k;
  const Eigen::MatrixXd v = kv * params.w_v;
  Eigen::MatrixXd s = (q * k.transpose()) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
  return {s * v, s};
}

}  // namespace avsep::fusion
