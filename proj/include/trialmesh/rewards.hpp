// Copyright 2026 The TrialMesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "trialmesh/error.hpp"
#include "trialmesh/protocol.hpp"

namespace trialmesh {

// One source's opinion of an actor's reward for one tick.
struct RewardContribution {
  std::int64_t target_actor = 0;
  double value = 0.0;
  double confidence = 1.0;
  ActorRef source;
  std::uint64_t tick_id = 0;    // tick the contribution is attributed to (arrival tick)
  std::uint64_t sent_tick = 0;  // tick the sender stamped on its frame

  friend bool operator==(const RewardContribution&, const RewardContribution&) = default;
};

struct FusedReward {
  std::int64_t target_actor = 0;
  std::uint64_t tick_id = 0;
  double value = 0.0;
  std::size_t n_sources = 0;
  bool no_signal = false;

  friend bool operator==(const FusedReward&, const FusedReward&) = default;
};

inline void check_contribution(const RewardContribution& c) {
  if (!std::isfinite(c.value)) throw Error(ErrorCode::InvalidContribution, "value must be finite");
  if (!(c.confidence >= 0.0 && c.confidence <= 1.0)) {
    throw Error(ErrorCode::InvalidContribution, "confidence must lie in [0, 1]");
  }
}

// Confidence-weighted mean of the contributions for one (actor, tick):
//   value = sum(v_i * c_i) / sum(c_i), or 0 with no_signal when sum(c_i) = 0.
// Terms are summed in a canonical order so the result does not depend on the
// order of `items`, and the result is clamped to the hull of the inputs.
inline FusedReward combine_rewards(std::int64_t target_actor, std::uint64_t tick_id,
                                   std::span<const RewardContribution> items) {
  FusedReward out{target_actor, tick_id, 0.0, items.size(), false};
  std::vector<std::pair<double, double>> terms;
  terms.reserve(items.size());
  for (const auto& c : items) {
    if (c.target_actor != target_actor || c.tick_id != tick_id) {
      throw Error(ErrorCode::MixedTarget, "contributions disagree on actor or tick");
    }
    check_contribution(c);
    terms.emplace_back(c.value, c.confidence);
  }
  std::sort(terms.begin(), terms.end());
  double weighted = 0.0, total = 0.0;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& [v, c] : terms) {
    weighted += v * c;
    total += c;
    if (c > 0.0) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  if (total > 0.0) {
    out.value = std::clamp(weighted / total, lo, hi);
  } else {
    out.no_signal = true;
  }
  return out;
}

inline FusedReward combine_rewards(std::span<const RewardContribution> items) {
  if (items.empty()) return FusedReward{0, 0, 0.0, 0, true};
  return combine_rewards(items.front().target_actor, items.front().tick_id, items);
}

inline Json to_json(const RewardContribution& c) {
  return Json{{"target_actor", c.target_actor}, {"value", c.value},
              {"confidence", c.confidence},     {"source", actor_ref_to_json(c.source)},
              {"tick_id", c.tick_id},           {"sent_tick", c.sent_tick}};
}

inline RewardContribution contribution_from_json(const Json& j) {
  auto source = actor_ref_from_json(j.at("source"));
  if (!source) throw Error(ErrorCode::MalformedPayload, "bad contribution source");
  return RewardContribution{j.at("target_actor").get<std::int64_t>(), j.at("value").get<double>(),
                            j.at("confidence").get<double>(), *source,
                            j.at("tick_id").get<std::uint64_t>(), j.value("sent_tick", std::uint64_t{0})};
}

inline Json to_json(const FusedReward& f) {
  return Json{{"target_actor", f.target_actor}, {"tick_id", f.tick_id}, {"value", f.value},
              {"n_sources", f.n_sources},       {"no_signal", f.no_signal}};
}

inline FusedReward fused_from_json(const Json& j) {
  return FusedReward{j.at("target_actor").get<std::int64_t>(), j.at("tick_id").get<std::uint64_t>(),
                     j.at("value").get<double>(), j.at("n_sources").get<std::size_t>(),
                     j.at("no_signal").get<bool>()};
}

}  // namespace trialmesh
