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
#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trialmesh/environment.hpp"
#include "trialmesh/error.hpp"

namespace trialmesh {

struct TrialConfig {
  int n_agents = 2;
  bool include_human = false;
  int max_ticks = 50;
  int tick_deadline_ms = 1000;
  env::EnvironmentSpec env_spec;
  std::uint64_t seed = 0;

  std::size_t actor_count() const {
    return static_cast<std::size_t>(n_agents) + (include_human ? 1 : 0);
  }

  friend bool operator==(const TrialConfig&, const TrialConfig&) = default;
};

inline void validate(const TrialConfig& c) {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (c.n_agents < 1) bad("n_agents must be >= 1");
  if (c.max_ticks < 1) bad("max_ticks must be >= 1");
  if (c.tick_deadline_ms <= 0) bad("tick_deadline_ms must be > 0");
  try {
    env::validate(c.env_spec, c.actor_count());
  } catch (const Error& e) {
    bad(std::string("env_spec: ") + e.what());
  }
}

inline void to_json(nlohmann::json& j, const TrialConfig& c) {
  j = nlohmann::json{{"n_agents", c.n_agents},
                     {"include_human", c.include_human},
                     {"max_ticks", c.max_ticks},
                     {"tick_deadline_ms", c.tick_deadline_ms},
                     {"env_spec", c.env_spec},
                     {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, TrialConfig& c) {
  static constexpr std::array<std::string_view, 6> kKeys{
      "n_agents", "include_human", "max_ticks", "tick_deadline_ms", "env_spec", "seed"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "trial config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorCode::InvalidConfig, "unknown key " + key);
    }
  }
  TrialConfig d;
  try {
    c.n_agents = j.value("n_agents", d.n_agents);
    c.include_human = j.value("include_human", d.include_human);
    c.max_ticks = j.value("max_ticks", d.max_ticks);
    c.tick_deadline_ms = j.value("tick_deadline_ms", d.tick_deadline_ms);
    c.env_spec = j.contains("env_spec") ? j.at("env_spec").get<env::EnvironmentSpec>() : d.env_spec;
    c.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

}  // namespace trialmesh
