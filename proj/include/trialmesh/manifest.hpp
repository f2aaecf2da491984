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
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trialmesh/algorithms/learners.hpp"
#include "trialmesh/error.hpp"
#include "trialmesh/trial_config.hpp"

namespace trialmesh {

namespace detail {

template <std::size_t N>
void reject_unknown_keys(const nlohmann::json& j, const std::array<std::string_view, N>& keys,
                         ErrorCode code, std::string_view what) {
  if (!j.is_object()) throw Error(code, std::string(what) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(code, "unknown key " + std::string(what) + "." + key);
    }
  }
}

}  // namespace detail

}  // namespace trialmesh

namespace trialmesh::algo {

inline void to_json(nlohmann::json& j, const Hyperparameters& h) {
  j = nlohmann::json{{"gamma", h.gamma},
                     {"epsilon_start", h.epsilon_start},
                     {"epsilon_end", h.epsilon_end},
                     {"epsilon_anneal_steps", h.epsilon_anneal_steps},
                     {"buffer_capacity", h.buffer_capacity},
                     {"batch_size", h.batch_size},
                     {"target_sync", h.target_sync},
                     {"lr_critic", h.lr_critic},
                     {"lr_actor", h.lr_actor},
                     {"hidden", h.hidden},
                     {"mixer_embed", h.mixer_embed},
                     {"train_every", h.train_every}};
}

// Keys present override the defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, Hyperparameters& h) {
  static constexpr std::array<std::string_view, 12> kKeys{
      "gamma",     "epsilon_start", "epsilon_end", "epsilon_anneal_steps", "buffer_capacity", "batch_size",
      "target_sync", "lr_critic",   "lr_actor",    "hidden",               "mixer_embed",     "train_every"};
  trialmesh::detail::reject_unknown_keys(j, kKeys, ErrorCode::InvalidManifest, "hyperparameters");
  Hyperparameters d;
  try {
    h.gamma = j.value("gamma", d.gamma);
    h.epsilon_start = j.value("epsilon_start", d.epsilon_start);
    h.epsilon_end = j.value("epsilon_end", d.epsilon_end);
    h.epsilon_anneal_steps = j.value("epsilon_anneal_steps", d.epsilon_anneal_steps);
    h.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
    h.batch_size = j.value("batch_size", d.batch_size);
    h.target_sync = j.value("target_sync", d.target_sync);
    h.lr_critic = j.value("lr_critic", d.lr_critic);
    h.lr_actor = j.value("lr_actor", d.lr_actor);
    h.hidden = j.value("hidden", d.hidden);
    h.mixer_embed = j.value("mixer_embed", d.mixer_embed);
    h.train_every = j.value("train_every", d.train_every);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidManifest, e.what());
  }
  if (!(h.gamma >= 0.0 && h.gamma <= 1.0)) throw Error(ErrorCode::InvalidManifest, "gamma must lie in [0, 1]");
  if (h.batch_size == 0 || h.buffer_capacity == 0 || h.target_sync == 0 || h.train_every == 0) {
    throw Error(ErrorCode::InvalidManifest, "batch_size, buffer_capacity, target_sync, train_every must be > 0");
  }
  if (h.hidden.empty()) throw Error(ErrorCode::InvalidManifest, "hidden needs at least one layer");
}

}  // namespace trialmesh::algo

namespace trialmesh {

inline constexpr const char* kManifestFile = "trialmesh.json";

struct ProjectManifest {
  std::string name = "trialmesh-project";
  TrialConfig trial;
  algo::Algorithm algorithm = algo::Algorithm::D3Maddpg;
  algo::Hyperparameters hyperparameters;

  friend bool operator==(const ProjectManifest&, const ProjectManifest&) = default;
};

inline void to_json(nlohmann::json& j, const ProjectManifest& m) {
  j = nlohmann::json{{"name", m.name},
                     {"trial", m.trial},
                     {"algorithm", std::string(algo::to_string(m.algorithm))},
                     {"hyperparameters", m.hyperparameters}};
}

inline void from_json(const nlohmann::json& j, ProjectManifest& m) {
  static constexpr std::array<std::string_view, 4> kKeys{"name", "trial", "algorithm", "hyperparameters"};
  detail::reject_unknown_keys(j, kKeys, ErrorCode::InvalidManifest, "manifest");
  ProjectManifest d;
  try {
    m.name = j.value("name", d.name);
    m.trial = j.contains("trial") ? j.at("trial").get<TrialConfig>() : d.trial;
    m.hyperparameters =
        j.contains("hyperparameters") ? j.at("hyperparameters").get<algo::Hyperparameters>() : d.hyperparameters;
    if (j.contains("algorithm")) {
      auto a = algo::parse_algorithm(j.at("algorithm").get<std::string>());
      if (!a) throw Error(ErrorCode::InvalidManifest, "algorithm must be dqn, ddqn, d3maddpg or mixed-critic");
      m.algorithm = *a;
    } else {
      m.algorithm = d.algorithm;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidManifest, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidManifest) throw;
    throw Error(ErrorCode::InvalidManifest, e.what());
  }
  try {
    validate(m.trial);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidManifest, std::string("trial: ") + e.what());
  }
}

inline ProjectManifest parse_manifest(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidManifest, "not valid JSON");
  return j.get<ProjectManifest>();
}

inline ProjectManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidManifest, "cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_manifest(text);
}

inline std::string dump_manifest(const ProjectManifest& m) { return nlohmann::json(m).dump(2) + "\n"; }

}  // namespace trialmesh
