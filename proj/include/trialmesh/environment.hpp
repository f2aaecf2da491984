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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmesh/error.hpp"

// Cooperative target-coverage grid world. Drones (agents and an optional
// human-piloted drone) move on a width x height grid and must visit every
// target. Row 0 is the top edge: North decreases y, South increases it.
namespace trialmesh::env {

using Json = nlohmann::json;

enum class GridAction : std::uint8_t { North = 0, South = 1, East = 2, West = 3, Stay = 4 };

inline constexpr std::size_t kNumActions = 5;
inline constexpr GridAction kNoOp = GridAction::Stay;

inline constexpr std::array<std::string_view, kNumActions> kActionNames{"North", "South", "East",
                                                                         "West", "Stay"};

constexpr std::string_view to_string(GridAction a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline std::optional<GridAction> parse_action(std::string_view name) {
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (kActionNames[i] == name) return static_cast<GridAction>(i);
  }
  return std::nullopt;
}

constexpr GridAction action_from_index(std::size_t i) { return static_cast<GridAction>(i); }
constexpr std::size_t action_index(GridAction a) { return static_cast<std::size_t>(a); }

struct EnvironmentSpec {
  int width = 5;
  int height = 5;
  int n_targets = 3;
  double step_cost = -0.01;
  double target_reward = 1.0;
  int max_ticks = 50;

  friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

inline void to_json(Json& j, const EnvironmentSpec& s) {
  j = Json{{"width", s.width},           {"height", s.height},
           {"n_targets", s.n_targets},   {"step_cost", s.step_cost},
           {"target_reward", s.target_reward}, {"max_ticks", s.max_ticks}};
}

inline void from_json(const Json& j, EnvironmentSpec& s) {
  static const std::array<std::string_view, 6> kKeys{"width",     "height",        "n_targets",
                                                     "step_cost", "target_reward", "max_ticks"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorCode::InvalidSpec, "unknown key " + key);
    }
  }
  EnvironmentSpec d;
  s.width = j.value("width", d.width);
  s.height = j.value("height", d.height);
  s.n_targets = j.value("n_targets", d.n_targets);
  s.step_cost = j.value("step_cost", d.step_cost);
  s.target_reward = j.value("target_reward", d.target_reward);
  s.max_ticks = j.value("max_ticks", d.max_ticks);
}

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Target {
  Cell cell;
  bool visited = false;
  friend bool operator==(const Target&, const Target&) = default;
};

struct GridState {
  std::vector<Cell> positions;
  std::vector<Target> targets;  // row-major order of their cells
  int tick = 0;

  std::size_t visited_count() const {
    return static_cast<std::size_t>(
        std::count_if(targets.begin(), targets.end(), [](const Target& t) { return t.visited; }));
  }
  bool all_visited() const { return visited_count() == targets.size(); }

  friend bool operator==(const GridState&, const GridState&) = default;
};

inline void validate(const EnvironmentSpec& spec, std::size_t n_actors) {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (spec.width < 2 || spec.height < 2) bad("width and height must be >= 2");
  if (spec.n_targets < 1) bad("n_targets must be >= 1");
  if (!(spec.step_cost <= 0.0)) bad("step_cost must be <= 0");
  if (!(spec.target_reward > 0.0)) bad("target_reward must be > 0");
  if (spec.max_ticks < 1) bad("max_ticks must be >= 1");
  if (n_actors < 1) bad("at least one actor is required");
  const long cells = static_cast<long>(spec.width) * spec.height;
  if (static_cast<long>(n_actors) > cells) bad("more actors than cells");
  if (spec.n_targets > cells - static_cast<long>(n_actors)) bad("n_targets exceeds free cells");
}

// Start cells: the four corners first ((0,0), opposite corner, then the other
// two), then the remaining cells in row-major order.
inline std::vector<Cell> start_cells(const EnvironmentSpec& spec, std::size_t n_actors) {
  const int w = spec.width, h = spec.height;
  std::vector<Cell> order{{0, 0}, {w - 1, h - 1}, {w - 1, 0}, {0, h - 1}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Cell c{x, y};
      if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
    }
  }
  order.resize(n_actors);
  return order;
}

inline std::size_t observation_size(const EnvironmentSpec& spec, std::size_t n_actors) {
  return 2 * n_actors + 3 * static_cast<std::size_t>(spec.n_targets) + 1;
}

// Fixed-length per-actor view, every entry in [0, 1]:
//   own (x, y), other actors' (x, y) in index order, per target
//   (x, y, unvisited), then tick / max_ticks.
inline std::vector<double> observe(const EnvironmentSpec& spec, const GridState& state,
                                   std::size_t actor) {
  const double sx = spec.width - 1, sy = spec.height - 1;
  std::vector<double> obs;
  obs.reserve(observation_size(spec, state.positions.size()));
  obs.push_back(state.positions[actor].x / sx);
  obs.push_back(state.positions[actor].y / sy);
  for (std::size_t j = 0; j < state.positions.size(); ++j) {
    if (j == actor) continue;
    obs.push_back(state.positions[j].x / sx);
    obs.push_back(state.positions[j].y / sy);
  }
  for (const auto& t : state.targets) {
    obs.push_back(t.cell.x / sx);
    obs.push_back(t.cell.y / sy);
    obs.push_back(t.visited ? 0.0 : 1.0);
  }
  obs.push_back(std::min(1.0, static_cast<double>(state.tick) / spec.max_ticks));
  return obs;
}

inline std::vector<std::vector<double>> observe_all(const EnvironmentSpec& spec,
                                                    const GridState& state) {
  std::vector<std::vector<double>> out;
  out.reserve(state.positions.size());
  for (std::size_t i = 0; i < state.positions.size(); ++i) out.push_back(observe(spec, state, i));
  return out;
}

struct ResetResult {
  GridState state;
  std::vector<std::vector<double>> observations;
};

inline ResetResult reset(const EnvironmentSpec& spec, std::size_t n_actors, std::uint64_t seed) {
  validate(spec, n_actors);
  GridState state;
  state.positions = start_cells(spec, n_actors);

  std::vector<Cell> free_cells;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Cell c{x, y};
      if (std::find(state.positions.begin(), state.positions.end(), c) == state.positions.end()) {
        free_cells.push_back(c);
      }
    }
  }
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n_targets slots are a uniform sample
  // without replacement.
  for (int i = 0; i < spec.n_targets; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                     free_cells.size() - 1);
    std::swap(free_cells[static_cast<std::size_t>(i)], free_cells[pick(rng)]);
  }
  free_cells.resize(static_cast<std::size_t>(spec.n_targets));
  std::sort(free_cells.begin(), free_cells.end(),
            [](const Cell& a, const Cell& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  for (const auto& c : free_cells) state.targets.push_back({c, false});

  auto observations = observe_all(spec, state);
  return {std::move(state), std::move(observations)};
}

inline Cell apply_move(const EnvironmentSpec& spec, Cell c, GridAction a) {
  switch (a) {
    case GridAction::North: c.y = std::max(0, c.y - 1); break;
    case GridAction::South: c.y = std::min(spec.height - 1, c.y + 1); break;
    case GridAction::East: c.x = std::min(spec.width - 1, c.x + 1); break;
    case GridAction::West: c.x = std::max(0, c.x - 1); break;
    case GridAction::Stay: break;
  }
  return c;
}

struct StepResult {
  GridState state;
  std::vector<double> rewards;
  bool done = false;
};

inline StepResult step(const EnvironmentSpec& spec, const GridState& state,
                       std::span<const GridAction> actions) {
  if (actions.size() != state.positions.size()) {
    throw Error(ErrorCode::ActionCountMismatch, "got " + std::to_string(actions.size()) +
                                                    " actions for " +
                                                    std::to_string(state.positions.size()) + " actors");
  }
  StepResult out{state, std::vector<double>(actions.size(), spec.step_cost), false};
  for (std::size_t i = 0; i < actions.size(); ++i) {
    out.state.positions[i] = apply_move(spec, state.positions[i], actions[i]);
  }
  // Lowest actor index claims a target entered by several actors at once.
  for (std::size_t i = 0; i < actions.size(); ++i) {
    for (auto& t : out.state.targets) {
      if (!t.visited && t.cell == out.state.positions[i]) {
        t.visited = true;
        out.rewards[i] += spec.target_reward;
      }
    }
  }
  out.state.tick = state.tick + 1;
  out.done = out.state.all_visited() || out.state.tick >= spec.max_ticks;
  return out;
}

// Environment-agnostic rendering data carried in Observation bodies.
inline Json snapshot(const EnvironmentSpec& spec, const GridState& state) {
  Json positions = Json::array();
  for (const auto& p : state.positions) positions.push_back(Json::array({p.x, p.y}));
  Json targets = Json::array();
  for (const auto& t : state.targets) {
    targets.push_back(Json{{"x", t.cell.x}, {"y", t.cell.y}, {"visited", t.visited}});
  }
  return Json{{"width", spec.width},
              {"height", spec.height},
              {"positions", std::move(positions)},
              {"targets", std::move(targets)},
              {"tick", state.tick}};
}

// Small stateful wrapper owned by one trial loop.
class GridWorld {
 public:
  GridWorld(EnvironmentSpec spec, std::size_t n_actors, std::uint64_t seed)
      : spec_(spec), n_actors_(n_actors), seed_(seed) {
    validate(spec_, n_actors_);
  }

  std::vector<std::vector<double>> reset() {
    auto r = trialmesh::env::reset(spec_, n_actors_, seed_);
    state_ = std::move(r.state);
    return std::move(r.observations);
  }

  StepResult step(std::span<const GridAction> actions) {
    auto r = trialmesh::env::step(spec_, state_, actions);
    state_ = r.state;
    return r;
  }

  std::vector<std::vector<double>> observations() const { return observe_all(spec_, state_); }
  Json snapshot() const { return trialmesh::env::snapshot(spec_, state_); }

  const GridState& state() const { return state_; }
  const EnvironmentSpec& spec() const { return spec_; }
  std::size_t n_actors() const { return n_actors_; }
  std::size_t observation_size() const { return trialmesh::env::observation_size(spec_, n_actors_); }

 private:
  EnvironmentSpec spec_;
  std::size_t n_actors_;
  std::uint64_t seed_;
  GridState state_;
};

}  // namespace trialmesh::env
