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

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trialmesh/algorithms/learners.hpp"
#include "trialmesh/algorithms/replay.hpp"
#include "trialmesh/algorithms/targets.hpp"
#include "trialmesh/environment.hpp"

namespace trialmesh::algo {

struct StepOutcome {
  std::vector<std::vector<double>> next_observations;
  std::vector<double> rewards;  // fused, per actor
  bool done = false;
};

// Source of experience for the training loop: one episode at a time, joint
// actions in, per-actor observations and rewards out.
class Interaction {
 public:
  virtual ~Interaction() = default;
  virtual JointLayout layout() const = 0;
  virtual std::vector<std::vector<double>> begin_episode(std::size_t episode) = 0;
  virtual StepOutcome step(std::span<const std::size_t> actions) = 0;
};

// Steps a grid world in-process, without the orchestrator. Every episode
// resets with the same seed, so the target layout is fixed for a run.
class DirectInteraction : public Interaction {
 public:
  DirectInteraction(env::EnvironmentSpec spec, std::size_t n_actors, std::uint64_t seed)
      : world_(spec, n_actors, seed) {}

  JointLayout layout() const override {
    return {world_.n_actors(), world_.observation_size(), env::kNumActions};
  }

  std::vector<std::vector<double>> begin_episode(std::size_t) override { return world_.reset(); }

  StepOutcome step(std::span<const std::size_t> actions) override {
    std::vector<env::GridAction> moves;
    for (auto a : actions) moves.push_back(env::action_from_index(a));
    auto r = world_.step(moves);
    return {world_.observations(), std::move(r.rewards), r.done};
  }

  const env::GridWorld& world() const { return world_; }

 private:
  env::GridWorld world_;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::D3Maddpg;
  Hyperparameters hp;
  std::size_t episodes = 200;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // total environment steps; 0 = no cap
};

struct EpisodeStats {
  std::size_t episode = 0;
  double team_return = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;  // mean over the episode's updates, 0 when none ran
  std::size_t steps = 0;
};

inline std::vector<double> concat(std::span<const std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline constexpr const char* kCurveHeader = "episode,team_return,epsilon,loss";

inline std::string curve_row(const EpisodeStats& s) {
  std::ostringstream os;
  os << std::setprecision(12) << s.episode << ',' << s.team_return << ',' << s.epsilon << ','
     << s.loss;
  return os.str();
}

// Runs `config.episodes` episodes of interaction. Each step inserts the joint
// transition into the replay buffer and, once a batch is available, performs
// one learner update every `train_every` steps; targets are hard-synced every
// `target_sync` updates. One curve row per episode goes to `curve` when set.
// A `max_steps` cap ends training early, cutting the last episode short.
inline std::vector<EpisodeStats> train_loop(const TrainConfig& config, Interaction& interaction,
                                            Learner& learner, std::ostream* curve = nullptr) {
  const auto& hp = config.hp;
  ReplayBuffer buffer(hp.buffer_capacity, config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 rng(config.seed);
  EpsilonSchedule schedule{hp.epsilon_start, hp.epsilon_end, hp.epsilon_anneal_steps};
  std::size_t total_steps = 0, updates = 0;
  std::vector<EpisodeStats> stats;
  if (curve) *curve << kCurveHeader << '\n';

  auto budget_left = [&] { return config.max_steps == 0 || total_steps < config.max_steps; };
  for (std::size_t episode = 0; episode < config.episodes && budget_left(); ++episode) {
    auto obs = interaction.begin_episode(episode);
    EpisodeStats ep{episode, 0.0, schedule.at(total_steps), 0.0, 0};
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool done = false;
    while (!done && budget_left()) {
      ep.epsilon = schedule.at(total_steps);
      auto actions = learner.act(obs, ep.epsilon, rng);
      auto outcome = interaction.step(actions);
      for (double r : outcome.rewards) ep.team_return += r;
      buffer.push(Transition{concat(obs), actions, outcome.rewards, concat(outcome.next_observations),
                             outcome.done});
      obs = std::move(outcome.next_observations);
      done = outcome.done;
      ++total_steps;
      ++ep.steps;
      if (buffer.size() >= hp.batch_size && total_steps % hp.train_every == 0) {
        auto batch = buffer.sample(hp.batch_size);
        loss_sum += learner.update(batch);
        ++loss_count;
        if (++updates % hp.target_sync == 0) learner.sync_targets();
      }
    }
    ep.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (curve) *curve << curve_row(ep) << '\n' << std::flush;
    stats.push_back(ep);
  }
  return stats;
}

// Greedy rollout of one episode; returns the team return.
inline double evaluate_greedy(Interaction& interaction, const Learner& learner,
                              std::size_t episode = 0) {
  auto obs = interaction.begin_episode(episode);
  double team_return = 0.0;
  bool done = false;
  while (!done) {
    auto outcome = interaction.step(learner.act_greedy(obs));
    for (double r : outcome.rewards) team_return += r;
    obs = std::move(outcome.next_observations);
    done = outcome.done;
  }
  return team_return;
}

// Offline variant: no interaction during learning. Each epoch performs
// ceil(|dataset| / batch_size) updates on batches drawn from the dataset;
// the curve reports a greedy evaluation episode in `evaluation` when given.
inline std::vector<EpisodeStats> train_offline(const TrainConfig& config,
                                               std::span<const Transition> dataset,
                                               Learner& learner, Interaction* evaluation,
                                               std::ostream* curve = nullptr) {
  const auto& hp = config.hp;
  if (curve) *curve << kCurveHeader << '\n';
  std::vector<EpisodeStats> stats;
  if (dataset.empty()) {
    if (config.episodes > 0) throw Error(ErrorCode::BadDataset, "dataset has no transitions");
    return stats;
  }
  ReplayBuffer buffer(dataset.size(), config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& t : dataset) buffer.push(t);
  const std::size_t per_epoch = (dataset.size() + hp.batch_size - 1) / hp.batch_size;
  std::size_t updates = 0;
  for (std::size_t epoch = 0; epoch < config.episodes; ++epoch) {
    EpisodeStats ep{epoch, 0.0, 0.0, 0.0, 0};
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < per_epoch; ++k) {
      auto batch = buffer.sample(hp.batch_size);
      loss_sum += learner.update(batch);
      if (++updates % hp.target_sync == 0) learner.sync_targets();
    }
    ep.loss = loss_sum / static_cast<double>(per_epoch);
    ep.steps = per_epoch;
    if (evaluation) ep.team_return = evaluate_greedy(*evaluation, learner, epoch);
    if (curve) *curve << curve_row(ep) << '\n' << std::flush;
    stats.push_back(ep);
  }
  return stats;
}

}  // namespace trialmesh::algo
