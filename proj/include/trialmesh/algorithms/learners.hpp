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

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trialmesh/algorithms/dueling.hpp"
#include "trialmesh/algorithms/maddpg.hpp"
#include "trialmesh/algorithms/mixer.hpp"
#include "trialmesh/algorithms/replay.hpp"
#include "trialmesh/algorithms/targets.hpp"
#include "trialmesh/approximator.hpp"

namespace trialmesh::algo {

enum class Algorithm { Dqn, Ddqn, D3Maddpg, MixedCritic };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Dqn: return "dqn";
    case Algorithm::Ddqn: return "ddqn";
    case Algorithm::D3Maddpg: return "d3maddpg";
    case Algorithm::MixedCritic: return "mixed-critic";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::Dqn, Algorithm::Ddqn, Algorithm::D3Maddpg, Algorithm::MixedCritic}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

struct Hyperparameters {
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_anneal_steps = 5000;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t target_sync = 100;
  double lr_critic = 0.05;
  double lr_actor = 0.01;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t mixer_embed = 16;
  std::size_t train_every = 1;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

class Learner {
 public:
  virtual ~Learner() = default;

  // Exploratory joint action for the current per-agent observations.
  virtual std::vector<std::size_t> act(std::span<const std::vector<double>> observations,
                                       double epsilon, std::mt19937_64& rng) const = 0;
  virtual std::vector<std::size_t> act_greedy(
      std::span<const std::vector<double>> observations) const = 0;
  // One gradient step on every network; returns the mean TD loss.
  virtual double update(std::span<const Transition> batch) = 0;
  virtual void sync_targets() = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
  // Concatenation of all online parameters, for equality checks.
  virtual std::vector<double> snapshot() const = 0;
};

namespace detail {

inline std::vector<double> concat_all(std::initializer_list<const nn::ParamSet*> sets) {
  std::vector<double> out;
  for (const auto* p : sets) out.insert(out.end(), p->flat.begin(), p->flat.end());
  return out;
}

inline void append(std::vector<double>& out, const nn::ParamSet& p) {
  out.insert(out.end(), p.flat.begin(), p.flat.end());
}

inline std::filesystem::path numbered(const std::filesystem::path& dir, std::string_view stem,
                                      std::size_t i) {
  return dir / (std::string(stem) + "_" + std::to_string(i) + ".json");
}

}  // namespace detail

// Independent dueling Q-learners on local observations (DQN or double DQN
// bootstrap). With one agent this is plain single-agent DQN.
class IndependentQLearner : public Learner {
 public:
  IndependentQLearner(JointLayout layout, Hyperparameters hp, bool double_q, std::uint64_t seed)
      : layout_(layout), hp_(std::move(hp)), double_q_(double_q) {
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      online_.push_back(make_dueling_head(layout_.obs_dim, hp_.hidden, layout_.n_actions, seed + 17 * i));
    }
    target_ = online_;
  }

  std::vector<std::size_t> act(std::span<const std::vector<double>> obs, double epsilon,
                               std::mt19937_64& rng) const override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      out.push_back(epsilon_greedy(dueling_q(online_[i], obs[i]).q, epsilon, rng));
    }
    return out;
  }

  std::vector<std::size_t> act_greedy(std::span<const std::vector<double>> obs) const override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) out.push_back(argmax(dueling_q(online_[i], obs[i]).q));
    return out;
  }

  double update(std::span<const Transition> batch) override {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty batch");
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> q_grad(layout_.n_actions);
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      std::vector<double> grad(online_[i].params.flat.size(), 0.0);
      for (const auto& t : batch) {
        auto next_obs = layout_.local_obs(t.next_joint_obs, i);
        double y;
        if (t.done) {
          y = t.rewards[i];
        } else {
          auto q_target = dueling_q(target_[i], next_obs).q;
          y = double_q_ ? ddqn_target(t.rewards[i], hp_.gamma, dueling_q(online_[i], next_obs).q,
                                      q_target, false)
                        : dqn_target(t.rewards[i], hp_.gamma, q_target, false);
        }
        auto fwd = dueling_forward(online_[i], layout_.local_obs(t.joint_obs, i));
        const std::size_t a = t.actions[i];
        const double err = fwd.out.q[a] - y;
        total += err * err * inv;
        std::fill(q_grad.begin(), q_grad.end(), 0.0);
        q_grad[a] = 2.0 * err * inv;
        dueling_backward(online_[i], fwd, q_grad, grad);
      }
      nn::sgd_step_inplace(online_[i].params, grad, hp_.lr_critic);
    }
    return total / static_cast<double>(layout_.n_agents);
  }

  void sync_targets() override { target_ = online_; }

  void save(const std::filesystem::path& dir) const override {
    for (std::size_t i = 0; i < online_.size(); ++i) {
      nn::save_checkpoint(online_[i].params, detail::numbered(dir, "critic", i));
    }
  }

  std::vector<double> snapshot() const override {
    std::vector<double> out;
    for (const auto& h : online_) detail::append(out, h.params);
    return out;
  }

  const std::vector<DuelingHead>& networks() const { return online_; }
  const std::vector<DuelingHead>& target_networks() const { return target_; }

 private:
  JointLayout layout_;
  Hyperparameters hp_;
  bool double_q_;
  std::vector<DuelingHead> online_;
  std::vector<DuelingHead> target_;
};

// D3-MADDPG: decentralized softmax actors, per-agent centralized critics with
// dueling heads, double-Q bootstrap, hard-synced target copies of actors and
// critics.
class D3MaddpgLearner : public Learner {
 public:
  D3MaddpgLearner(JointLayout layout, Hyperparameters hp, std::uint64_t seed)
      : layout_(layout), hp_(std::move(hp)) {
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      actors_.push_back(make_policy(layout_.obs_dim, hp_.hidden, layout_.n_actions, seed + 31 * i));
      critics_.push_back(make_central_critic(layout_, i, hp_.hidden, seed + 31 * i + 7));
    }
    target_actors_ = actors_;
    target_critics_ = critics_;
  }

  // Executed actions are sampled from the policy; epsilon mixes in uniform
  // exploration on top.
  std::vector<std::size_t> act(std::span<const std::vector<double>> obs, double epsilon,
                               std::mt19937_64& rng) const override {
    std::vector<std::size_t> out;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      auto p = actors_[i].probabilities(obs[i]);
      if (epsilon > 0.0 && coin(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, layout_.n_actions - 1);
        out.push_back(pick(rng));
      } else {
        std::discrete_distribution<std::size_t> draw(p.begin(), p.end());
        out.push_back(draw(rng));
      }
    }
    return out;
  }

  std::vector<std::size_t> act_greedy(std::span<const std::vector<double>> obs) const override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) out.push_back(argmax(actors_[i].probabilities(obs[i])));
    return out;
  }

  double update(std::span<const Transition> batch) override {
    double total = 0.0;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      CriticTargets targets{target_actors_, target_critics_[i]};
      total += critic_update(critics_[i], targets, batch, hp_.gamma, hp_.lr_critic);
      auto ascent = maddpg_actor_grad(actors_[i], critics_[i], batch, i, layout_);
      // Gradient ascent on J.
      nn::sgd_step_inplace(actors_[i].params, ascent, -hp_.lr_actor);
    }
    return total / static_cast<double>(layout_.n_agents);
  }

  void sync_targets() override {
    target_actors_ = actors_;
    target_critics_ = critics_;
  }

  void save(const std::filesystem::path& dir) const override {
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      nn::save_checkpoint(actors_[i].params, detail::numbered(dir, "actor", i));
      nn::save_checkpoint(critics_[i].head.params, detail::numbered(dir, "critic", i));
    }
  }

  std::vector<double> snapshot() const override {
    std::vector<double> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      detail::append(out, actors_[i].params);
      detail::append(out, critics_[i].head.params);
    }
    return out;
  }

  const std::vector<SoftmaxPolicy>& actors() const { return actors_; }
  const std::vector<CentralCritic>& critics() const { return critics_; }
  const std::vector<SoftmaxPolicy>& target_actors() const { return target_actors_; }
  const std::vector<CentralCritic>& target_critics() const { return target_critics_; }

 private:
  JointLayout layout_;
  Hyperparameters hp_;
  std::vector<SoftmaxPolicy> actors_, target_actors_;
  std::vector<CentralCritic> critics_, target_critics_;
};

// Per-agent dueling utilities combined by the monotone mixer and trained on
// the team reward (sum of per-agent rewards) with a double-Q bootstrap.
class MixedCriticLearner : public Learner {
 public:
  MixedCriticLearner(JointLayout layout, Hyperparameters hp, std::uint64_t seed)
      : layout_(layout), hp_(std::move(hp)) {
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      agents_.push_back(make_dueling_head(layout_.obs_dim, hp_.hidden, layout_.n_actions, seed + 13 * i));
    }
    mixer_ = make_mixer(layout_.n_agents, layout_.joint_obs_size(), hp_.mixer_embed, seed + 1000);
    target_agents_ = agents_;
    target_mixer_ = mixer_;
  }

  std::vector<std::size_t> act(std::span<const std::vector<double>> obs, double epsilon,
                               std::mt19937_64& rng) const override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) {
      out.push_back(epsilon_greedy(dueling_q(agents_[i], obs[i]).q, epsilon, rng));
    }
    return out;
  }

  // Monotone mixing makes the per-agent argmaxes the joint argmax.
  std::vector<std::size_t> act_greedy(std::span<const std::vector<double>> obs) const override {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layout_.n_agents; ++i) out.push_back(argmax(dueling_q(agents_[i], obs[i]).q));
    return out;
  }

  double update(std::span<const Transition> batch) override {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty batch");
    const std::size_t n = layout_.n_agents;
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<double>> agent_grads;
    for (const auto& h : agents_) agent_grads.emplace_back(h.params.flat.size(), 0.0);
    MixerGrad mixer_grad(mixer_);
    double loss = 0.0;
    for (const auto& t : batch) {
      double team_reward = 0.0;
      for (double r : t.rewards) team_reward += r;
      double y = team_reward;
      if (!t.done) {
        std::vector<double> next_values(n);
        for (std::size_t i = 0; i < n; ++i) {
          auto next_obs = layout_.local_obs(t.next_joint_obs, i);
          const std::size_t pick = argmax(dueling_q(agents_[i], next_obs).q);
          next_values[i] = dueling_q(target_agents_[i], next_obs).q[pick];
        }
        y += hp_.gamma * mix(target_mixer_, next_values, t.next_joint_obs);
      }
      std::vector<DuelingForward> fwds;
      std::vector<double> chosen(n);
      for (std::size_t i = 0; i < n; ++i) {
        fwds.push_back(dueling_forward(agents_[i], layout_.local_obs(t.joint_obs, i)));
        chosen[i] = fwds.back().out.q[t.actions[i]];
      }
      auto mf = mix_forward(mixer_, chosen, t.joint_obs);
      const double err = mf.q_mix - y;
      loss += err * err * inv;
      auto d_chosen = mix_backward(mixer_, mf, 2.0 * err * inv, mixer_grad);
      std::vector<double> q_grad(layout_.n_actions);
      for (std::size_t i = 0; i < n; ++i) {
        std::fill(q_grad.begin(), q_grad.end(), 0.0);
        q_grad[t.actions[i]] = d_chosen[i];
        dueling_backward(agents_[i], fwds[i], q_grad, agent_grads[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) nn::sgd_step_inplace(agents_[i].params, agent_grads[i], hp_.lr_critic);
    sgd_step_inplace(mixer_, mixer_grad, hp_.lr_critic);
    return loss;
  }

  void sync_targets() override {
    target_agents_ = agents_;
    target_mixer_ = mixer_;
  }

  void save(const std::filesystem::path& dir) const override {
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      nn::save_checkpoint(agents_[i].params, detail::numbered(dir, "critic", i));
    }
    std::ofstream out(dir / "mixer.json", std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write mixer checkpoint");
    out << to_json(mixer_).dump() << '\n';
  }

  std::vector<double> snapshot() const override {
    std::vector<double> out;
    for (const auto& h : agents_) detail::append(out, h.params);
    for (const auto* p : {&mixer_.hyper_w1, &mixer_.hyper_b1, &mixer_.hyper_w2, &mixer_.hyper_b2}) {
      detail::append(out, *p);
    }
    return out;
  }

  const MixerParams& mixer() const { return mixer_; }

 private:
  JointLayout layout_;
  Hyperparameters hp_;
  std::vector<DuelingHead> agents_, target_agents_;
  MixerParams mixer_, target_mixer_;
};

inline std::unique_ptr<Learner> make_learner(Algorithm algorithm, const JointLayout& layout,
                                             const Hyperparameters& hp, std::uint64_t seed) {
  switch (algorithm) {
    case Algorithm::Dqn: return std::make_unique<IndependentQLearner>(layout, hp, false, seed);
    case Algorithm::Ddqn: return std::make_unique<IndependentQLearner>(layout, hp, true, seed);
    case Algorithm::D3Maddpg: return std::make_unique<D3MaddpgLearner>(layout, hp, seed);
    case Algorithm::MixedCritic: return std::make_unique<MixedCriticLearner>(layout, hp, seed);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown algorithm");
}

}  // namespace trialmesh::algo
