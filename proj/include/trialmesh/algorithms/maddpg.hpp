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
#include <concepts>
#include <span>
#include <utility>
#include <vector>

#include "trialmesh/algorithms/dueling.hpp"
#include "trialmesh/algorithms/replay.hpp"
#include "trialmesh/algorithms/targets.hpp"
#include "trialmesh/approximator.hpp"
#include "trialmesh/error.hpp"

namespace trialmesh::algo {

// Shape of the joint tuples: X is n_agents blocks of obs_dim entries, each
// agent picks one of n_actions discrete actions.
struct JointLayout {
  std::size_t n_agents = 1;
  std::size_t obs_dim = 1;
  std::size_t n_actions = 1;

  std::size_t joint_obs_size() const { return n_agents * obs_dim; }

  std::span<const double> local_obs(std::span<const double> joint, std::size_t agent) const {
    return joint.subspan(agent * obs_dim, obs_dim);
  }

  std::vector<double> one_hot(std::size_t action) const {
    std::vector<double> v(n_actions, 0.0);
    v.at(action) = 1.0;
    return v;
  }

  friend bool operator==(const JointLayout&, const JointLayout&) = default;
};

inline std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

// Decentralized actor: MLP logits over the discrete action set, softmax head.
struct SoftmaxPolicy {
  nn::ParamSet params;

  struct Forward {
    std::vector<double> action;  // action-probability vector
    nn::GradientTape tape;
  };

  Forward forward(std::span<const double> obs) const {
    auto r = nn::forward(params, obs);
    return {softmax(r.output), std::move(r.tape)};
  }

  std::vector<double> probabilities(std::span<const double> obs) const {
    return softmax(nn::predict(params, obs));
  }

  // Accumulates d(action . action_grad)/d(params).
  void backward(Forward& fwd, std::span<const double> action_grad, std::span<double> grad) const {
    const auto& p = fwd.action;
    double dot = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * action_grad[k];
    std::vector<double> logit_grad(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) logit_grad[k] = p[k] * (action_grad[k] - dot);
    nn::backward_accumulate(params, fwd.tape, logit_grad, grad);
  }

  std::size_t param_count() const { return params.flat.size(); }

  friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;
};

inline SoftmaxPolicy make_policy(std::size_t obs_dim, const std::vector<std::size_t>& hidden,
                                 std::size_t n_actions, std::uint64_t seed) {
  std::vector<std::size_t> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(n_actions);
  return SoftmaxPolicy{nn::init(std::move(sizes), seed)};
}

// Centralized critic for one agent i, Q_i(X, a_1..a_N). The network sees X and
// the other agents' action vectors and emits a dueling Q vector over agent i's
// own actions; agent i's action vector a_i enters as Q_i = a_i . q. With a_i
// one-hot this is q[a_i]; with a probability vector it is the expected value,
// and dQ_i/da_i = q.
struct CentralCritic {
  DuelingHead head;
  JointLayout layout;
  std::size_t agent = 0;

  std::vector<double> network_input(std::span<const double> joint_obs,
                                    std::span<const std::vector<double>> actions) const {
    std::vector<double> in(joint_obs.begin(), joint_obs.end());
    for (std::size_t j = 0; j < layout.n_agents; ++j) {
      if (j == agent) continue;
      in.insert(in.end(), actions[j].begin(), actions[j].end());
    }
    return in;
  }

  std::vector<double> q_values(std::span<const double> joint_obs,
                               std::span<const std::vector<double>> actions) const {
    return dueling_q(head, network_input(joint_obs, actions)).q;
  }

  std::pair<double, std::vector<double>> value_and_action_grad(
      std::span<const double> joint_obs, std::span<const std::vector<double>> actions,
      std::size_t i) const {
    auto q = q_values(joint_obs, actions);
    const auto& a = actions[i];
    double value = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) value += a[k] * q[k];
    return {value, std::move(q)};
  }

  friend bool operator==(const CentralCritic&, const CentralCritic&) = default;
};

inline std::size_t central_critic_input_size(const JointLayout& layout) {
  return layout.joint_obs_size() + (layout.n_agents - 1) * layout.n_actions;
}

inline CentralCritic make_central_critic(const JointLayout& layout, std::size_t agent,
                                         const std::vector<std::size_t>& hidden,
                                         std::uint64_t seed) {
  return CentralCritic{
      make_dueling_head(central_critic_input_size(layout), hidden, layout.n_actions, seed), layout,
      agent};
}

template <class A>
concept DifferentiableActor = requires(const A& actor, std::span<const double> obs,
                                       std::span<const double> g, std::span<double> out) {
  { actor.param_count() } -> std::convertible_to<std::size_t>;
  { actor.forward(obs).action } -> std::convertible_to<std::vector<double>>;
  actor.backward(std::declval<decltype(actor.forward(obs))&>(), g, out);
};

template <class C>
concept ActionValueCritic = requires(const C& critic, std::span<const double> x,
                                     std::span<const std::vector<double>> actions, std::size_t i) {
  { critic.value_and_action_grad(x, actions, i) } -> std::convertible_to<std::pair<double, std::vector<double>>>;
};

namespace detail {

inline std::vector<std::vector<double>> logged_actions(const JointLayout& layout,
                                                       const Transition& t) {
  std::vector<std::vector<double>> acts;
  acts.reserve(layout.n_agents);
  for (std::size_t j = 0; j < layout.n_agents; ++j) acts.push_back(layout.one_hot(t.actions.at(j)));
  return acts;
}

}  // namespace detail

// Batch mean of Q_i(X, a_1..a_N) with a_i = mu_i(o_i) and the other actions
// taken from the batch. This is the sampled objective J(theta_i).
template <DifferentiableActor Actor, ActionValueCritic Critic>
double sampled_objective(const Actor& actor, const Critic& critic, std::span<const Transition> batch,
                         std::size_t agent, const JointLayout& layout) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty batch");
  double total = 0.0;
  for (const auto& t : batch) {
    auto acts = detail::logged_actions(layout, t);
    acts[agent] = actor.forward(layout.local_obs(t.joint_obs, agent)).action;
    total += critic.value_and_action_grad(t.joint_obs, acts, agent).first;
  }
  return total / static_cast<double>(batch.size());
}

// grad_theta_i J = E[ grad_theta_i mu_i(o_i) * grad_{a_i} Q_i(X, a_1..a_N) | a_i = mu_i(o_i) ].
// Returns the ascent direction, averaged over the batch.
template <DifferentiableActor Actor, ActionValueCritic Critic>
std::vector<double> maddpg_actor_grad(const Actor& actor, const Critic& critic,
                                      std::span<const Transition> batch, std::size_t agent,
                                      const JointLayout& layout) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty batch");
  std::vector<double> grad(actor.param_count(), 0.0);
  for (const auto& t : batch) {
    auto acts = detail::logged_actions(layout, t);
    auto fwd = actor.forward(layout.local_obs(t.joint_obs, agent));
    acts[agent] = fwd.action;
    auto [value, action_grad] = critic.value_and_action_grad(t.joint_obs, acts, agent);
    actor.backward(fwd, action_grad, grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

// Networks the D3 bootstrap reads: target actors choose the other agents'
// next actions, the online critic selects agent i's next action and the
// target critic evaluates it.
struct CriticTargets {
  std::span<const SoftmaxPolicy> target_actors;
  const CentralCritic& target_critic;
};

struct CriticLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

inline std::vector<std::vector<double>> greedy_next_actions(const CentralCritic& critic,
                                                            const CriticTargets& targets,
                                                            const Transition& t) {
  const auto& layout = critic.layout;
  std::vector<std::vector<double>> acts(layout.n_agents, std::vector<double>(layout.n_actions, 0.0));
  for (std::size_t j = 0; j < layout.n_agents; ++j) {
    if (j == critic.agent) continue;
    auto p = targets.target_actors[j].probabilities(layout.local_obs(t.next_joint_obs, j));
    acts[j] = layout.one_hot(argmax(p));
  }
  return acts;
}

inline double d3_target(const CentralCritic& critic, const CriticTargets& targets,
                        const Transition& t, double gamma) {
  const double r = t.rewards.at(critic.agent);
  if (t.done) return r;
  auto next_acts = greedy_next_actions(critic, targets, t);
  auto online = critic.q_values(t.next_joint_obs, next_acts);
  auto target = targets.target_critic.q_values(t.next_joint_obs, next_acts);
  return ddqn_target(r, gamma, online, target, false);
}

// Mean squared TD error of Q_i(X, a) against the D3 target and its gradient
// with respect to the critic parameters (targets held fixed).
inline CriticLoss critic_loss_and_grad(const CentralCritic& critic, const CriticTargets& targets,
                                       std::span<const Transition> batch, double gamma) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty batch");
  const auto& layout = critic.layout;
  CriticLoss out{0.0, std::vector<double>(critic.head.params.flat.size(), 0.0)};
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> q_grad(layout.n_actions);
  for (const auto& t : batch) {
    const double y = d3_target(critic, targets, t, gamma);
    auto acts = detail::logged_actions(layout, t);
    auto fwd = dueling_forward(critic.head, critic.network_input(t.joint_obs, acts));
    const std::size_t a = t.actions.at(critic.agent);
    const double err = fwd.out.q[a] - y;
    out.loss += err * err * inv;
    std::fill(q_grad.begin(), q_grad.end(), 0.0);
    q_grad[a] = 2.0 * err * inv;
    dueling_backward(critic.head, fwd, q_grad, out.grad);
  }
  return out;
}

// One SGD step on the critic; returns the batch loss measured before the step.
inline double critic_update(CentralCritic& critic, const CriticTargets& targets,
                            std::span<const Transition> batch, double gamma, double lr) {
  auto l = critic_loss_and_grad(critic, targets, batch, gamma);
  nn::sgd_step_inplace(critic.head.params, l.grad, lr);
  return l.loss;
}

}  // namespace trialmesh::algo
