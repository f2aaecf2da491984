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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trialmesh/algorithms/train_loop.hpp"
#include "trialmesh/environment.hpp"
#include "trialmesh/error.hpp"
#include "trialmesh/net.hpp"
#include "trialmesh/protocol.hpp"
#include "trialmesh/trial_config.hpp"

namespace trialmesh {

struct JoinedInfo {
  std::string trial_id;
  ActorRef actor;
  std::size_t obs_dim = 0;
  std::size_t n_actions = 0;
  TrialConfig config;
};

// Rebuilds the Error carried by an Error frame.
inline Error error_from_message(const WireMessage& msg) {
  const auto code_name = msg.body.value("code", std::string{});
  ErrorCode code = ErrorCode::ProtocolViolation;
  for (int c = 0; c <= static_cast<int>(ErrorCode::Io); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == code_name) code = static_cast<ErrorCode>(c);
  }
  std::string text = msg.body.value("message", std::string{});
  const std::string prefix = code_name + ": ";
  if (text.rfind(prefix, 0) == 0) text = text.substr(prefix.size());
  return Error(code, text);
}

// Client side of one actor connection. Keeps the frame stamping (trial id,
// sender, tick) consistent with what the orchestrator expects.
class ActorClient {
 public:
  ActorClient(std::shared_ptr<net::Connection> conn, ActorClass cls, std::string name)
      : conn_(std::move(conn)), self_{0, cls, std::move(name)} {}

  const ActorRef& actor() const { return self_; }
  const std::string& trial_id() const { return trial_id_; }
  net::Connection& connection() { return *conn_; }

  // Joins `trial_id` (or any joinable trial when empty); throws the
  // orchestrator's error on refusal.
  JoinedInfo join(const std::string& trial_id = "") {
    conn_->send(make_message(MessageKind::JoinTrial, trial_id, 0, self_));
    for (;;) {
      auto msg = next();
      if (msg.kind == MessageKind::Error) throw error_from_message(msg);
      if (msg.kind != MessageKind::Joined) continue;
      auto ref = actor_ref_from_json(msg.body.at("actor"));
      if (!ref) throw Error(ErrorCode::MalformedPayload, "Joined without actor");
      self_ = *ref;
      trial_id_ = msg.trial_id;
      return JoinedInfo{msg.trial_id, *ref, msg.body.at("obs_dim").get<std::size_t>(),
                        msg.body.at("n_actions").get<std::size_t>(), msg.body.at("config").get<TrialConfig>()};
    }
  }

  // Next non-heartbeat frame; StreamClosed when the connection is gone.
  WireMessage next() {
    for (;;) {
      auto msg = conn_->receive();
      if (!msg) throw Error(ErrorCode::StreamClosed, conn_->describe());
      if (msg->kind != MessageKind::Heartbeat) return std::move(*msg);
    }
  }

  // Skips frames until one of `kind` (or EndTrial) arrives.
  WireMessage expect(MessageKind kind) {
    for (;;) {
      auto msg = next();
      if (msg.kind == kind || msg.kind == MessageKind::EndTrial) return msg;
    }
  }

  void act(std::uint64_t tick, env::GridAction move) {
    send(MessageKind::Action, tick, Json{{"move", std::string(env::to_string(move))}});
  }

  void reward(std::uint64_t tick, std::int64_t target, double value, double confidence) {
    send(MessageKind::Reward, tick, Json{{"target_actor", target}, {"value", value}, {"confidence", confidence}});
  }

  void recommend(std::uint64_t tick, std::int64_t target, Json payload) {
    send(MessageKind::Recommend, tick, Json{{"target", target}, {"payload", std::move(payload)}});
  }

  void heartbeat() { conn_->send(make_message(MessageKind::Heartbeat, trial_id_, last_tick_, self_)); }

 private:
  void send(MessageKind kind, std::uint64_t tick, Json body) {
    last_tick_ = tick;
    conn_->send(make_message(kind, trial_id_, tick, self_, std::move(body)));
  }

  std::shared_ptr<net::Connection> conn_;
  ActorRef self_;
  std::string trial_id_;
  std::uint64_t last_tick_ = 0;
};

// Training experience gathered through the orchestrator: each episode is a
// fresh trial joined by one client per learning agent.
class OrchestratedInteraction : public algo::Interaction {
 public:
  using TrialStarter = std::function<std::string()>;

  OrchestratedInteraction(std::vector<std::unique_ptr<ActorClient>> clients, TrialStarter start,
                          algo::JointLayout layout)
      : clients_(std::move(clients)), start_(std::move(start)), layout_(layout) {}

  algo::JointLayout layout() const override { return layout_; }

  std::vector<std::vector<double>> begin_episode(std::size_t) override {
    const std::string id = start_ ? start_() : std::string{};
    for (auto& c : clients_) c->join(id);
    std::vector<std::vector<double>> obs(clients_.size());
    for (auto& c : clients_) obs[index_of(*c)] = read_observation(*c);
    tick_ = 0;
    return obs;
  }

  algo::StepOutcome step(std::span<const std::size_t> actions) override {
    for (auto& c : clients_) c->act(tick_, env::action_from_index(actions[index_of(*c)]));
    algo::StepOutcome out;
    out.next_observations.resize(clients_.size());
    bool final = false;
    for (auto& c : clients_) {
      auto msg = c->expect(MessageKind::TickResult);
      if (msg.kind == MessageKind::EndTrial) {
        throw Error(ErrorCode::ActorLost,
                    "trial ended early (" + msg.body.value("end_reason", std::string{"?"}) + ")");
      }
      out.next_observations[index_of(*c)] = msg.body.at("next_observation").get<std::vector<double>>();
      out.rewards = msg.body.at("rewards").get<std::vector<double>>();
      final = msg.body.at("final").get<bool>();
    }
    ++tick_;
    for (auto& c : clients_) {
      if (final) {
        c->expect(MessageKind::EndTrial);
      } else {
        read_observation(*c);
      }
    }
    out.done = final;
    return out;
  }

 private:
  static std::size_t index_of(const ActorClient& c) { return static_cast<std::size_t>(c.actor().actor_index); }

  static std::vector<double> read_observation(ActorClient& c) {
    auto msg = c.expect(MessageKind::Observation);
    if (msg.kind == MessageKind::EndTrial) throw Error(ErrorCode::ActorLost, "trial ended before observation");
    return msg.body.at("observation").get<std::vector<double>>();
  }

  std::vector<std::unique_ptr<ActorClient>> clients_;
  TrialStarter start_;
  algo::JointLayout layout_;
  std::uint64_t tick_ = 0;
};

}  // namespace trialmesh
