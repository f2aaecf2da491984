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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmesh/error.hpp"

namespace trialmesh {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

enum class MessageKind {
  JoinTrial,
  Joined,
  Observation,
  Action,
  Reward,
  Recommend,
  TickResult,
  EndTrial,
  Heartbeat,
  Error,
};

enum class ActorClass { Agent, Human, Environment, Orchestrator };

inline constexpr std::array<std::pair<MessageKind, std::string_view>, 10> kMessageKindNames{{
    {MessageKind::JoinTrial, "JoinTrial"},
    {MessageKind::Joined, "Joined"},
    {MessageKind::Observation, "Observation"},
    {MessageKind::Action, "Action"},
    {MessageKind::Reward, "Reward"},
    {MessageKind::Recommend, "Recommend"},
    {MessageKind::TickResult, "TickResult"},
    {MessageKind::EndTrial, "EndTrial"},
    {MessageKind::Heartbeat, "Heartbeat"},
    {MessageKind::Error, "Error"},
}};

inline constexpr std::array<std::pair<ActorClass, std::string_view>, 4> kActorClassNames{{
    {ActorClass::Agent, "Agent"},
    {ActorClass::Human, "Human"},
    {ActorClass::Environment, "Environment"},
    {ActorClass::Orchestrator, "Orchestrator"},
}};

constexpr std::string_view to_string(MessageKind kind) {
  for (const auto& [k, name] : kMessageKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

constexpr std::string_view to_string(ActorClass cls) {
  for (const auto& [c, name] : kActorClassNames) {
    if (c == cls) return name;
  }
  return "?";
}

inline std::optional<MessageKind> parse_message_kind(std::string_view name) {
  for (const auto& [k, n] : kMessageKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

inline std::optional<ActorClass> parse_actor_class(std::string_view name) {
  for (const auto& [c, n] : kActorClassNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

inline constexpr std::int64_t kEnvironmentIndex = -1;
inline constexpr std::int64_t kOrchestratorIndex = -2;

struct ActorRef {
  std::int64_t actor_index = 0;
  ActorClass actor_class = ActorClass::Agent;
  std::string name;

  static ActorRef environment() { return {kEnvironmentIndex, ActorClass::Environment, "environment"}; }
  static ActorRef orchestrator() { return {kOrchestratorIndex, ActorClass::Orchestrator, "orchestrator"}; }

  bool is_participant() const {
    return actor_class == ActorClass::Agent || actor_class == ActorClass::Human;
  }

  friend bool operator==(const ActorRef&, const ActorRef&) = default;
};

struct WireMessage {
  MessageKind kind = MessageKind::Heartbeat;
  std::string trial_id;
  std::uint64_t tick_id = 0;
  ActorRef sender;
  Json body = Json::object();

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

// Frames carry a 4-byte big-endian length; payloads are capped at 2^24 - 1.
inline constexpr std::size_t kFrameHeaderSize = 4;
inline constexpr std::size_t kMaxPayloadSize = (std::size_t{1} << 24) - 1;

namespace detail {

inline bool all_numbers_finite(const Json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_structured()) {
    for (const auto& item : j) {
      if (!all_numbers_finite(item)) return false;
    }
  }
  return true;
}

inline bool requires_trial_id(MessageKind kind) {
  return kind != MessageKind::JoinTrial && kind != MessageKind::Heartbeat &&
         kind != MessageKind::Error;
}

// Returns a description of the first violated type invariant, or nothing.
inline std::optional<std::string> invariant_failure(const WireMessage& msg) {
  if (requires_trial_id(msg.kind) && msg.trial_id.empty()) {
    return std::string(to_string(msg.kind)) + " requires a trial_id";
  }
  const auto& s = msg.sender;
  if (s.is_participant() && s.actor_index < 0) return "participant actor_index must be >= 0";
  if (s.actor_class == ActorClass::Environment && s.actor_index != kEnvironmentIndex) {
    return "environment actor_index must be -1";
  }
  if (s.actor_class == ActorClass::Orchestrator && s.actor_index != kOrchestratorIndex) {
    return "orchestrator actor_index must be -2";
  }
  if (!msg.body.is_object()) return "body must be an object";
  if (!all_numbers_finite(msg.body)) return "body contains a non-finite number";
  return std::nullopt;
}

inline Json to_json(const ActorRef& ref) {
  return Json{{"actor_index", ref.actor_index},
              {"actor_class", std::string(to_string(ref.actor_class))},
              {"name", ref.name}};
}

}  // namespace detail

inline Json actor_ref_to_json(const ActorRef& ref) { return detail::to_json(ref); }

inline std::optional<ActorRef> actor_ref_from_json(const Json& j) {
  if (!j.is_object()) return std::nullopt;
  auto idx = j.find("actor_index");
  auto cls = j.find("actor_class");
  auto name = j.find("name");
  if (idx == j.end() || cls == j.end() || name == j.end()) return std::nullopt;
  if (!idx->is_number_integer() || !cls->is_string() || !name->is_string()) return std::nullopt;
  auto parsed_class = parse_actor_class(cls->get_ref<const std::string&>());
  if (!parsed_class) return std::nullopt;
  return ActorRef{idx->get<std::int64_t>(), *parsed_class, name->get<std::string>()};
}

inline Bytes encode(const WireMessage& msg) {
  if (auto failure = detail::invariant_failure(msg)) {
    throw Error(ErrorCode::MalformedPayload, *failure);
  }
  Json payload{{"kind", std::string(to_string(msg.kind))},
               {"trial_id", msg.trial_id},
               {"tick_id", msg.tick_id},
               {"sender", detail::to_json(msg.sender)},
               {"body", msg.body}};
  std::string text;
  try {
    text = payload.dump();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedPayload, e.what());
  }
  if (text.size() > kMaxPayloadSize) {
    throw Error(ErrorCode::PayloadTooLarge, std::to_string(text.size()) + " bytes");
  }
  Bytes out(kFrameHeaderSize + text.size());
  const auto len = static_cast<std::uint32_t>(text.size());
  out[0] = static_cast<std::uint8_t>(len >> 24);
  out[1] = static_cast<std::uint8_t>(len >> 16);
  out[2] = static_cast<std::uint8_t>(len >> 8);
  out[3] = static_cast<std::uint8_t>(len);
  std::copy(text.begin(), text.end(), out.begin() + kFrameHeaderSize);
  return out;
}

struct Decoded {
  WireMessage message;
  std::span<const std::uint8_t> remainder;
};

// Length declared by a frame header; nothing if fewer than 4 bytes are present.
inline std::optional<std::uint32_t> peek_frame_length(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) return std::nullopt;
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

// Parses a bare JSON payload (no length prefix). Used by decode() and by the
// WebSocket bridge, which also accepts unframed text messages.
inline WireMessage decode_payload(std::string_view text) {
  Json payload = Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (payload.is_discarded()) throw Error(ErrorCode::MalformedPayload, "invalid JSON");
  if (!payload.is_object()) throw Error(ErrorCode::MalformedPayload, "payload is not an object");

  auto field = [&](const char* name) -> const Json& {
    auto it = payload.find(name);
    if (it == payload.end()) throw Error(ErrorCode::MalformedPayload, std::string("missing ") + name);
    return *it;
  };

  const Json& kind = field("kind");
  const Json& trial_id = field("trial_id");
  const Json& tick_id = field("tick_id");
  const Json& sender = field("sender");
  const Json& body = field("body");

  if (!kind.is_string()) throw Error(ErrorCode::MalformedPayload, "kind must be a string");
  auto parsed_kind = parse_message_kind(kind.get_ref<const std::string&>());
  if (!parsed_kind) throw Error(ErrorCode::UnknownKind, kind.get<std::string>());
  if (!trial_id.is_string()) throw Error(ErrorCode::MalformedPayload, "trial_id must be a string");
  if (!tick_id.is_number_unsigned()) {
    throw Error(ErrorCode::MalformedPayload, "tick_id must be a non-negative integer");
  }
  auto parsed_sender = actor_ref_from_json(sender);
  if (!parsed_sender) throw Error(ErrorCode::MalformedPayload, "bad sender");
  if (!body.is_object()) throw Error(ErrorCode::MalformedPayload, "body must be an object");

  WireMessage msg{*parsed_kind, trial_id.get<std::string>(), tick_id.get<std::uint64_t>(),
                  std::move(*parsed_sender), body};
  if (auto failure = detail::invariant_failure(msg)) {
    throw Error(ErrorCode::MalformedPayload, *failure);
  }
  return msg;
}

inline Decoded decode(std::span<const std::uint8_t> bytes) {
  auto len = peek_frame_length(bytes);
  if (!len) throw Error(ErrorCode::Truncated, "incomplete frame header");
  if (*len > kMaxPayloadSize) throw Error(ErrorCode::PayloadTooLarge, std::to_string(*len) + " bytes");
  if (bytes.size() - kFrameHeaderSize < *len) {
    throw Error(ErrorCode::Truncated, "declared " + std::to_string(*len) + " bytes, have " +
                                          std::to_string(bytes.size() - kFrameHeaderSize));
  }
  const auto* start = reinterpret_cast<const char*>(bytes.data() + kFrameHeaderSize);
  WireMessage msg = decode_payload(std::string_view(start, *len));
  return {std::move(msg), bytes.subspan(kFrameHeaderSize + *len)};
}

// ---------------------------------------------------------------------------
// Session grammar:
//   ( Error* JoinTrial (Error+ JoinTrial)* Joined
//     (Observation | Action | Reward | Recommend | TickResult | Heartbeat | Error)*
//     EndTrial )*
// plus tick_id monotonicity per (trial_id, sender) stream.

struct ProtocolViolation {
  std::size_t index = 0;
  MessageKind got = MessageKind::Heartbeat;
  std::vector<MessageKind> expected;
  std::string reason;

  std::string describe() const {
    std::string s = "message " + std::to_string(index) + " (" + std::string(to_string(got)) +
                    "): " + reason + "; expected one of {";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) s += ", ";
      s += to_string(expected[i]);
    }
    return s + "}";
  }
};

class SessionValidator {
 public:
  // Feeds the next message; returns the violation if it breaks the grammar.
  // Once a violation is reported the validator stays failed.
  std::optional<ProtocolViolation> feed(const WireMessage& msg) {
    const std::size_t index = count_++;
    if (failed_) return failed_;
    auto fail = [&](std::vector<MessageKind> expected, std::string reason) {
      failed_ = ProtocolViolation{index, msg.kind, std::move(expected), std::move(reason)};
      return failed_;
    };

    switch (state_) {
      case State::Idle:
        if (msg.kind == MessageKind::Error) break;
        if (msg.kind != MessageKind::JoinTrial) return fail(idle_set(), "session not started");
        state_ = State::Joining;
        break;
      case State::Joining:
        if (msg.kind == MessageKind::Joined) {
          state_ = State::InTrial;
        } else if (msg.kind == MessageKind::Error) {
          state_ = State::Idle;
        } else {
          return fail({MessageKind::Joined, MessageKind::Error}, "awaiting join confirmation");
        }
        break;
      case State::InTrial:
        if (msg.kind == MessageKind::EndTrial) {
          state_ = State::Idle;
        } else if (msg.kind == MessageKind::JoinTrial || msg.kind == MessageKind::Joined) {
          return fail(in_trial_set(), "already joined");
        }
        break;
    }

    if (!msg.trial_id.empty()) {
      auto key = std::make_tuple(msg.trial_id, msg.sender.actor_index,
                                 static_cast<int>(msg.sender.actor_class));
      auto [it, inserted] = last_tick_.try_emplace(key, msg.tick_id);
      if (!inserted) {
        if (msg.tick_id < it->second) {
          return fail({msg.kind}, "tick_id regressed from " + std::to_string(it->second) + " to " +
                                      std::to_string(msg.tick_id));
        }
        it->second = msg.tick_id;
      }
    }
    return std::nullopt;
  }

  bool in_trial() const { return state_ == State::InTrial; }

 private:
  enum class State { Idle, Joining, InTrial };

  static std::vector<MessageKind> idle_set() { return {MessageKind::JoinTrial, MessageKind::Error}; }
  static std::vector<MessageKind> in_trial_set() {
    return {MessageKind::Observation, MessageKind::Action,    MessageKind::Reward,
            MessageKind::Recommend,   MessageKind::TickResult, MessageKind::Heartbeat,
            MessageKind::Error,       MessageKind::EndTrial};
  }

  State state_ = State::Idle;
  std::size_t count_ = 0;
  std::optional<ProtocolViolation> failed_;
  std::map<std::tuple<std::string, std::int64_t, int>, std::uint64_t> last_tick_;
};

inline std::optional<ProtocolViolation> validate_sequence(std::span<const WireMessage> stream) {
  SessionValidator validator;
  for (const auto& msg : stream) {
    if (auto violation = validator.feed(msg)) return violation;
  }
  return std::nullopt;
}

// Convenience constructors for the common frames.
inline WireMessage make_message(MessageKind kind, std::string trial_id, std::uint64_t tick,
                                ActorRef sender, Json body = Json::object()) {
  return WireMessage{kind, std::move(trial_id), tick, std::move(sender), std::move(body)};
}

}  // namespace trialmesh
