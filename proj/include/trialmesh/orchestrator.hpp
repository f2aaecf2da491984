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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <deque>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "trialmesh/datastore.hpp"
#include "trialmesh/environment.hpp"
#include "trialmesh/error.hpp"
#include "trialmesh/net.hpp"
#include "trialmesh/protocol.hpp"
#include "trialmesh/rewards.hpp"
#include "trialmesh/trial_config.hpp"

namespace trialmesh {

enum class TrialPhase { Pending, Running, Ended };

constexpr std::string_view to_string(TrialPhase p) {
  switch (p) {
    case TrialPhase::Pending: return "Pending";
    case TrialPhase::Running: return "Running";
    case TrialPhase::Ended: return "Ended";
  }
  return "?";
}

struct TrialSummary {
  std::string trial_id;
  store::EndReason end_reason = store::EndReason::MaxTicks;
  std::uint64_t ticks = 0;
  std::vector<double> cumulative_rewards;
};

inline std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct OrchestratorOptions {
  std::filesystem::path data_dir = "trialmesh-data";
  TrialConfig default_config;
  // A JoinTrial without trial_id and no joinable pending trial creates a
  // trial from default_config.
  bool create_on_join = true;
  std::string id_prefix = "trial";
  std::function<std::string()> clock = utc_now_iso8601;
  std::function<void(const std::string&)> on_event;
  bool record_traces = false;
};

inline WireMessage error_message(const Error& e, std::string trial_id = "", std::uint64_t tick = 0) {
  return make_message(MessageKind::Error, std::move(trial_id), tick, ActorRef::orchestrator(),
                      Json{{"code", std::string(to_string(e.code()))}, {"message", e.what()}});
}

// Runs trials over connected actors. Each trial has one loop thread that owns
// its environment and log stream; each connection has a reader thread that
// forwards frames to the trial loop through an ordered queue.
class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorOptions options)
      : options_(std::move(options)), store_(options_.data_dir) {
    validate(options_.default_config);
  }

  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  ~Orchestrator() { shutdown(/*abort_running=*/true); }

  const store::Datastore& datastore() const { return store_; }

  std::string start_trial(const TrialConfig& config) {
    validate(config);
    std::lock_guard lock(mu_);
    if (closing_) throw Error(ErrorCode::InvalidConfig, "orchestrator is shutting down");
    return create_trial_locked(config)->id;
  }

  // Takes ownership of a connection and serves it until it closes.
  void attach(std::shared_ptr<net::Connection> conn) {
    auto session = std::make_shared<Session>();
    session->conn = std::move(conn);
    session->record = options_.record_traces;
    std::lock_guard lock(mu_);
    if (closing_) {
      session->conn->close();
      return;
    }
    sessions_.push_back(session);
    readers_.emplace_back([this, session] { serve(session); });
  }

  std::optional<TrialPhase> phase(const std::string& trial_id) const {
    std::lock_guard lock(mu_);
    auto it = trials_.find(trial_id);
    if (it == trials_.end()) return std::nullopt;
    return it->second->phase;
  }

  std::optional<TrialSummary> summary(const std::string& trial_id) const {
    std::lock_guard lock(mu_);
    auto it = trials_.find(trial_id);
    if (it == trials_.end()) return std::nullopt;
    return it->second->summary;
  }

  // Blocks until the trial has ended or the timeout passes.
  std::optional<TrialSummary> wait(const std::string& trial_id,
                                   std::chrono::milliseconds timeout = std::chrono::hours(24)) {
    std::unique_lock lock(mu_);
    auto it = trials_.find(trial_id);
    if (it == trials_.end()) throw Error(ErrorCode::UnknownTrial, trial_id);
    auto trial = it->second;
    ended_cv_.wait_for(lock, timeout, [&] { return trial->phase == TrialPhase::Ended; });
    return trial->summary;
  }

  void abort(const std::string& trial_id) {
    std::shared_ptr<Trial> trial;
    {
      std::lock_guard lock(mu_);
      auto it = trials_.find(trial_id);
      if (it == trials_.end()) throw Error(ErrorCode::UnknownTrial, trial_id);
      trial = it->second;
    }
    trial->request_abort();
  }

  void abort_all() {
    std::vector<std::shared_ptr<Trial>> all;
    {
      std::lock_guard lock(mu_);
      for (const auto& [id, t] : trials_) all.push_back(t);
    }
    for (auto& t : all) t->request_abort();
  }

  std::size_t running_trials() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [id, t] : trials_) n += t->phase == TrialPhase::Running;
    return n;
  }

  // Per-connection message traces in send/receive order (record_traces only).
  std::vector<std::vector<WireMessage>> traces() const {
    std::vector<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lock(mu_);
      sessions = sessions_;
    }
    std::vector<std::vector<WireMessage>> out;
    for (const auto& s : sessions) {
      std::lock_guard lock(s->mu);
      out.push_back(s->trace);
    }
    return out;
  }

  // Stops taking new joins, drops trials still pending, then waits for
  // running trials to finish (or aborts them) and closes every connection.
  void shutdown(bool abort_running = false) {
    std::vector<std::shared_ptr<Trial>> running;
    {
      std::lock_guard lock(mu_);
      if (shut_down_) return;
      closing_ = true;
      for (const auto& [id, t] : trials_) {
        if (t->phase == TrialPhase::Running) running.push_back(t);
      }
    }
    for (auto& t : running) {
      if (abort_running) t->request_abort();
    }
    for (auto& t : running) {
      if (t->thread.joinable()) t->thread.join();
    }
    std::vector<std::shared_ptr<Session>> sessions;
    std::list<std::thread> readers;
    {
      std::lock_guard lock(mu_);
      shut_down_ = true;
      sessions = sessions_;
      readers.swap(readers_);
    }
    for (auto& s : sessions) s->conn->close();
    for (auto& r : readers) {
      if (r.joinable()) r.join();
    }
    // Trials can only start from reader threads, which are gone now.
    std::lock_guard lock(mu_);
    for (auto& [id, t] : trials_) {
      if (t->thread.joinable()) t->thread.join();
    }
  }

 private:
  struct Session {
    std::shared_ptr<net::Connection> conn;
    bool record = false;

    std::mutex mu;  // guards validator and trace
    SessionValidator validator;
    std::vector<WireMessage> trace;

    // Guarded by the orchestrator mutex.
    std::string trial_id;
    std::optional<ActorRef> actor;

    // Outbound frames pass through the same grammar bookkeeping as inbound
    // ones so the recorded trace reflects what the peer saw.
    void send(const WireMessage& msg) {
      std::lock_guard lock(mu);
      validator.feed(msg);
      if (record) trace.push_back(msg);
      try {
        conn->send(msg);
      } catch (const Error&) {
        // peer gone; its reader reports the loss
      }
    }

    std::optional<ProtocolViolation> accept(const WireMessage& msg) {
      std::lock_guard lock(mu);
      SessionValidator probe = validator;
      if (auto v = probe.feed(msg)) return v;
      validator = std::move(probe);
      if (record) trace.push_back(msg);
      return std::nullopt;
    }
  };

  struct Event {
    std::size_t actor = 0;
    std::optional<WireMessage> msg;  // empty: the actor's connection was lost
  };

  struct Trial {
    std::string id;
    TrialConfig config;
    TrialPhase phase = TrialPhase::Pending;               // orchestrator mutex
    std::vector<std::shared_ptr<Session>> slots;          // orchestrator mutex
    std::optional<TrialSummary> summary;                  // orchestrator mutex
    std::thread thread;

    std::mutex mu;
    std::condition_variable cv;
    std::deque<Event> inbox;
    bool abort_requested = false;

    void push(Event e) {
      {
        std::lock_guard lock(mu);
        inbox.push_back(std::move(e));
      }
      cv.notify_one();
    }

    void request_abort() {
      {
        std::lock_guard lock(mu);
        abort_requested = true;
      }
      cv.notify_all();
    }
  };

  void emit(const std::string& line) {
    if (options_.on_event) options_.on_event(line);
  }

  std::string next_trial_id_locked() {
    for (;;) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(++trial_counter_));
      std::string id = options_.id_prefix + "-" + buf;
      if (!trials_.count(id) && !std::filesystem::exists(options_.data_dir / id)) return id;
    }
  }

  std::shared_ptr<Trial> create_trial_locked(const TrialConfig& config) {
    auto trial = std::make_shared<Trial>();
    trial->id = next_trial_id_locked();
    trial->config = config;
    trial->slots.resize(config.actor_count());
    trials_[trial->id] = trial;
    creation_order_.push_back(trial->id);
    emit("trial " + trial->id + " created");
    return trial;
  }

  static std::optional<std::size_t> free_slot(const Trial& t, ActorClass cls) {
    const auto n_agents = static_cast<std::size_t>(t.config.n_agents);
    if (cls == ActorClass::Human) {
      if (t.config.include_human && !t.slots[n_agents]) return n_agents;
      return std::nullopt;
    }
    for (std::size_t i = 0; i < n_agents; ++i) {
      if (!t.slots[i]) return i;
    }
    return std::nullopt;
  }

  // ---- connection side -----------------------------------------------------

  void serve(const std::shared_ptr<Session>& session) {
    for (;;) {
      std::optional<WireMessage> msg;
      try {
        msg = session->conn->receive();
      } catch (const Error& e) {
        session->send(error_message(e));
        continue;
      }
      if (!msg) break;
      if (auto v = session->accept(*msg)) {
        session->send(error_message(Error(ErrorCode::ProtocolViolation, v->describe())));
        continue;
      }
      try {
        handle(session, *msg);
      } catch (const Error& e) {
        session->send(error_message(e));
      }
    }
    detach(session);
  }

  void handle(const std::shared_ptr<Session>& session, const WireMessage& msg) {
    switch (msg.kind) {
      case MessageKind::JoinTrial: return join(session, msg);
      case MessageKind::Heartbeat: return;
      case MessageKind::Action:
      case MessageKind::Reward:
      case MessageKind::Recommend: return forward(session, msg);
      case MessageKind::Error: return;  // peers may report problems; nothing to do
      default:
        throw Error(ErrorCode::ProtocolViolation,
                    std::string(to_string(msg.kind)) + " is sent by the orchestrator only");
    }
  }

  void join(const std::shared_ptr<Session>& session, const WireMessage& msg) {
    const ActorClass cls = msg.sender.actor_class;
    if (cls != ActorClass::Agent && cls != ActorClass::Human) {
      throw Error(ErrorCode::ProtocolViolation, "only Agent or Human actors may join");
    }
    std::unique_lock lock(mu_);
    if (closing_) throw Error(ErrorCode::UnknownTrial, "orchestrator is shutting down");
    std::shared_ptr<Trial> trial;
    std::optional<std::size_t> slot;
    if (!msg.trial_id.empty()) {
      auto it = trials_.find(msg.trial_id);
      if (it == trials_.end()) throw Error(ErrorCode::UnknownTrial, msg.trial_id);
      trial = it->second;
      if (trial->phase == TrialPhase::Pending) slot = free_slot(*trial, cls);
      if (!slot) throw Error(ErrorCode::RosterFull, "no free " + std::string(to_string(cls)) + " slot in " + trial->id);
    } else {
      for (const auto& id : creation_order_) {
        auto& t = trials_.at(id);
        if (t->phase != TrialPhase::Pending) continue;
        if ((slot = free_slot(*t, cls))) {
          trial = t;
          break;
        }
      }
      if (!trial) {
        if (!options_.create_on_join) throw Error(ErrorCode::UnknownTrial, "no pending trial to join");
        trial = create_trial_locked(options_.default_config);
        slot = free_slot(*trial, cls);
        if (!slot) throw Error(ErrorCode::RosterFull, "default config has no " + std::string(to_string(cls)) + " slot");
      }
    }

    ActorRef ref{static_cast<std::int64_t>(*slot), cls,
                 msg.sender.name.empty() ? std::string(to_string(cls)) + "-" + std::to_string(*slot)
                                         : msg.sender.name};
    trial->slots[*slot] = session;
    session->trial_id = trial->id;
    session->actor = ref;
    const auto& cfg = trial->config;
    session->send(make_message(
        MessageKind::Joined, trial->id, 0, ActorRef::orchestrator(),
        Json{{"actor", actor_ref_to_json(ref)},
             {"actor_index", ref.actor_index},
             {"obs_dim", env::observation_size(cfg.env_spec, cfg.actor_count())},
             {"n_actions", env::kNumActions},
             {"config", cfg}}));
    emit("trial " + trial->id + " joined " + std::string(to_string(cls)) + " " + std::to_string(*slot) +
         " (" + ref.name + ")");

    for (const auto& s : trial->slots) {
      if (!s) return;
    }
    trial->phase = TrialPhase::Running;
    emit("trial " + trial->id + " running");
    trial->thread = std::thread([this, trial] { run(trial); });
  }

  void forward(const std::shared_ptr<Session>& session, const WireMessage& msg) {
    std::shared_ptr<Trial> trial;
    std::size_t index = 0;
    {
      std::lock_guard lock(mu_);
      if (!session->actor || session->trial_id.empty()) {
        throw Error(ErrorCode::ProtocolViolation, "not joined to a trial");
      }
      if (msg.trial_id != session->trial_id || msg.sender != *session->actor) {
        throw Error(ErrorCode::ProtocolViolation, "sender or trial_id does not match the joined actor");
      }
      trial = trials_.at(session->trial_id);
      if (trial->phase != TrialPhase::Running) throw Error(ErrorCode::TickClosed, "trial is not running");
      index = static_cast<std::size_t>(session->actor->actor_index);
    }
    trial->push(Event{index, msg});
  }

  void detach(const std::shared_ptr<Session>& session) {
    std::lock_guard lock(mu_);
    if (session->trial_id.empty() || !session->actor) return;
    auto trial = trials_.at(session->trial_id);
    const auto index = static_cast<std::size_t>(session->actor->actor_index);
    if (trial->phase == TrialPhase::Pending) {
      trial->slots[index].reset();
      emit("trial " + trial->id + " left " + std::to_string(index));
    } else if (trial->phase == TrialPhase::Running) {
      trial->push(Event{index, std::nullopt});
    }
    session->trial_id.clear();
    session->actor.reset();
  }

  // ---- trial loop ----------------------------------------------------------

  void run(const std::shared_ptr<Trial>& trial) {
    std::vector<std::shared_ptr<Session>> slots;
    std::vector<ActorRef> roster;
    {
      std::lock_guard lock(mu_);
      slots = trial->slots;
      for (const auto& s : slots) roster.push_back(*s->actor);
    }
    const TrialConfig cfg = trial->config;
    const std::size_t n = cfg.actor_count();
    const std::string& id = trial->id;

    TrialSummary summary{id, store::EndReason::MaxTicks, 0, std::vector<double>(n, 0.0)};
    std::unique_ptr<store::TrialLogWriter> writer;
    try {
      writer = store_.open_trial(store::LogHeader{id, cfg, roster, options_.clock()});
    } catch (const Error& e) {
      emit("trial " + id + " cannot log: " + e.what());
      summary.end_reason = store::EndReason::Aborted;
    }

    if (writer) {
      env::GridWorld world(cfg.env_spec, n, cfg.seed);
      auto obs = world.reset();
      std::uint64_t tick = 0;
      for (;;) {
        const auto deadline_ms = cfg.tick_deadline_ms;
        for (std::size_t i = 0; i < n; ++i) {
          slots[i]->send(make_message(MessageKind::Observation, id, tick, ActorRef::orchestrator(),
                                      Json{{"actor_index", i},
                                           {"observation", obs[i]},
                                           {"snapshot", world.snapshot()},
                                           {"deadline_ms", deadline_ms}}));
        }

        TickInputs in = collect(*trial, slots, roster, *writer, tick);
        if (in.aborted || in.lost) {
          summary.end_reason = in.aborted ? store::EndReason::Aborted : store::EndReason::ActorLost;
          break;
        }

        store::Sample sample;
        sample.tick_id = tick;
        sample.observations = obs;
        std::vector<env::GridAction> moves(n, env::kNoOp);
        for (std::size_t i = 0; i < n; ++i) {
          const bool substituted = !in.actions[i].has_value();
          moves[i] = in.actions[i].value_or(env::kNoOp);
          sample.actions.push_back({static_cast<std::int64_t>(i), moves[i], substituted});
        }
        auto step = world.step(moves);
        for (std::size_t i = 0; i < n; ++i) {
          sample.contributions.push_back(RewardContribution{static_cast<std::int64_t>(i), step.rewards[i],
                                                            1.0, ActorRef::environment(), tick, tick});
        }
        sample.contributions.insert(sample.contributions.end(), in.ledger.begin(), in.ledger.end());
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<RewardContribution> mine;
          for (const auto& c : sample.contributions) {
            if (c.target_actor == static_cast<std::int64_t>(i)) mine.push_back(c);
          }
          sample.fused.push_back(combine_rewards(static_cast<std::int64_t>(i), tick, mine));
          summary.cumulative_rewards[i] += sample.fused.back().value;
        }
        obs = world.observations();
        sample.next_observations = obs;
        sample.done = step.done;
        writer->append_sample(sample);
        ++tick;
        summary.ticks = tick;

        const bool final = step.done || tick >= static_cast<std::uint64_t>(cfg.max_ticks);
        Json actions = Json::array();
        for (const auto& a : sample.actions) {
          actions.push_back(Json{{"actor", a.actor}, {"move", std::string(env::to_string(a.move))},
                                 {"substituted", a.substituted}});
        }
        Json rewards = Json::array();
        Json fused = Json::array();
        for (const auto& f : sample.fused) {
          rewards.push_back(f.value);
          fused.push_back(to_json(f));
        }
        for (std::size_t i = 0; i < n; ++i) {
          slots[i]->send(make_message(MessageKind::TickResult, id, tick - 1, ActorRef::orchestrator(),
                                      Json{{"actions", actions},
                                           {"rewards", rewards},
                                           {"fused", fused},
                                           {"next_observation", obs[i]},
                                           {"done", step.done},
                                           {"final", final}}));
        }
        if (step.done) {
          summary.end_reason = store::EndReason::EnvDone;
          break;
        }
        if (final) {
          summary.end_reason = store::EndReason::MaxTicks;
          break;
        }
      }
      writer->close(store::LogFooter{summary.end_reason, summary.ticks, summary.cumulative_rewards});
    }

    emit("trial " + id + " ended (" + std::string(store::to_string(summary.end_reason)) + ") ticks=" +
         std::to_string(summary.ticks));
    const Json end_body{{"end_reason", std::string(store::to_string(summary.end_reason))},
                        {"ticks", summary.ticks},
                        {"cumulative_rewards", summary.cumulative_rewards}};
    {
      std::lock_guard lock(mu_);
      for (const auto& s : slots) {
        s->send(make_message(MessageKind::EndTrial, id, summary.ticks, ActorRef::orchestrator(), end_body));
        if (s->trial_id == id) {
          s->trial_id.clear();
          s->actor.reset();
        }
      }
      trial->phase = TrialPhase::Ended;
      trial->summary = summary;
    }
    ended_cv_.notify_all();
  }

  struct TickInputs {
    std::vector<std::optional<env::GridAction>> actions;
    std::vector<RewardContribution> ledger;
    bool lost = false;
    bool aborted = false;
  };

  // Gathers actions until every actor has one or the deadline passes.
  // Rewards and recommendations arriving meanwhile belong to this tick.
  TickInputs collect(Trial& trial, const std::vector<std::shared_ptr<Session>>& slots,
                     const std::vector<ActorRef>& roster, store::TrialLogWriter& writer,
                     std::uint64_t tick) {
    const std::size_t n = slots.size();
    TickInputs in;
    in.actions.assign(n, std::nullopt);
    std::size_t have = 0;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(trial.config.tick_deadline_ms);
    while (have < n) {
      Event ev;
      {
        std::unique_lock lock(trial.mu);
        const bool ready = trial.cv.wait_until(
            lock, deadline, [&] { return trial.abort_requested || !trial.inbox.empty(); });
        if (trial.abort_requested) {
          in.aborted = true;
          return in;
        }
        if (!ready) break;  // deadline
        ev = std::move(trial.inbox.front());
        trial.inbox.pop_front();
      }
      if (!ev.msg) {
        in.lost = true;
        emit("trial " + trial.id + " lost actor " + std::to_string(ev.actor));
        return in;
      }
      const WireMessage& msg = *ev.msg;
      auto& from = *slots[ev.actor];
      auto reject = [&](ErrorCode code, const std::string& why) {
        from.send(error_message(Error(code, why), trial.id, tick));
      };
      auto target_of = [&](const char* key) -> std::optional<std::size_t> {
        const auto it = msg.body.find(key);
        if (it == msg.body.end() || !it->is_number_integer()) return std::nullopt;
        const auto t = it->get<std::int64_t>();
        if (t < 0 || static_cast<std::size_t>(t) >= n) return std::nullopt;
        return static_cast<std::size_t>(t);
      };

      switch (msg.kind) {
        case MessageKind::Action: {
          if (msg.tick_id != tick) {
            reject(ErrorCode::TickClosed, "action for tick " + std::to_string(msg.tick_id) +
                                              " during tick " + std::to_string(tick));
            break;
          }
          const auto move_it = msg.body.find("move");
          std::optional<env::GridAction> move;
          if (move_it != msg.body.end() && move_it->is_string()) {
            move = env::parse_action(move_it->get<std::string>());
          }
          if (!move) {
            reject(ErrorCode::MalformedPayload, "action body needs a \"move\" of North/South/East/West/Stay");
            break;
          }
          if (in.actions[ev.actor]) {
            reject(ErrorCode::DuplicateAction, "action already recorded for tick " + std::to_string(tick));
            break;
          }
          in.actions[ev.actor] = *move;
          ++have;
          break;
        }
        case MessageKind::Reward: {
          auto target = target_of("target_actor");
          if (!target) {
            reject(ErrorCode::UnknownTarget, "reward target must be a participant index");
            break;
          }
          RewardContribution c{static_cast<std::int64_t>(*target), 0.0, 1.0, roster[ev.actor], tick, msg.tick_id};
          const auto v = msg.body.find("value");
          const auto cf = msg.body.find("confidence");
          if (v == msg.body.end() || !v->is_number() || (cf != msg.body.end() && !cf->is_number())) {
            reject(ErrorCode::InvalidContribution, "reward needs numeric value and confidence");
            break;
          }
          c.value = v->get<double>();
          if (cf != msg.body.end()) c.confidence = cf->get<double>();
          try {
            check_contribution(c);
          } catch (const Error& e) {
            from.send(error_message(e, trial.id, tick));
            break;
          }
          in.ledger.push_back(c);
          break;
        }
        case MessageKind::Recommend: {
          auto target = target_of("target");
          if (!target) {
            reject(ErrorCode::UnknownTarget, "recommendation target must be a participant index");
            break;
          }
          const Json payload = msg.body.value("payload", Json::object());
          slots[*target]->send(make_message(MessageKind::Recommend, trial.id, tick, ActorRef::orchestrator(),
                                            Json{{"from", actor_ref_to_json(roster[ev.actor])},
                                                 {"target", *target},
                                                 {"payload", payload}}));
          writer.append_aux(store::AuxRecord{tick, "recommendation", roster[ev.actor],
                                             static_cast<std::int64_t>(*target), payload});
          break;
        }
        default:
          break;
      }
    }
    return in;
  }

  OrchestratorOptions options_;
  store::Datastore store_;

  mutable std::mutex mu_;
  std::condition_variable ended_cv_;
  std::map<std::string, std::shared_ptr<Trial>> trials_;
  std::vector<std::string> creation_order_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::list<std::thread> readers_;
  std::uint64_t trial_counter_ = 0;
  bool closing_ = false;
  bool shut_down_ = false;
};

}  // namespace trialmesh
