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

#include "trialmesh/orchestrator.hpp"

#include <chrono>
#include <fstream>
#include <iterator>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "scripted.hpp"
#include "temp_dir.hpp"
#include "trialmesh/client.hpp"

namespace trialmesh {
namespace {

using namespace std::chrono_literals;
using testing_actors::ActorRun;
using testing_actors::connect;
using testing_actors::spawn;

OrchestratorOptions options_in(const TempDir& dir, bool record = true) {
  OrchestratorOptions o;
  o.data_dir = dir.path();
  o.clock = [] { return std::string("1970-01-01T00:00:00Z"); };
  o.record_traces = record;
  o.create_on_join = false;
  return o;
}

TrialConfig config(int n_agents, bool human = false, int max_ticks = 10, int deadline_ms = 2000) {
  TrialConfig c;
  c.n_agents = n_agents;
  c.include_human = human;
  c.max_ticks = max_ticks;
  c.tick_deadline_ms = deadline_ms;
  c.seed = 3;
  return c;
}

void finish(std::vector<std::unique_ptr<ActorRun>>& runs) {
  for (auto& r : runs) {
    if (r->thread.joinable()) r->thread.join();
  }
}

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

std::vector<WireMessage> of_kind(const std::vector<WireMessage>& msgs, MessageKind kind) {
  std::vector<WireMessage> out;
  for (const auto& m : msgs) {
    if (m.kind == kind) out.push_back(m);
  }
  return out;
}

void expect_traces_valid(const Orchestrator& orch) {
  for (const auto& trace : orch.traces()) {
    auto v = validate_sequence(trace);
    EXPECT_FALSE(v.has_value()) << v->describe();
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Orchestrator, RunningOnceRosterComplete) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, false, 1000, 5000));
  EXPECT_EQ(orch.phase(id), TrialPhase::Pending);
  auto a = connect(orch, ActorClass::Agent, "a");
  auto b = connect(orch, ActorClass::Agent, "b");
  EXPECT_EQ(a->join(id).actor.actor_index, 0);
  EXPECT_EQ(orch.phase(id), TrialPhase::Pending);
  auto info = b->join(id);
  EXPECT_EQ(info.actor.actor_index, 1);
  EXPECT_EQ(info.obs_dim, env::observation_size(env::EnvironmentSpec{}, 2));
  EXPECT_EQ(info.n_actions, env::kNumActions);
  EXPECT_EQ(orch.phase(id), TrialPhase::Running);
  auto first = a->expect(MessageKind::Observation);
  EXPECT_EQ(first.kind, MessageKind::Observation);
  EXPECT_EQ(first.tick_id, 0u);
  orch.abort(id);
  auto summary = orch.wait(id);
  ASSERT_TRUE(summary);
  EXPECT_EQ(summary->end_reason, store::EndReason::Aborted);
  EXPECT_EQ(orch.phase(id), TrialPhase::Ended);
}

TEST(Orchestrator, PendingUntilHumanJoins) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(1, true));
  auto a = connect(orch, ActorClass::Agent, "a");
  a->join(id);
  std::this_thread::sleep_for(20ms);
  EXPECT_EQ(orch.phase(id), TrialPhase::Pending);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / id));
  // A second agent cannot take the human's seat.
  auto b = connect(orch, ActorClass::Agent, "b");
  EXPECT_EQ(code_of([&] { b->join(id); }), ErrorCode::RosterFull);
  auto h = connect(orch, ActorClass::Human, "h");
  EXPECT_EQ(h->join(id).actor.actor_index, 1);
  EXPECT_EQ(orch.phase(id), TrialPhase::Running);
}

TEST(Orchestrator, JoinErrors) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  auto a = connect(orch, ActorClass::Agent, "a");
  EXPECT_EQ(code_of([&] { a->join("no-such-trial"); }), ErrorCode::UnknownTrial);
  EXPECT_EQ(code_of([&] { a->join(""); }), ErrorCode::UnknownTrial);
  const auto id = orch.start_trial(config(1));
  EXPECT_EQ(a->join("").trial_id, id);  // empty id picks the pending trial
  auto b = connect(orch, ActorClass::Agent, "b");
  EXPECT_EQ(code_of([&] { b->join(id); }), ErrorCode::RosterFull);
  orch.abort(id);
  orch.wait(id);
  expect_traces_valid(orch);
}

TEST(Orchestrator, JoinWithoutTrialCreatesFromDefaults) {
  TempDir dir;
  auto opts = options_in(dir);
  opts.create_on_join = true;
  opts.default_config = config(2, false, 3);
  Orchestrator orch(opts);
  std::vector<std::unique_ptr<ActorRun>> runs;
  runs.push_back(spawn(orch, "", ActorClass::Agent, "a", testing_actors::stay));
  runs.push_back(spawn(orch, "", ActorClass::Agent, "b", testing_actors::stay));
  finish(runs);
  EXPECT_EQ(runs[0]->client->trial_id(), runs[1]->client->trial_id());
  auto s = orch.wait(runs[0]->client->trial_id());
  EXPECT_EQ(s->ticks, 3u);
}

TEST(Orchestrator, HappyPathRecordsSubmittedActions) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, false, 5));
  std::vector<std::unique_ptr<ActorRun>> runs;
  runs.push_back(spawn(orch, id, ActorClass::Agent, "a", [](const WireMessage&) { return env::GridAction::East; }));
  runs.push_back(spawn(orch, id, ActorClass::Agent, "b", [](const WireMessage&) { return env::GridAction::North; }));
  finish(runs);
  for (const auto& r : runs) {
    auto results = of_kind(r->received, MessageKind::TickResult);
    ASSERT_EQ(results.size(), 5u);
    for (const auto& tr : results) {
      EXPECT_EQ(tr.body["actions"][0]["move"], "East");
      EXPECT_EQ(tr.body["actions"][1]["move"], "North");
      EXPECT_EQ(tr.body["actions"][0]["substituted"], false);
      EXPECT_EQ(tr.body["actions"][1]["substituted"], false);
    }
    auto end = of_kind(r->received, MessageKind::EndTrial);
    ASSERT_EQ(end.size(), 1u);
    EXPECT_EQ(end[0].body["end_reason"], "MaxTicks");
    EXPECT_EQ(end[0].body["ticks"], 5);
  }
  auto log = orch.datastore().load(id);
  ASSERT_EQ(log.samples.size(), 5u);
  EXPECT_EQ(log.footer->end_reason, store::EndReason::MaxTicks);
  expect_traces_valid(orch);
}

TEST(Orchestrator, SilentActorGetsStaySubstituted) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, false, 3, 40));
  std::vector<std::unique_ptr<ActorRun>> runs;
  runs.push_back(spawn(orch, id, ActorClass::Agent, "a", [](const WireMessage&) { return env::GridAction::South; }));
  runs.push_back(spawn(orch, id, ActorClass::Agent, "mute", nullptr));
  finish(runs);
  auto log = orch.datastore().load(id);
  ASSERT_EQ(log.samples.size(), 3u);
  for (const auto& s : log.samples) {
    EXPECT_EQ(s.actions[0].move, env::GridAction::South);
    EXPECT_FALSE(s.actions[0].substituted);
    EXPECT_EQ(s.actions[1].move, env::GridAction::Stay);
    EXPECT_TRUE(s.actions[1].substituted);
  }
}

TEST(Orchestrator, ThreeActorsTenTicksTenSamples) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, true, 10));
  std::vector<std::unique_ptr<ActorRun>> runs;
  runs.push_back(spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay));
  runs.push_back(spawn(orch, id, ActorClass::Agent, "b", testing_actors::stay));
  runs.push_back(spawn(orch, id, ActorClass::Human, "h", testing_actors::stay));
  finish(runs);
  auto log = orch.datastore().load(id);
  EXPECT_EQ(log.samples.size(), 10u);
  EXPECT_EQ(log.footer->ticks, 10u);
  EXPECT_EQ(log.header.roster.size(), 3u);
  EXPECT_EQ(log.header.roster[2].actor_class, ActorClass::Human);
  for (std::size_t t = 0; t < log.samples.size(); ++t) EXPECT_EQ(log.samples[t].tick_id, t);
  EXPECT_TRUE(orch.datastore().replay(id).exact);
  expect_traces_valid(orch);
}

TEST(Orchestrator, EnvDoneEndsEarlyForEveryone) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  auto cfg = config(2, false, 40);
  cfg.env_spec.n_targets = 2;
  const auto id = orch.start_trial(cfg);
  std::vector<std::unique_ptr<ActorRun>> runs;
  runs.push_back(spawn(orch, id, ActorClass::Agent, "a", testing_actors::greedy_towards_targets()));
  runs.push_back(spawn(orch, id, ActorClass::Agent, "b", testing_actors::greedy_towards_targets()));
  finish(runs);
  auto s = orch.wait(id);
  EXPECT_EQ(s->end_reason, store::EndReason::EnvDone);
  EXPECT_LT(s->ticks, 40u);
  for (const auto& r : runs) {
    auto end = of_kind(r->received, MessageKind::EndTrial);
    ASSERT_EQ(end.size(), 1u);
    EXPECT_EQ(end[0].body["end_reason"], "EnvDone");
    EXPECT_TRUE(of_kind(r->received, MessageKind::TickResult).back().body["done"].get<bool>());
  }
  auto log = orch.datastore().load(id);
  EXPECT_TRUE(log.samples.back().done);
  EXPECT_EQ(log.samples.size(), s->ticks);
}

TEST(Orchestrator, HumanFeedbackIsFusedWithEnvironmentReward) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(1, true, 4));
  auto agent = spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay);
  auto human = connect(orch, ActorClass::Human, "h");
  human->join(id);
  // Feedback first, action last, so both land in the same tick.
  for (std::uint64_t t = 0; t < 4; ++t) {
    auto obs = human->expect(MessageKind::Observation);
    ASSERT_EQ(obs.tick_id, t);
    human->reward(t, 0, t % 2 ? -1.0 : 1.0, t == 3 ? 0.0 : 1.0);
    human->act(t, env::GridAction::Stay);
    human->expect(MessageKind::TickResult);
  }
  auto end = human->expect(MessageKind::EndTrial);
  agent->thread.join();

  auto log = orch.datastore().load(id);
  ASSERT_EQ(log.samples.size(), 4u);
  double cumulative = 0.0;
  for (const auto& s : log.samples) {
    std::vector<RewardContribution> mine;
    for (const auto& c : s.contributions) {
      if (c.target_actor == 0) mine.push_back(c);
    }
    ASSERT_EQ(mine.size(), 2u);
    const auto& human_c = mine[1];
    EXPECT_EQ(human_c.source.actor_class, ActorClass::Human);
    long double num = 0, den = 0;
    for (const auto& c : mine) {
      num += static_cast<long double>(c.value) * c.confidence;
      den += c.confidence;
    }
    EXPECT_NEAR(s.fused[0].value, static_cast<double>(num / den), 1e-15);
    EXPECT_EQ(s.fused[0].n_sources, 2u);
    cumulative += s.fused[0].value;
  }
  // Tick 0: environment step cost -0.01 at c=1 with human +1 at c=1.
  EXPECT_NEAR(log.samples[0].fused[0].value, (1.0 - 0.01) / 2.0, 1e-15);
  // Tick 3: zero-confidence feedback leaves the environment reward alone.
  EXPECT_EQ(log.samples[3].fused[0].value, -0.01);
  EXPECT_EQ(end.body["cumulative_rewards"][0].get<double>(), cumulative);
  EXPECT_EQ(log.footer->cumulative_rewards[0], cumulative);
  expect_traces_valid(orch);
}

TEST(Orchestrator, RejectsBadRewards) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(1, true, 1));
  auto agent = spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay);
  auto human = connect(orch, ActorClass::Human, "h");
  human->join(id);
  human->expect(MessageKind::Observation);
  human->reward(0, 7, 1.0, 1.0);
  EXPECT_EQ(error_from_message(human->expect(MessageKind::Error)).code(), ErrorCode::UnknownTarget);
  human->reward(0, -1, 1.0, 1.0);
  EXPECT_EQ(error_from_message(human->expect(MessageKind::Error)).code(), ErrorCode::UnknownTarget);
  human->reward(0, 0, 1.0, 1.5);
  EXPECT_EQ(error_from_message(human->expect(MessageKind::Error)).code(), ErrorCode::InvalidContribution);
  human->act(0, env::GridAction::Stay);
  human->expect(MessageKind::EndTrial);
  agent->thread.join();
  auto log = orch.datastore().load(id);
  EXPECT_EQ(log.samples[0].contributions.size(), 2u);  // environment only
  expect_traces_valid(orch);
}

TEST(Orchestrator, RecommendationsAreForwardedAndLogged) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(1, true, 2));
  auto agent = spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay);
  auto human = connect(orch, ActorClass::Human, "h");
  human->join(id);
  human->expect(MessageKind::Observation);
  human->recommend(0, 0, Json{{"suggest", "go_north"}});
  human->recommend(0, 99, Json{{"suggest", "nowhere"}});
  EXPECT_EQ(error_from_message(human->expect(MessageKind::Error)).code(), ErrorCode::UnknownTarget);
  for (int k = 0; k < 3; ++k) human->recommend(0, 0, Json{{"n", k}});
  human->act(0, env::GridAction::Stay);
  human->expect(MessageKind::Observation);
  human->act(1, env::GridAction::Stay);
  human->expect(MessageKind::EndTrial);
  agent->thread.join();

  auto delivered = of_kind(agent->received, MessageKind::Recommend);
  ASSERT_EQ(delivered.size(), 4u);
  EXPECT_EQ(delivered[0].body["payload"], (Json{{"suggest", "go_north"}}));
  EXPECT_EQ(delivered[0].body["from"]["actor_class"], "Human");
  for (int k = 0; k < 3; ++k) EXPECT_EQ(delivered[1 + k].body["payload"]["n"], k);

  auto log = orch.datastore().load(id);
  ASSERT_EQ(log.aux.size(), 4u);
  EXPECT_EQ(log.aux[0].payload, (Json{{"suggest", "go_north"}}));
  EXPECT_EQ(log.aux[0].sender.actor_class, ActorClass::Human);
  EXPECT_EQ(log.aux[0].target, 0);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(log.aux[1 + k].payload["n"], k);
  expect_traces_valid(orch);
}

TEST(Orchestrator, StaleAndDuplicateActions) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(1, false, 2));
  auto a = connect(orch, ActorClass::Agent, "a");
  a->join(id);
  a->expect(MessageKind::Observation);
  a->act(0, env::GridAction::East);
  a->expect(MessageKind::TickResult);
  a->expect(MessageKind::Observation);
  a->act(0, env::GridAction::West);  // tick 0 already closed
  EXPECT_EQ(error_from_message(a->expect(MessageKind::Error)).code(), ErrorCode::TickClosed);
  a->act(1, env::GridAction::South);
  auto result = a->expect(MessageKind::TickResult);
  EXPECT_EQ(result.body["actions"][0]["move"], "South");
  a->expect(MessageKind::EndTrial);
  orch.wait(id);
  expect_traces_valid(orch);
}

TEST(Orchestrator, DuplicateActionFirstWins) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, false, 1));
  auto slow = connect(orch, ActorClass::Agent, "slow");
  auto a = connect(orch, ActorClass::Agent, "a");
  slow->join(id);
  a->join(id);
  a->expect(MessageKind::Observation);
  a->act(0, env::GridAction::East);
  a->act(0, env::GridAction::West);
  EXPECT_EQ(error_from_message(a->expect(MessageKind::Error)).code(), ErrorCode::DuplicateAction);
  slow->act(0, env::GridAction::Stay);
  auto result = a->expect(MessageKind::TickResult);
  EXPECT_EQ(result.body["actions"][1]["move"], "East");
  orch.wait(id);
}

TEST(Orchestrator, RejectsFramesFromTheWrongSender) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  auto [near, far] = net::make_pipe();
  orch.attach(far);
  // Action before join breaks the session grammar.
  near->send(make_message(MessageKind::Action, "x", 0, ActorRef{0, ActorClass::Agent, "a"}));
  auto reply = near->receive();
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->kind, MessageKind::Error);
  EXPECT_EQ(error_from_message(*reply).code(), ErrorCode::ProtocolViolation);
  // Environment actors cannot join.
  near->send(make_message(MessageKind::JoinTrial, "", 0, ActorRef::environment()));
  reply = near->receive();
  EXPECT_EQ(error_from_message(*reply).code(), ErrorCode::ProtocolViolation);
  expect_traces_valid(orch);
}

TEST(Orchestrator, LostActorEndsTrial) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2, false, 50));
  auto stayer = spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay);
  auto leaver = connect(orch, ActorClass::Agent, "b");
  leaver->join(id);
  for (std::uint64_t t = 0; t < 3; ++t) {
    leaver->expect(MessageKind::Observation);
    leaver->act(t, env::GridAction::Stay);
    leaver->expect(MessageKind::TickResult);
  }
  leaver->connection().close();
  stayer->thread.join();
  auto s = orch.wait(id);
  EXPECT_EQ(s->end_reason, store::EndReason::ActorLost);
  EXPECT_EQ(s->ticks, 3u);
  auto end = of_kind(stayer->received, MessageKind::EndTrial);
  ASSERT_EQ(end.size(), 1u);
  EXPECT_EQ(end[0].body["end_reason"], "ActorLost");
  auto log = orch.datastore().load(id);
  EXPECT_EQ(log.samples.size(), 3u);
  EXPECT_EQ(log.footer->end_reason, store::EndReason::ActorLost);
}

TEST(Orchestrator, LeavingPendingTrialFreesSlot) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  const auto id = orch.start_trial(config(2));
  auto a = connect(orch, ActorClass::Agent, "a");
  a->join(id);
  a->connection().close();
  for (int i = 0; i < 100 && orch.phase(id) == TrialPhase::Pending; ++i) {
    auto b = connect(orch, ActorClass::Agent, "b");
    auto c = connect(orch, ActorClass::Agent, "c");
    try {
      b->join(id);
      c->join(id);
      break;
    } catch (const Error&) {
      std::this_thread::sleep_for(5ms);  // slot not released yet
    }
  }
  EXPECT_EQ(orch.phase(id), TrialPhase::Running);
}

TEST(Orchestrator, IdenticalRunsWriteIdenticalLogs) {
  std::vector<std::string> logs;
  for (int run = 0; run < 2; ++run) {
    TempDir dir;
    Orchestrator orch(options_in(dir, false));
    auto cfg = config(2, false, 30);
    cfg.seed = 77;
    const auto id = orch.start_trial(cfg);
    std::vector<std::unique_ptr<ActorRun>> runs;
    runs.push_back(spawn(orch, id, ActorClass::Agent, "a", testing_actors::greedy_towards_targets()));
    runs.push_back(spawn(orch, id, ActorClass::Agent, "b", [](const WireMessage& m) {
      return env::action_from_index(m.tick_id % env::kNumActions);
    }));
    finish(runs);
    orch.wait(id);
    logs.push_back(slurp(store::trial_log_path(dir.path(), id)));
    EXPECT_TRUE(orch.datastore().replay(id).exact);
  }
  EXPECT_FALSE(logs[0].empty());
  EXPECT_EQ(logs[0], logs[1]);
}

TEST(Orchestrator, PhaseMachineAndEvents) {
  TempDir dir;
  auto opts = options_in(dir);
  std::mutex mu;
  std::vector<std::string> events;
  opts.on_event = [&](const std::string& e) {
    std::lock_guard lock(mu);
    events.push_back(e);
  };
  Orchestrator orch(opts);
  const auto id = orch.start_trial(config(1, false, 2));
  EXPECT_EQ(orch.phase(id), TrialPhase::Pending);
  auto run = spawn(orch, id, ActorClass::Agent, "a", testing_actors::stay);
  run->thread.join();
  orch.wait(id);
  EXPECT_EQ(orch.phase(id), TrialPhase::Ended);
  EXPECT_FALSE(orch.phase("missing").has_value());
  std::lock_guard lock(mu);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.front(), "trial " + id + " created");
  EXPECT_EQ(events.back(), "trial " + id + " ended (MaxTicks) ticks=2");
}

TEST(Orchestrator, ShutdownAbortsRunningTrials) {
  TempDir dir;
  std::string id;
  std::unique_ptr<ActorRun> run;
  {
    Orchestrator orch(options_in(dir));
    id = orch.start_trial(config(1, false, 1000, 60000));
    run = spawn(orch, id, ActorClass::Agent, "mute", nullptr);
    run->client->connection();  // keep connected but silent
    std::this_thread::sleep_for(20ms);
    orch.shutdown(/*abort_running=*/true);
    EXPECT_EQ(orch.summary(id)->end_reason, store::EndReason::Aborted);
  }
  run->thread.join();
  auto log = store::Datastore(dir.path()).load(id);
  EXPECT_TRUE(log.ended());
  EXPECT_EQ(log.footer->end_reason, store::EndReason::Aborted);
}

TEST(Orchestrator, InvalidConfigRejected) {
  TempDir dir;
  Orchestrator orch(options_in(dir));
  auto cfg = config(0);
  EXPECT_EQ(code_of([&] { orch.start_trial(cfg); }), ErrorCode::InvalidConfig);
}

}  // namespace
}  // namespace trialmesh
