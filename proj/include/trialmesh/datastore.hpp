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
#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <iterator>
#include <memory>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmesh/algorithms/replay.hpp"
#include "trialmesh/environment.hpp"
#include "trialmesh/error.hpp"
#include "trialmesh/protocol.hpp"
#include "trialmesh/rewards.hpp"
#include "trialmesh/trial_config.hpp"

// Append-only JSON-lines trial logs ("log exporter") and offline datasets.
//
//   <data_dir>/<trial_id>/log.jsonl
//     line 1         {"kind":"header", ...}
//     lines 2..T+1   {"kind":"sample", ...}, with {"kind":"aux", ...} interleaved
//     last line      {"kind":"footer", ...}   (present iff the trial ended)
namespace trialmesh::store {

namespace fs = std::filesystem;

enum class EndReason { MaxTicks, EnvDone, ActorLost, Aborted };

constexpr std::string_view to_string(EndReason r) {
  switch (r) {
    case EndReason::MaxTicks: return "MaxTicks";
    case EndReason::EnvDone: return "EnvDone";
    case EndReason::ActorLost: return "ActorLost";
    case EndReason::Aborted: return "Aborted";
  }
  return "?";
}

inline std::optional<EndReason> parse_end_reason(std::string_view s) {
  for (auto r : {EndReason::MaxTicks, EndReason::EnvDone, EndReason::ActorLost, EndReason::Aborted}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

struct LogHeader {
  std::string trial_id;
  TrialConfig config;
  std::vector<ActorRef> roster;
  std::string started_at;
};

struct ActionRecord {
  std::int64_t actor = 0;
  env::GridAction move = env::kNoOp;
  bool substituted = false;

  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

struct Sample {
  std::uint64_t tick_id = 0;
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> next_observations;
  std::vector<ActionRecord> actions;
  std::vector<RewardContribution> contributions;
  std::vector<FusedReward> fused;
  bool done = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct AuxRecord {
  std::uint64_t tick_id = 0;
  std::string type = "recommendation";
  ActorRef sender;
  std::int64_t target = 0;
  Json payload = Json::object();

  friend bool operator==(const AuxRecord&, const AuxRecord&) = default;
};

struct LogFooter {
  EndReason end_reason = EndReason::MaxTicks;
  std::uint64_t ticks = 0;
  std::vector<double> cumulative_rewards;
};

// ---- JSON mapping ----------------------------------------------------------

inline Json to_json(const LogHeader& h) {
  Json roster = Json::array();
  for (const auto& a : h.roster) roster.push_back(actor_ref_to_json(a));
  return Json{{"kind", "header"},      {"trial_id", h.trial_id}, {"config", h.config},
              {"roster", roster},      {"started_at", h.started_at}};
}

inline Json to_json(const Sample& s) {
  Json actions = Json::array();
  for (const auto& a : s.actions) {
    actions.push_back(Json{{"actor", a.actor}, {"move", std::string(env::to_string(a.move))},
                           {"substituted", a.substituted}});
  }
  Json contributions = Json::array();
  for (const auto& c : s.contributions) contributions.push_back(trialmesh::to_json(c));
  Json fused = Json::array();
  for (const auto& f : s.fused) fused.push_back(trialmesh::to_json(f));
  return Json{{"kind", "sample"},
              {"tick_id", s.tick_id},
              {"observations", s.observations},
              {"next_observations", s.next_observations},
              {"actions", std::move(actions)},
              {"contributions", std::move(contributions)},
              {"fused", std::move(fused)},
              {"done", s.done}};
}

inline Json to_json(const AuxRecord& a) {
  return Json{{"kind", "aux"},
              {"tick_id", a.tick_id},
              {"type", a.type},
              {"sender", actor_ref_to_json(a.sender)},
              {"target", a.target},
              {"payload", a.payload}};
}

inline Json to_json(const LogFooter& f) {
  return Json{{"kind", "footer"},
              {"end_reason", std::string(to_string(f.end_reason))},
              {"ticks", f.ticks},
              {"cumulative_rewards", f.cumulative_rewards}};
}

inline LogHeader header_from_json(const Json& j) {
  LogHeader h;
  h.trial_id = j.at("trial_id").get<std::string>();
  h.config = j.at("config").get<TrialConfig>();
  for (const auto& a : j.at("roster")) {
    auto ref = actor_ref_from_json(a);
    if (!ref) throw Error(ErrorCode::BadDataset, "bad roster entry");
    h.roster.push_back(*ref);
  }
  h.started_at = j.at("started_at").get<std::string>();
  return h;
}

// Actions whose name does not parse are reported through `bad_action`
// rather than thrown, so replay can point at the offending tick.
inline Sample sample_from_json(const Json& j, bool* bad_action = nullptr) {
  Sample s;
  s.tick_id = j.at("tick_id").get<std::uint64_t>();
  s.observations = j.at("observations").get<std::vector<std::vector<double>>>();
  s.next_observations = j.at("next_observations").get<std::vector<std::vector<double>>>();
  for (const auto& a : j.at("actions")) {
    auto move = env::parse_action(a.at("move").get<std::string>());
    if (!move) {
      if (bad_action == nullptr) throw Error(ErrorCode::BadDataset, "unknown action in log");
      *bad_action = true;
    }
    s.actions.push_back({a.at("actor").get<std::int64_t>(), move.value_or(env::kNoOp),
                         a.at("substituted").get<bool>()});
  }
  for (const auto& c : j.at("contributions")) s.contributions.push_back(contribution_from_json(c));
  for (const auto& f : j.at("fused")) s.fused.push_back(fused_from_json(f));
  s.done = j.at("done").get<bool>();
  return s;
}

inline AuxRecord aux_from_json(const Json& j) {
  auto sender = actor_ref_from_json(j.at("sender"));
  if (!sender) throw Error(ErrorCode::BadDataset, "bad aux sender");
  return AuxRecord{j.at("tick_id").get<std::uint64_t>(), j.at("type").get<std::string>(), *sender,
                   j.at("target").get<std::int64_t>(), j.at("payload")};
}

inline LogFooter footer_from_json(const Json& j) {
  auto reason = parse_end_reason(j.at("end_reason").get<std::string>());
  if (!reason) throw Error(ErrorCode::BadDataset, "bad end_reason");
  return LogFooter{*reason, j.at("ticks").get<std::uint64_t>(),
                   j.at("cumulative_rewards").get<std::vector<double>>()};
}

// ---- writing ---------------------------------------------------------------

inline fs::path trial_log_path(const fs::path& data_dir, const std::string& trial_id) {
  return data_dir / trial_id / "log.jsonl";
}

// Single writer for one trial stream. Every line is flushed to the OS before
// the call returns, so a killed process leaves a log that parses through the
// last completed tick.
class TrialLogWriter {
 public:
  TrialLogWriter(const fs::path& data_dir, const LogHeader& header) {
    const fs::path dir = data_dir / header.trial_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    path_ = dir / "log.jsonl";
    if (fs::exists(path_)) throw Error(ErrorCode::Io, path_.string() + " already exists");
    file_ = std::fopen(path_.c_str(), "wx");
    if (file_ == nullptr) throw Error(ErrorCode::Io, "cannot open " + path_.string());
    write_line(to_json(header));
  }

  TrialLogWriter(const TrialLogWriter&) = delete;
  TrialLogWriter& operator=(const TrialLogWriter&) = delete;

  ~TrialLogWriter() {
    if (file_ != nullptr) std::fclose(file_);
  }

  void append_sample(const Sample& sample) {
    if (closed_) throw Error(ErrorCode::StreamClosed, path_.string());
    if (sample.tick_id != next_tick_) {
      throw Error(ErrorCode::OutOfOrder, "expected tick " + std::to_string(next_tick_) + ", got " +
                                             std::to_string(sample.tick_id));
    }
    write_line(to_json(sample));
    ++next_tick_;
  }

  void append_aux(const AuxRecord& record) {
    if (closed_) throw Error(ErrorCode::StreamClosed, path_.string());
    write_line(to_json(record));
  }

  void close(const LogFooter& footer) {
    if (closed_) throw Error(ErrorCode::StreamClosed, path_.string());
    write_line(to_json(footer));
    closed_ = true;
    std::fclose(file_);
    file_ = nullptr;
  }

  std::uint64_t samples_written() const { return next_tick_; }
  const fs::path& path() const { return path_; }

 private:
  void write_line(const Json& j) {
    const std::string line = j.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
      throw Error(ErrorCode::Io, "write failed on " + path_.string());
    }
  }

  fs::path path_;
  std::FILE* file_ = nullptr;
  std::uint64_t next_tick_ = 0;
  bool closed_ = false;
};

// ---- reading ---------------------------------------------------------------

struct TrialLog {
  LogHeader header;
  std::vector<Sample> samples;
  std::vector<AuxRecord> aux;
  std::optional<LogFooter> footer;
  bool truncated_tail = false;  // an unterminated final line was discarded
  std::optional<std::uint64_t> unreadable_tick;  // first sample whose content did not parse

  bool ended() const { return footer.has_value(); }
};

// Reads a log. An unterminated last line (a crash mid-write) is dropped;
// any other unreadable line is an error.
inline TrialLog read_trial_log(const fs::path& path, bool tolerate_bad_samples = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnknownTrial, path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  TrialLog log;
  std::size_t pos = 0, line_no = 0;
  bool have_header = false;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      log.truncated_tail = true;
      break;
    }
    std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::BadDataset, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("kind")) {
      if (tolerate_bad_samples && have_header && !log.footer) {
        if (!log.unreadable_tick) log.unreadable_tick = log.samples.size();
        continue;
      }
      fail("unparseable line");
    }
    try {
      const auto kind = j.at("kind").get<std::string>();
      if (!have_header) {
        if (kind != "header") fail("first line must be the header");
        log.header = header_from_json(j);
        have_header = true;
      } else if (log.footer) {
        fail("content after footer");
      } else if (kind == "sample") {
        bool bad_action = false;
        auto s = sample_from_json(j, tolerate_bad_samples ? &bad_action : nullptr);
        if (bad_action && !log.unreadable_tick) log.unreadable_tick = s.tick_id;
        log.samples.push_back(std::move(s));
      } else if (kind == "aux") {
        log.aux.push_back(aux_from_json(j));
      } else if (kind == "footer") {
        log.footer = footer_from_json(j);
      } else {
        fail("unknown record kind " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      if (tolerate_bad_samples && have_header && !log.footer) {
        if (!log.unreadable_tick) log.unreadable_tick = log.samples.size();
        continue;
      }
      fail(e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::BadDataset, path.string() + ": missing header");
  return log;
}

// ---- datastore -------------------------------------------------------------

struct ReplayReport {
  bool exact = true;
  std::optional<std::uint64_t> divergence_tick;
  std::string detail;

  std::string describe() const {
    if (exact) return "exact";
    return "divergence at tick " + std::to_string(*divergence_tick) + ": " + detail;
  }
};

struct Dataset {
  Json schema;
  std::vector<std::string> trial_ids;
  std::vector<std::size_t> trial_offsets;  // index of each trial's first transition
  std::vector<algo::Transition> transitions;
};

inline constexpr int kDatasetVersion = 1;

class Datastore {
 public:
  explicit Datastore(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }

  std::unique_ptr<TrialLogWriter> open_trial(const LogHeader& header) const {
    return std::make_unique<TrialLogWriter>(root_, header);
  }

  bool has_trial(const std::string& trial_id) const {
    return fs::exists(trial_log_path(root_, trial_id));
  }

  TrialLog load(const std::string& trial_id) const {
    if (!has_trial(trial_id)) throw Error(ErrorCode::UnknownTrial, trial_id);
    return read_trial_log(trial_log_path(root_, trial_id));
  }

  std::vector<std::string> list_trials() const {
    std::vector<std::string> ids;
    if (!fs::exists(root_)) return ids;
    for (const auto& entry : fs::directory_iterator(root_)) {
      if (entry.is_directory() && fs::exists(entry.path() / "log.jsonl")) {
        ids.push_back(entry.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  // Flattens ended trials into Transition records; returns the record count.
  std::size_t export_dataset(const std::vector<std::string>& trial_ids, const fs::path& out_path) const {
    std::vector<TrialLog> logs;
    for (const auto& id : trial_ids) {
      auto log = load(id);
      if (!log.ended()) throw Error(ErrorCode::TrialNotEnded, id);
      logs.push_back(std::move(log));
    }
    Json schema{{"kind", "schema"},
                {"version", kDatasetVersion},
                {"fields", {"trial_id", "tick_id", "X", "actions", "rewards", "X_next", "done"}},
                {"n_actions", env::kNumActions}};
    if (!logs.empty()) {
      const auto& cfg = logs.front().header.config;
      schema["n_actors"] = cfg.actor_count();
      schema["obs_dim"] = env::observation_size(cfg.env_spec, cfg.actor_count());
      schema["env_spec"] = cfg.env_spec;
      schema["seed"] = cfg.seed;
      for (const auto& log : logs) {
        if (log.header.config.actor_count() != cfg.actor_count() ||
            log.header.config.env_spec != cfg.env_spec) {
          throw Error(ErrorCode::BadDataset, "trials have incompatible layouts");
        }
      }
    }
    std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + out_path.string());
    out << schema.dump() << '\n';
    std::size_t count = 0;
    for (const auto& log : logs) {
      out << Json{{"kind", "trial_begin"}, {"trial_id", log.header.trial_id}}.dump() << '\n';
      for (const auto& s : log.samples) {
        Json actions = Json::array();
        for (const auto& a : s.actions) actions.push_back(env::action_index(a.move));
        Json rewards = Json::array();
        for (const auto& f : s.fused) rewards.push_back(f.value);
        out << Json{{"kind", "transition"},
                    {"trial_id", log.header.trial_id},
                    {"tick_id", s.tick_id},
                    {"X", flatten(s.observations)},
                    {"actions", std::move(actions)},
                    {"rewards", std::move(rewards)},
                    {"X_next", flatten(s.next_observations)},
                    {"done", s.done}}
                   .dump()
            << '\n';
        ++count;
      }
      out << Json{{"kind", "trial_end"}, {"trial_id", log.header.trial_id}, {"records", log.samples.size()}}
                 .dump()
          << '\n';
    }
    if (!out) throw Error(ErrorCode::Io, "write failed on " + out_path.string());
    return count;
  }

  // Re-runs the seeded environment with the logged actions and compares
  // observations and environment reward contributions tick by tick.
  ReplayReport replay(const std::string& trial_id) const {
    if (!has_trial(trial_id)) throw Error(ErrorCode::UnknownTrial, trial_id);
    auto log = read_trial_log(trial_log_path(root_, trial_id), /*tolerate_bad_samples=*/true);
    return replay_log(log);
  }

  static ReplayReport replay_log(const TrialLog& log) {
    ReplayReport report;
    auto diverge = [&](std::uint64_t tick, std::string why) {
      report.exact = false;
      report.divergence_tick = tick;
      report.detail = std::move(why);
      return report;
    };
    const auto& cfg = log.header.config;
    const std::size_t n = cfg.actor_count();
    env::GridWorld world(cfg.env_spec, n, cfg.seed);
    auto obs = world.reset();
    for (std::size_t t = 0; t < log.samples.size(); ++t) {
      if (log.unreadable_tick && *log.unreadable_tick == t) return diverge(t, "unreadable sample");
      const auto& s = log.samples[t];
      if (s.tick_id != t) return diverge(t, "tick ids not contiguous");
      if (s.observations != obs) return diverge(t, "observations differ");
      if (s.actions.size() != n) return diverge(t, "action count");
      std::vector<env::GridAction> moves;
      for (const auto& a : s.actions) moves.push_back(a.move);
      auto r = world.step(moves);
      for (std::size_t i = 0; i < n; ++i) {
        const RewardContribution* env_contribution = nullptr;
        for (const auto& c : s.contributions) {
          if (c.source.actor_class == ActorClass::Environment &&
              c.target_actor == static_cast<std::int64_t>(i)) {
            env_contribution = &c;
          }
        }
        if (env_contribution == nullptr || env_contribution->value != r.rewards[i]) {
          return diverge(t, "environment reward for actor " + std::to_string(i));
        }
      }
      obs = world.observations();
      if (s.next_observations != obs) return diverge(t, "next observations differ");
      if (s.done != r.done) return diverge(t, "done flag differs");
    }
    if (log.unreadable_tick && *log.unreadable_tick >= log.samples.size()) {
      return diverge(*log.unreadable_tick, "unreadable sample");
    }
    return report;
  }

 private:
  static std::vector<double> flatten(const std::vector<std::vector<double>>& parts) {
    std::vector<double> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  fs::path root_;
};

inline Dataset load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadDataset, "cannot read " + path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    Json j = Json::parse(line, nullptr, false);
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::BadDataset, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (j.is_discarded() || !j.is_object()) fail("unparseable line");
    try {
      const auto kind = j.at("kind").get<std::string>();
      if (line_no == 1) {
        if (kind != "schema" || j.at("version").get<int>() != kDatasetVersion) fail("missing schema line");
        ds.schema = j;
      } else if (kind == "trial_begin") {
        ds.trial_ids.push_back(j.at("trial_id").get<std::string>());
        ds.trial_offsets.push_back(ds.transitions.size());
      } else if (kind == "transition") {
        algo::Transition t;
        t.joint_obs = j.at("X").get<std::vector<double>>();
        t.actions = j.at("actions").get<std::vector<std::size_t>>();
        t.rewards = j.at("rewards").get<std::vector<double>>();
        t.next_joint_obs = j.at("X_next").get<std::vector<double>>();
        t.done = j.at("done").get<bool>();
        ds.transitions.push_back(std::move(t));
      } else if (kind != "trial_end") {
        fail("unknown record kind " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  }
  if (line_no == 0) throw Error(ErrorCode::BadDataset, path.string() + " is empty");
  return ds;
}

}  // namespace trialmesh::store
