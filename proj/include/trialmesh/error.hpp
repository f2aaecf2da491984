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

#include <stdexcept>
#include <string>
#include <string_view>

namespace trialmesh {

enum class ErrorCode {
  // protocol
  PayloadTooLarge,
  Truncated,
  MalformedPayload,
  UnknownKind,
  ProtocolViolation,
  // orchestrator
  InvalidConfig,
  ActorLost,
  MixedTarget,
  InvalidContribution,
  UnknownTarget,
  TickClosed,
  DuplicateAction,
  UnknownTrial,
  RosterFull,
  // environment
  InvalidSpec,
  ActionCountMismatch,
  // approximator / algorithms
  InvalidShape,
  ShapeMismatch,
  StaleTape,
  EmptyActionSet,
  LengthMismatch,
  EmptyBatch,
  // datastore
  OutOfOrder,
  StreamClosed,
  TrialNotEnded,
  BadDataset,
  // cli
  DirectoryNotEmpty,
  PortInUse,
  OrchestratorUnreachable,
  InvalidManifest,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ActorLost: return "ActorLost";
    case ErrorCode::MixedTarget: return "MixedTarget";
    case ErrorCode::InvalidContribution: return "InvalidContribution";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::TickClosed: return "TickClosed";
    case ErrorCode::DuplicateAction: return "DuplicateAction";
    case ErrorCode::UnknownTrial: return "UnknownTrial";
    case ErrorCode::RosterFull: return "RosterFull";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ActionCountMismatch: return "ActionCountMismatch";
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleTape: return "StaleTape";
    case ErrorCode::EmptyActionSet: return "EmptyActionSet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::StreamClosed: return "StreamClosed";
    case ErrorCode::TrialNotEnded: return "TrialNotEnded";
    case ErrorCode::BadDataset: return "BadDataset";
    case ErrorCode::DirectoryNotEmpty: return "DirectoryNotEmpty";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::OrchestratorUnreachable: return "OrchestratorUnreachable";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI's single-line stderr report) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trialmesh
