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

#include <cstddef>
#include <random>
#include <span>
#include <string>

#include "trialmesh/error.hpp"

namespace trialmesh::algo {

// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyActionSet, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// One-step TD target r + gamma * max_u' Q(s', u'; theta'). The caller supplies
// the target-network values for s'.
inline double dqn_target(double reward, double gamma, std::span<const double> q_next, bool done) {
  if (q_next.empty()) throw Error(ErrorCode::EmptyActionSet, "q_next is empty");
  if (done) return reward;
  return reward + gamma * q_next[argmax(q_next)];
}

// Double-Q target: the online values choose the bootstrap action, the target
// values score it.
inline double ddqn_target(double reward, double gamma, std::span<const double> q_next_online,
                          std::span<const double> q_next_target, bool done) {
  if (q_next_online.size() != q_next_target.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(q_next_online.size()) + " vs " +
                                               std::to_string(q_next_target.size()));
  }
  if (q_next_online.empty()) throw Error(ErrorCode::EmptyActionSet, "q_next is empty");
  if (done) return reward;
  return reward + gamma * q_next_target[argmax(q_next_online)];
}

template <class Rng>
std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw Error(ErrorCode::EmptyActionSet, "q is empty");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (epsilon > 0.0 && coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
    return pick(rng);
  }
  return argmax(q);
}

// Linear annealing from `start` to `end` over `steps` calls.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t steps = 5000;

  double at(std::size_t step) const {
    if (steps == 0 || step >= steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(steps);
    return start + (end - start) * frac;
  }
};

}  // namespace trialmesh::algo
