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
#include <random>
#include <string>
#include <vector>

#include "trialmesh/error.hpp"

namespace trialmesh::algo {

// Joint experience tuple (X, a_1..a_N, r_1..r_N, X', done). X and X' are the
// per-actor observations concatenated in actor order.
struct Transition {
  std::vector<double> joint_obs;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> next_joint_obs;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Fixed-capacity FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "replay capacity must be > 0");
    items_.reserve(capacity_);
  }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

  std::vector<Transition> sample(std::size_t m) {
    if (items_.empty()) throw Error(ErrorCode::EmptyBatch, "sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> batch;
    batch.reserve(m);
    for (std::size_t k = 0; k < m; ++k) batch.push_back(items_[pick(rng_)]);
    return batch;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest slot once the ring is full
  std::vector<Transition> items_;
  std::mt19937_64 rng_;
};

}  // namespace trialmesh::algo
