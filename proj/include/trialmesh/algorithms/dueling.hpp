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

#include <numeric>
#include <span>
#include <vector>

#include "trialmesh/approximator.hpp"
#include "trialmesh/error.hpp"

namespace trialmesh::algo {

// Dueling Q network stored as one ParamSet. The hidden layers form the shared
// trunk; the output layer has 1 + n_actions rows, row 0 being the value head
// V(s) and rows 1..n the advantage head A(s, .). Aggregation is
//   q[i] = v + a[i] - mean(a).
struct DuelingHead {
  nn::ParamSet params;

  std::size_t n_actions() const { return params.output_size() - 1; }
  std::size_t input_size() const { return params.input_size(); }

  friend bool operator==(const DuelingHead&, const DuelingHead&) = default;
};

inline DuelingHead make_dueling_head(std::size_t input_size, const std::vector<std::size_t>& hidden,
                                     std::size_t n_actions, std::uint64_t seed) {
  if (hidden.empty()) throw Error(ErrorCode::InvalidShape, "dueling trunk needs a hidden layer");
  if (n_actions < 1) throw Error(ErrorCode::InvalidShape, "need at least one action");
  std::vector<std::size_t> sizes{input_size};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(n_actions + 1);
  return DuelingHead{nn::init(std::move(sizes), seed)};
}

struct DuelingOutput {
  std::vector<double> q;
  double v = 0.0;
  std::vector<double> a;
};

inline DuelingOutput aggregate(std::span<const double> raw) {
  DuelingOutput out;
  out.v = raw[0];
  out.a.assign(raw.begin() + 1, raw.end());
  const double mean_a =
      std::accumulate(out.a.begin(), out.a.end(), 0.0) / static_cast<double>(out.a.size());
  out.q.resize(out.a.size());
  for (std::size_t i = 0; i < out.a.size(); ++i) out.q[i] = out.v + out.a[i] - mean_a;
  return out;
}

inline DuelingOutput dueling_q(const DuelingHead& head, std::span<const double> state) {
  if (head.params.output_size() < 2) throw Error(ErrorCode::ShapeMismatch, "not a dueling head");
  return aggregate(nn::forward(head.params, state).output);
}

struct DuelingForward {
  DuelingOutput out;
  nn::GradientTape tape;
};

inline DuelingForward dueling_forward(const DuelingHead& head, std::span<const double> state) {
  auto r = nn::forward(head.params, state);
  return {aggregate(r.output), std::move(r.tape)};
}

// Pulls dL/dq back through the aggregation: dL/dv = sum(g), dL/da = g - mean(g).
inline std::vector<double> raw_output_grad(std::span<const double> q_grad) {
  const double sum = std::accumulate(q_grad.begin(), q_grad.end(), 0.0);
  const double mean = sum / static_cast<double>(q_grad.size());
  std::vector<double> raw(q_grad.size() + 1);
  raw[0] = sum;
  for (std::size_t i = 0; i < q_grad.size(); ++i) raw[i + 1] = q_grad[i] - mean;
  return raw;
}

inline void dueling_backward(const DuelingHead& head, DuelingForward& fwd,
                             std::span<const double> q_grad, std::span<double> param_grad,
                             std::vector<double>* input_grad = nullptr) {
  if (q_grad.size() != head.n_actions()) throw Error(ErrorCode::ShapeMismatch, "q_grad length");
  auto raw = raw_output_grad(q_grad);
  nn::backward_accumulate(head.params, fwd.tape, raw, param_grad, input_grad);
}

}  // namespace trialmesh::algo
