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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmesh/approximator.hpp"
#include "trialmesh/error.hpp"

namespace trialmesh::algo {

// Monotone mixing network. Hypernetworks map the state features to the mixing
// weights and biases:
//   hidden = elu(|W1(s)|^T q + b1(s))        W1(s): n_agents x embed
//   Q_mix  = |w2(s)| . hidden + b2(s)
// Because every weight applied to q passes through |.| and elu is increasing,
// dQ_mix/dq_a >= 0 for every agent a.
struct MixerParams {
  std::size_t n_agents = 0;
  std::size_t embed = 0;
  nn::ParamSet hyper_w1;  // state -> n_agents * embed (row a holds agent a's weights)
  nn::ParamSet hyper_b1;  // state -> embed
  nn::ParamSet hyper_w2;  // state -> embed
  nn::ParamSet hyper_b2;  // state -> hidden -> 1

  std::size_t state_size() const { return hyper_w1.input_size(); }

  friend bool operator==(const MixerParams&, const MixerParams&) = default;
};

inline MixerParams make_mixer(std::size_t n_agents, std::size_t state_size, std::size_t embed,
                              std::uint64_t seed) {
  if (n_agents < 1 || state_size < 1 || embed < 1) {
    throw Error(ErrorCode::InvalidShape, "mixer sizes must be >= 1");
  }
  return MixerParams{n_agents,
                     embed,
                     nn::init({state_size, n_agents * embed}, seed),
                     nn::init({state_size, embed}, seed + 1),
                     nn::init({state_size, embed}, seed + 2),
                     nn::init({state_size, embed, 1}, seed + 3)};
}

inline double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
inline double elu_grad(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

// Subgradient of |x|, taken as 0 at 0.
inline double abs_grad(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct MixerForward {
  double q_mix = 0.0;
  std::vector<double> w1_raw, b1, w2_raw;
  std::vector<double> pre;     // pre-activation of the hidden layer
  std::vector<double> hidden;  // elu(pre)
  std::vector<double> q_agents;
  nn::GradientTape w1_tape, b1_tape, w2_tape, b2_tape;
};

inline MixerForward mix_forward(const MixerParams& mixer, std::span<const double> q_agents,
                                std::span<const double> state) {
  if (q_agents.size() != mixer.n_agents) {
    throw Error(ErrorCode::ShapeMismatch, "mixer expects " + std::to_string(mixer.n_agents) +
                                              " agent values, got " +
                                              std::to_string(q_agents.size()));
  }
  if (state.size() != mixer.state_size()) throw Error(ErrorCode::ShapeMismatch, "state length");
  MixerForward f;
  auto w1 = nn::forward(mixer.hyper_w1, state);
  auto b1 = nn::forward(mixer.hyper_b1, state);
  auto w2 = nn::forward(mixer.hyper_w2, state);
  auto b2 = nn::forward(mixer.hyper_b2, state);
  f.w1_raw = std::move(w1.output);
  f.b1 = std::move(b1.output);
  f.w2_raw = std::move(w2.output);
  f.w1_tape = std::move(w1.tape);
  f.b1_tape = std::move(b1.tape);
  f.w2_tape = std::move(w2.tape);
  f.b2_tape = std::move(b2.tape);
  f.q_agents.assign(q_agents.begin(), q_agents.end());

  const std::size_t e_dim = mixer.embed;
  f.pre.assign(e_dim, 0.0);
  f.hidden.assign(e_dim, 0.0);
  double q = b2.output[0];
  for (std::size_t e = 0; e < e_dim; ++e) {
    double z = f.b1[e];
    for (std::size_t a = 0; a < mixer.n_agents; ++a) z += std::abs(f.w1_raw[a * e_dim + e]) * q_agents[a];
    f.pre[e] = z;
    f.hidden[e] = elu(z);
    q += std::abs(f.w2_raw[e]) * f.hidden[e];
  }
  f.q_mix = q;
  return f;
}

inline double mix(const MixerParams& mixer, std::span<const double> q_agents,
                  std::span<const double> state) {
  return mix_forward(mixer, q_agents, state).q_mix;
}

struct MixerGrad {
  std::vector<double> w1, b1, w2, b2;

  explicit MixerGrad(const MixerParams& m)
      : w1(m.hyper_w1.flat.size(), 0.0),
        b1(m.hyper_b1.flat.size(), 0.0),
        w2(m.hyper_w2.flat.size(), 0.0),
        b2(m.hyper_b2.flat.size(), 0.0) {}

  void scale(double k) {
    for (auto* v : {&w1, &b1, &w2, &b2}) {
      for (auto& x : *v) x *= k;
    }
  }
};

// Accumulates d(upstream * Q_mix)/d(mixer params) into `grad` and returns
// d(upstream * Q_mix)/d(q_agents).
inline std::vector<double> mix_backward(const MixerParams& mixer, MixerForward& f, double upstream,
                                        MixerGrad& grad) {
  const std::size_t e_dim = mixer.embed;
  std::vector<double> d_w2_raw(e_dim), d_b1(e_dim), d_w1_raw(mixer.n_agents * e_dim);
  std::vector<double> d_q(mixer.n_agents, 0.0);
  for (std::size_t e = 0; e < e_dim; ++e) {
    const double w2 = std::abs(f.w2_raw[e]);
    d_w2_raw[e] = upstream * f.hidden[e] * abs_grad(f.w2_raw[e]);
    const double dz = upstream * w2 * elu_grad(f.pre[e]);
    d_b1[e] = dz;
    for (std::size_t a = 0; a < mixer.n_agents; ++a) {
      const double raw = f.w1_raw[a * e_dim + e];
      d_w1_raw[a * e_dim + e] = dz * f.q_agents[a] * abs_grad(raw);
      d_q[a] += dz * std::abs(raw);
    }
  }
  const double d_b2[1] = {upstream};
  nn::backward_accumulate(mixer.hyper_w1, f.w1_tape, d_w1_raw, grad.w1);
  nn::backward_accumulate(mixer.hyper_b1, f.b1_tape, d_b1, grad.b1);
  nn::backward_accumulate(mixer.hyper_w2, f.w2_tape, d_w2_raw, grad.w2);
  nn::backward_accumulate(mixer.hyper_b2, f.b2_tape, d_b2, grad.b2);
  return d_q;
}

inline void sgd_step_inplace(MixerParams& mixer, const MixerGrad& g, double lr) {
  nn::sgd_step_inplace(mixer.hyper_w1, g.w1, lr);
  nn::sgd_step_inplace(mixer.hyper_b1, g.b1, lr);
  nn::sgd_step_inplace(mixer.hyper_w2, g.w2, lr);
  nn::sgd_step_inplace(mixer.hyper_b2, g.b2, lr);
}

inline nlohmann::json to_json(const MixerParams& m) {
  return nlohmann::json{{"n_agents", m.n_agents},
                        {"embed", m.embed},
                        {"hyper_w1", nn::to_json(m.hyper_w1)},
                        {"hyper_b1", nn::to_json(m.hyper_b1)},
                        {"hyper_w2", nn::to_json(m.hyper_w2)},
                        {"hyper_b2", nn::to_json(m.hyper_b2)}};
}

}  // namespace trialmesh::algo
