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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmesh/error.hpp"

// Minimal multilayer perceptron with hand-written reverse mode.
//
// Flat layout, layer by layer: the weight matrix W (n_out x n_in, row-major,
// so W[o][i] sits at o * n_in + i), followed by the n_out biases. Hidden
// layers use tanh, the output layer is the identity.
namespace trialmesh::nn {

struct ParamSet {
  std::vector<std::size_t> layer_sizes;
  std::vector<double> flat;

  std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

inline std::size_t flat_size(std::span<const std::size_t> layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

inline void check_shape(std::span<const std::size_t> layer_sizes) {
  if (layer_sizes.size() < 2) throw Error(ErrorCode::InvalidShape, "need at least two layer sizes");
  for (auto s : layer_sizes) {
    if (s < 1) throw Error(ErrorCode::InvalidShape, "layer sizes must be >= 1");
  }
}

// Xavier/Glorot uniform weights, zero biases.
inline ParamSet init(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  check_shape(layer_sizes);
  ParamSet p{std::move(layer_sizes), {}};
  p.flat.assign(flat_size(p.layer_sizes), 0.0);
  std::mt19937_64 rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::size_t n_in = p.layer_sizes[l], n_out = p.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < n_in * n_out; ++k) p.flat[offset + k] = dist(rng);
    offset += n_in * n_out + n_out;
  }
  return p;
}

inline ParamSet zeros(std::vector<std::size_t> layer_sizes) {
  check_shape(layer_sizes);
  ParamSet p{std::move(layer_sizes), {}};
  p.flat.assign(flat_size(p.layer_sizes), 0.0);
  return p;
}

// Activations of one forward pass. A tape backs exactly one backward pass.
class GradientTape {
 public:
  GradientTape() = default;

  const std::vector<std::vector<double>>& activations() const { return activations_; }
  bool consumed() const { return consumed_; }

 private:
  friend struct TapeAccess;
  std::vector<std::size_t> layer_sizes_;
  std::vector<std::vector<double>> activations_;  // [0] = input, [l + 1] = output of layer l
  bool consumed_ = false;
};

struct TapeAccess {
  static std::vector<std::vector<double>>& activations(GradientTape& t) { return t.activations_; }
  static std::vector<std::size_t>& layer_sizes(GradientTape& t) { return t.layer_sizes_; }
  static bool& consumed(GradientTape& t) { return t.consumed_; }
};

struct ForwardResult {
  std::vector<double> output;
  GradientTape tape;
};

namespace detail {

inline void affine(std::span<const double> flat, std::size_t offset, std::size_t n_in,
                   std::size_t n_out, std::span<const double> in, std::span<double> out) {
  const double* w = flat.data() + offset;
  const double* b = w + n_in * n_out;
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* row = w + o * n_in;
    double acc = b[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

}  // namespace detail

inline ForwardResult forward(const ParamSet& params, std::span<const double> input) {
  if (input.size() != params.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(input.size()) +
                                              " entries, network expects " +
                                              std::to_string(params.input_size()));
  }
  ForwardResult r;
  auto& acts = TapeAccess::activations(r.tape);
  TapeAccess::layer_sizes(r.tape) = params.layer_sizes;
  acts.reserve(params.layer_sizes.size());
  acts.emplace_back(input.begin(), input.end());
  std::size_t offset = 0;
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_in = params.layer_sizes[l], n_out = params.layer_sizes[l + 1];
    std::vector<double> next(n_out);
    detail::affine(params.flat, offset, n_in, n_out, acts.back(), next);
    if (l + 1 < layers) {
      for (auto& v : next) v = std::tanh(v);
    }
    acts.push_back(std::move(next));
    offset += n_in * n_out + n_out;
  }
  r.output = acts.back();
  return r;
}

// Output only, no tape.
inline std::vector<double> predict(const ParamSet& params, std::span<const double> input) {
  return forward(params, input).output;
}

struct Gradients {
  std::vector<double> params;  // same layout as ParamSet::flat
  std::vector<double> input;
};

// Adds d(output . output_grad)/d(flat) into `param_grad` and, when requested,
// writes d(output . output_grad)/d(input) into `input_grad`.
inline void backward_accumulate(const ParamSet& params, GradientTape& tape,
                                std::span<const double> output_grad, std::span<double> param_grad,
                                std::vector<double>* input_grad = nullptr) {
  if (TapeAccess::consumed(tape)) throw Error(ErrorCode::StaleTape, "tape already consumed");
  if (TapeAccess::layer_sizes(tape) != params.layer_sizes) {
    throw Error(ErrorCode::StaleTape, "tape was recorded for a different shape");
  }
  if (output_grad.size() != params.output_size()) {
    throw Error(ErrorCode::ShapeMismatch, "output_grad length mismatch");
  }
  if (param_grad.size() != params.flat.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer length mismatch");
  }
  TapeAccess::consumed(tape) = true;
  const auto& acts = TapeAccess::activations(tape);
  const std::size_t layers = params.num_layers();

  std::vector<std::size_t> offsets(layers);
  for (std::size_t l = 0, off = 0; l < layers; ++l) {
    offsets[l] = off;
    off += params.layer_sizes[l] * params.layer_sizes[l + 1] + params.layer_sizes[l + 1];
  }

  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t n_in = params.layer_sizes[l], n_out = params.layer_sizes[l + 1];
    const auto& in = acts[l];
    const double* w = params.flat.data() + offsets[l];
    double* gw = param_grad.data() + offsets[l];
    double* gb = gw + n_in * n_out;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* grow = gw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) grow[i] += d * in[i];
    }
    if (l == 0 && input_grad == nullptr) break;
    std::vector<double> prev(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      const double* row = w + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) prev[i] += row[i] * d;
    }
    if (l > 0) {
      // acts[l] is the tanh output of layer l - 1.
      for (std::size_t i = 0; i < n_in; ++i) prev[i] *= 1.0 - in[i] * in[i];
    }
    delta = std::move(prev);
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
}

inline Gradients backward(const ParamSet& params, GradientTape& tape,
                          std::span<const double> output_grad) {
  Gradients g;
  g.params.assign(params.flat.size(), 0.0);
  backward_accumulate(params, tape, output_grad, g.params, &g.input);
  return g;
}

inline void sgd_step_inplace(ParamSet& params, std::span<const double> grad, double lr) {
  if (grad.size() != params.flat.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient length " + std::to_string(grad.size()) +
                                              " != parameter length " +
                                              std::to_string(params.flat.size()));
  }
  for (std::size_t k = 0; k < grad.size(); ++k) params.flat[k] -= lr * grad[k];
}

inline ParamSet sgd_step(ParamSet params, std::span<const double> grad, double lr) {
  sgd_step_inplace(params, grad, lr);
  return params;
}

// Hard target-network update. ParamSet has value semantics, so this is a
// deep copy.
inline ParamSet copy_to_target(const ParamSet& params) { return params; }

// --- checkpoints ------------------------------------------------------------

inline nlohmann::json to_json(const ParamSet& p) {
  return nlohmann::json{{"layer_sizes", p.layer_sizes}, {"flat", p.flat}};
}

inline ParamSet from_json(const nlohmann::json& j) {
  ParamSet p;
  try {
    p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    p.flat = j.at("flat").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidShape, e.what());
  }
  check_shape(p.layer_sizes);
  if (p.flat.size() != flat_size(p.layer_sizes)) {
    throw Error(ErrorCode::InvalidShape, "flat length does not match layer sizes");
  }
  for (double v : p.flat) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidShape, "non-finite parameter");
  }
  return p;
}

inline void save_checkpoint(const ParamSet& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(p).dump() << '\n';
}

inline ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidShape, "checkpoint is not valid JSON");
  return from_json(j);
}

}  // namespace trialmesh::nn
