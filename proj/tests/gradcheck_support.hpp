// Copyright (c) the pcd authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Test-side finite-difference oracle for the training gradients.
//
// The loss here is an independent re-implementation of the masked
// self-distillation objective (tau = 1) evaluated from a plain forward pass;
// analytic gradients come from the library. Central differences are only a
// valid oracle where the function is smooth, so any parameter whose +-h
// stencil flips a ReLU activation pattern is excluded from the comparison
// (the analytic value there is a one-sided subgradient by construction).

#pragma once

#include <cmath>
#include <cstdint>

#include "pcd/pipeline.hpp"

namespace gradcheck {

using namespace pcd;

struct Instance {
  Sample sample;
  Tensor teacher_soft;  // [K,H,W]
  Tensor w_joint;       // [H,W], exactly 0/1
  double inv_active = 0.0;
  Mode mode = Mode::iid;
};

inline Instance make_instance(Mode mode, std::uint64_t seed, std::size_t h, std::size_t w,
                              int k) {
  Rng rng(seed);
  Instance inst;
  inst.mode = mode;
  inst.sample.image = Tensor({1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) inst.sample.image[i] = rng.uniform();
  inst.sample.labels = LabelMap(h, w, k);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      inst.sample.labels.set(y, x, static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
  Tensor tz({static_cast<std::size_t>(k), h, w});
  for (std::size_t i = 0; i < tz.numel(); ++i) tz[i] = rng.normal();
  inst.teacher_soft = softmax(tz);
  inst.w_joint = Tensor({h, w});
  std::size_t active = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    inst.w_joint[i] = mode == Mode::pcd ? (rng.uniform() < 0.6 ? 1.0 : 0.0) : 1.0;
    if (inst.w_joint[i] != 0.0) ++active;
  }
  if (active == 0) {
    inst.w_joint[0] = 1.0;
    active = 1;
  }
  inst.inv_active = 1.0 / static_cast<double>(mode == Mode::pcd ? active : h * w);
  return inst;
}

struct LossProbe {
  double loss;
  std::uint64_t relu_pattern;  // FNV-1a over the active/inactive bits
};

inline LossProbe probe_loss(const ConvNet& net, const Instance& inst) {
  ForwardCache cache;
  const Tensor logits = forward(net, inst.sample.image, &cache);
  std::uint64_t hash = 1469598103934665603ull;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!net.layers[l].relu) continue;
    for (std::size_t i = 0; i < cache.pre[l].numel(); ++i) {
      hash ^= cache.pre[l][i] > 0.0 ? 0x9eu : 0x31u;
      hash *= 1099511628211ull;
    }
  }
  const Tensor probs = softmax(logits);
  const std::size_t k = logits.extent(0);
  const std::size_t plane = logits.extent(1) * logits.extent(2);
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const double wp = inst.w_joint[p];
    if (wp == 0.0) continue;
    const std::size_t true_c = inst.sample.labels.labels()[p];
    double pixel = -std::log(std::max(probs[true_c * plane + p], kProbFloor));
    if (inst.mode != Mode::iid) {
      for (std::size_t c = 0; c < k; ++c) {
        const double tc = std::max(inst.teacher_soft[c * plane + p], kProbFloor);
        const double sc = std::max(probs[c * plane + p], kProbFloor);
        pixel += tc * (std::log(tc) - std::log(sc));
      }
    }
    total += wp * pixel;
  }
  return {total * inst.inv_active, hash};
}

struct Result {
  double max_rel_err = 0.0;
  std::size_t compared = 0;
  std::size_t skipped_kink = 0;
};

inline Result run(ConvNet& net, const Instance& inst, double h_step = 1e-3) {
  Gradients analytic = make_zero_grads(net);
  engine::image_backward(net, inst.sample, inst.mode, 1.0,
                         inst.mode == Mode::iid ? nullptr : &inst.teacher_soft,
                         inst.mode == Mode::pcd ? &inst.w_joint : nullptr, inst.inv_active,
                         analytic);
  const std::uint64_t base_pattern = probe_loss(net, inst).relu_pattern;
  Result result;
  auto check_param = [&](Tensor& param, const Tensor& grad) {
    for (std::size_t i = 0; i < param.numel(); ++i) {
      const double saved = param[i];
      param[i] = saved + h_step;
      const LossProbe up = probe_loss(net, inst);
      param[i] = saved - h_step;
      const LossProbe down = probe_loss(net, inst);
      param[i] = saved;
      if (up.relu_pattern != base_pattern || down.relu_pattern != base_pattern) {
        ++result.skipped_kink;
        continue;
      }
      ++result.compared;
      const double fd = (up.loss - down.loss) / (2.0 * h_step);
      const double diff = std::abs(grad[i] - fd);
      if (diff < 1e-7) continue;  // below finite-difference resolution
      result.max_rel_err =
          std::max(result.max_rel_err, diff / std::max(std::abs(grad[i]), std::abs(fd)));
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    check_param(net.weights[l], analytic.dw[l]);
    check_param(net.biases[l], analytic.db[l]);
  }
  return result;
}

}  // namespace gradcheck
