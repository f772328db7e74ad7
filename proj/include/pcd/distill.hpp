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

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pcd/calibration.hpp"
#include "pcd/curriculum.hpp"
#include "pcd/tensor.hpp"

namespace pcd {

/// Pixel-wise cross entropy against the true label: -log p(true class),
/// with probabilities floored at 1e-12 before the logarithm.
inline Tensor pixel_ce(const Tensor& student_probs, const LabelMap& labels) {
  if (student_probs.ndim() != 3) throw std::invalid_argument("pixel_ce expects [K,H,W]");
  const std::size_t h = student_probs.extent(1), w = student_probs.extent(2);
  if (h != labels.height() || w != labels.width())
    throw std::invalid_argument("shape mismatch between probs and labels");
  const std::size_t plane = h * w;
  Tensor ce({h, w});
  for (std::size_t p = 0; p < plane; ++p) {
    const std::size_t c = labels.labels()[p];
    ce[p] = -std::log(std::max(student_probs[c * plane + p], kProbFloor));
  }
  return ce;
}

namespace detail {

// Re-soften a probability vector at temperature tau: q_i proportional to
// p_i^(1/tau). tau = 1 returns the input distribution (up to the floor).
inline void soften_inplace(double* p, std::size_t k, double tau) {
  double maxl = -1e300;
  for (std::size_t c = 0; c < k; ++c) {
    p[c] = std::log(std::max(p[c], kProbFloor)) / tau;
    maxl = std::max(maxl, p[c]);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    p[c] = std::exp(p[c] - maxl);
    sum += p[c];
  }
  for (std::size_t c = 0; c < k; ++c) p[c] /= sum;
}

}  // namespace detail

/// Pixel-wise distillation divergence: tau^2 * KL(soften(teacher, tau) ||
/// soften(student, tau)), teacher as the reference distribution.
inline Tensor pixel_kl(const Tensor& teacher_probs, const Tensor& student_probs,
                       double tau = 1.0) {
  if (!teacher_probs.same_shape(student_probs))
    throw std::invalid_argument("shape mismatch between teacher and student probs");
  if (teacher_probs.ndim() != 3) throw std::invalid_argument("pixel_kl expects [K,H,W]");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const std::size_t k = teacher_probs.extent(0);
  const std::size_t plane = teacher_probs.extent(1) * teacher_probs.extent(2);
  Tensor kl({teacher_probs.extent(1), teacher_probs.extent(2)});
  std::vector<double> t(k), s(k);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < k; ++c) {
      t[c] = teacher_probs[c * plane + p];
      s[c] = student_probs[c * plane + p];
    }
    if (tau != 1.0) {
      detail::soften_inplace(t.data(), k, tau);
      detail::soften_inplace(s.data(), k, tau);
    }
    double d = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double tc = std::max(t[c], kProbFloor);
      const double sc = std::max(s[c], kProbFloor);
      d += tc * (std::log(tc) - std::log(sc));
    }
    kl[p] = std::max(0.0, tau * tau * d);
  }
  return kl;
}

/// Per-pixel loss maps of one image: CE, KL, their sum SD, and the
/// curriculum-masked PCD map with its admitted-pixel count.
struct LossMaps {
  Tensor ce;
  Tensor kl;
  Tensor sd;
  Tensor pcd;
  std::size_t active_count = 0;
};

/// Masked mean: sum of the masked SD map divided by the number of admitted
/// pixels; 0 when no pixel is admitted.
inline double pcd_loss(const Tensor& sd, const CurriculumMask& mask) {
  if (!sd.same_shape(mask.w_pu)) throw std::invalid_argument("shape mismatch between sd and mask");
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < sd.numel(); ++i) {
    const double w = mask.w_pu[i] * mask.w_bu[i];
    sum += w * sd[i];
    if (w != 0.0) ++active;
  }
  return active == 0 ? 0.0 : sum / static_cast<double>(active);
}

inline LossMaps make_loss_maps(const Tensor& teacher_probs, const Tensor& student_probs,
                               const LabelMap& labels, const CurriculumMask& mask,
                               double tau = 1.0) {
  LossMaps maps;
  maps.ce = pixel_ce(student_probs, labels);
  maps.kl = pixel_kl(teacher_probs, student_probs, tau);
  maps.sd = Tensor(maps.ce.shape());
  maps.pcd = Tensor(maps.ce.shape());
  maps.active_count = 0;
  for (std::size_t i = 0; i < maps.sd.numel(); ++i) {
    maps.sd[i] = maps.ce[i] + maps.kl[i];
    const double w = mask.w_pu[i] * mask.w_bu[i];
    maps.pcd[i] = w * maps.sd[i];
    if (w != 0.0) ++maps.active_count;
  }
  return maps;
}

}  // namespace pcd
