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
#include <vector>

#include "pcd/tensor.hpp"

namespace pcd {

/// Pacing hyper-parameters: initial data ratio beta, curriculum end epoch
/// gamma, and the epoch interval between threshold updates.
struct PacingConfig {
  double beta = 0.5;
  int gamma = 50;
  int e_interval = 5;

  void validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
    if (e_interval < 1) throw std::invalid_argument("e_interval must be positive");
    if (gamma < e_interval) throw std::invalid_argument("gamma must be >= e_interval");
  }
};

/// Uncertainty threshold state evolved by the pacing function.
///
/// mu = min(mu_init + k * mu_update, 1) after k completed intervals, with
/// mu_update = (1 - mu_init) / (gamma / e_interval), and mu forced to 1 for
/// every epoch >= gamma.
struct CurriculumState {
  double mu = 1.0;
  double mu_init = 1.0;
  double mu_update = 0.0;
  int epoch = 0;
  int updates_applied = 0;
};

/// Initial threshold from the initial data ratio: the beta-quantile
/// (nearest-rank) of the pooled prediction-uncertainty distribution,
/// clamped to (0, 1].
inline double mu_init_from_beta(std::vector<double> pu_values, double beta) {
  if (pu_values.empty()) throw std::invalid_argument("empty uncertainty sample");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
  std::sort(pu_values.begin(), pu_values.end());
  const auto n = pu_values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  double q = pu_values[rank - 1];
  q = std::min(q, 1.0);
  return std::max(q, 1e-12);
}

inline double mu_init_from_beta(const Tensor& pu_values, double beta) {
  return mu_init_from_beta(pu_values.values(), beta);
}

inline CurriculumState init_curriculum(const PacingConfig& cfg, double mu_init) {
  cfg.validate();
  if (!(mu_init > 0.0 && mu_init <= 1.0)) throw std::invalid_argument("mu_init must be in (0, 1]");
  CurriculumState s;
  s.mu = mu_init;
  s.mu_init = mu_init;
  s.mu_update =
      (1.0 - mu_init) / (static_cast<double>(cfg.gamma) / static_cast<double>(cfg.e_interval));
  s.epoch = 0;
  s.updates_applied = 0;
  return s;
}

/// Advance the threshold to the given epoch. One update is applied at every
/// positive epoch divisible by e_interval; mu is reconstructed from the
/// update count so repeated calls cannot drift, and is forced to exactly 1
/// once epoch >= gamma.
inline CurriculumState pace(CurriculumState state, const PacingConfig& cfg, int epoch) {
  cfg.validate();
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  for (int e = state.epoch + 1; e <= epoch; ++e)
    if (e % cfg.e_interval == 0) ++state.updates_applied;
  state.mu = std::min(state.mu_init + state.updates_applied * state.mu_update, 1.0);
  if (epoch >= cfg.gamma) state.mu = 1.0;
  state.epoch = std::max(state.epoch, epoch);
  return state;
}

/// Binary admission masks of Eq-style thresholding: weight 0 exactly where
/// the corresponding uncertainty >= mu, 1 otherwise.
struct CurriculumMask {
  Tensor w_pu;
  Tensor w_bu;
};

inline CurriculumMask build_masks(const Tensor& pu, const Tensor& bu, double mu) {
  if (!pu.same_shape(bu)) throw std::invalid_argument("shape mismatch between PU and BU");
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must be in (0, 1]");
  CurriculumMask m{Tensor(pu.shape()), Tensor(bu.shape())};
  for (std::size_t i = 0; i < pu.numel(); ++i) {
    m.w_pu[i] = pu[i] >= mu ? 0.0 : 1.0;
    m.w_bu[i] = bu[i] >= mu ? 0.0 : 1.0;
  }
  return m;
}

/// Count of pixels admitted by both masks.
inline std::size_t active_count(const CurriculumMask& m) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.w_pu.numel(); ++i)
    if (m.w_pu[i] != 0.0 && m.w_bu[i] != 0.0) ++n;
  return n;
}

inline double active_fraction(const CurriculumMask& m) {
  return static_cast<double>(active_count(m)) / static_cast<double>(m.w_pu.numel());
}

}  // namespace pcd
