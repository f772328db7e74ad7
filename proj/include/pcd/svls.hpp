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

#include <array>
#include <cmath>
#include <stdexcept>

#include "pcd/tensor.hpp"

namespace pcd {

/// 3x3 spatially-varying label smoothing kernel.
///
/// Raw Gaussian weights w(dx,dy) = exp(-(dx^2+dy^2)/(2 sigma^2)); the center
/// tap is then replaced by the sum of the 8 neighbors and the kernel is
/// normalized to sum 1, so the normalized center weight is exactly 0.5.
struct SvlsKernel {
  double sigma;
  std::array<double, 9> weights;  // row-major, index (dy+1)*3 + (dx+1)

  double at(int dy, int dx) const { return weights[(dy + 1) * 3 + (dx + 1)]; }
};

inline SvlsKernel build_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  std::array<double, 9> w{};
  double neighbor_sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[(dy + 1) * 3 + (dx + 1)] = v;
      neighbor_sum += v;
    }
  w[4] = neighbor_sum;
  const double total = 2.0 * neighbor_sum;  // center equals neighbor sum
  for (auto& v : w) v /= total;
  return SvlsKernel{sigma, w};
}

/// Annotation boundary uncertainty: BU(p) = 1 - (kernel (*) onehot_c)(p) where
/// c is the true class at p. Borders use replicate padding. The smoothed
/// true-class probability only needs the taps whose (replicated) neighbor
/// label equals the center label, so no explicit one-hot tensor is built.
inline Tensor boundary_uncertainty(const LabelMap& labels, const SvlsKernel& kernel) {
  const auto h = static_cast<long>(labels.height());
  const auto w = static_cast<long>(labels.width());
  Tensor bu({labels.height(), labels.width()});
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const std::uint8_t c = labels.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      double smoothed = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        long yy = y + dy;
        yy = yy < 0 ? 0 : (yy >= h ? h - 1 : yy);
        for (int dx = -1; dx <= 1; ++dx) {
          long xx = x + dx;
          xx = xx < 0 ? 0 : (xx >= w ? w - 1 : xx);
          if (labels.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) == c)
            smoothed += kernel.at(dy, dx);
        }
      }
      double v = 1.0 - smoothed;
      if (v < 0.0) v = 0.0;  // guard the last-ulp of normalization
      if (v > 1.0) v = 1.0;
      bu.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = v;
    }
  }
  return bu;
}

}  // namespace pcd
