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

struct Temperature {
  double value = 1.0;
};

inline constexpr double kProbFloor = 1e-12;

/// Per-pixel softmax of z/T over the channel axis of a [K,H,W] logit tensor.
inline Tensor scaled_softmax(const Tensor& logits, Temperature t) {
  if (!(t.value > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (logits.ndim() != 3) throw std::invalid_argument("scaled_softmax expects [K,H,W]");
  const std::size_t k = logits.extent(0), h = logits.extent(1), w = logits.extent(2);
  const std::size_t plane = h * w;
  Tensor probs(logits.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double maxz = -1e300;
    for (std::size_t c = 0; c < k; ++c) maxz = std::max(maxz, logits[c * plane + p]);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double e = std::exp((logits[c * plane + p] - maxz) / t.value);
      probs[c * plane + p] = e;
      sum += e;
    }
    for (std::size_t c = 0; c < k; ++c) probs[c * plane + p] /= sum;
  }
  return probs;
}

inline Tensor softmax(const Tensor& logits) { return scaled_softmax(logits, Temperature{1.0}); }

/// Per-pixel maximum channel probability of a [K,H,W] probability tensor.
inline Tensor confidence(const Tensor& probs) {
  if (probs.ndim() != 3) throw std::invalid_argument("confidence expects [K,H,W]");
  const std::size_t k = probs.extent(0), h = probs.extent(1), w = probs.extent(2);
  const std::size_t plane = h * w;
  Tensor conf({h, w});
  for (std::size_t p = 0; p < plane; ++p) {
    double m = 0.0;
    for (std::size_t c = 0; c < k; ++c) m = std::max(m, probs[c * plane + p]);
    conf[p] = m;
  }
  return conf;
}

/// Prediction uncertainty PU = 1 - confidence, per pixel.
inline Tensor prediction_uncertainty(const Tensor& probs) {
  Tensor pu = confidence(probs);
  for (std::size_t i = 0; i < pu.numel(); ++i) pu[i] = 1.0 - pu[i];
  return pu;
}

/// Per-pixel argmax over channels of a [K,H,W] tensor, as a label map.
inline LabelMap argmax_labels(const Tensor& scores) {
  if (scores.ndim() != 3) throw std::invalid_argument("argmax_labels expects [K,H,W]");
  const std::size_t k = scores.extent(0), h = scores.extent(1), w = scores.extent(2);
  const std::size_t plane = h * w;
  LabelMap out(h, w, static_cast<int>(k));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      std::size_t best = 0;
      double bestv = scores[p];
      for (std::size_t c = 1; c < k; ++c)
        if (scores[c * plane + p] > bestv) {
          bestv = scores[c * plane + p];
          best = c;
        }
      out.set(y, x, static_cast<int>(best));
    }
  return out;
}

namespace detail {

// Mean per-pixel NLL of softmax(z/T) against the labels, summed in index
// order for determinism.
inline double mean_nll_at(const std::vector<Tensor>& logits, const std::vector<LabelMap>& labels,
                          double t) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const Tensor& z = logits[i];
    const LabelMap& lm = labels[i];
    const std::size_t k = z.extent(0), h = z.extent(1), w = z.extent(2);
    const std::size_t plane = h * w;
    for (std::size_t p = 0; p < plane; ++p) {
      double maxz = -1e300;
      for (std::size_t c = 0; c < k; ++c) maxz = std::max(maxz, z[c * plane + p]);
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += std::exp((z[c * plane + p] - maxz) / t);
      const std::size_t true_c = lm.labels()[p];
      const double log_p = (z[true_c * plane + p] - maxz) / t - std::log(sum);
      total += -log_p;
    }
    count += plane;
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

inline double mean_nll(const std::vector<Tensor>& logits, const std::vector<LabelMap>& labels,
                       Temperature t = Temperature{1.0}) {
  return detail::mean_nll_at(logits, labels, t.value);
}

/// Expected calibration error with 15 equal-width confidence bins.
inline double ece_15bin(const std::vector<Tensor>& probs, const std::vector<LabelMap>& labels) {
  constexpr int kBins = 15;
  double bin_conf[kBins] = {0};
  double bin_acc[kBins] = {0};
  std::size_t bin_n[kBins] = {0};
  std::size_t total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Tensor& pr = probs[i];
    const std::size_t k = pr.extent(0), plane = pr.extent(1) * pr.extent(2);
    for (std::size_t p = 0; p < plane; ++p) {
      double conf = 0.0;
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c)
        if (pr[c * plane + p] > conf) {
          conf = pr[c * plane + p];
          arg = c;
        }
      int b = static_cast<int>(conf * kBins);
      if (b >= kBins) b = kBins - 1;
      bin_conf[b] += conf;
      bin_acc[b] += (arg == labels[i].labels()[p]) ? 1.0 : 0.0;
      ++bin_n[b];
      ++total;
    }
  }
  double ece = 0.0;
  for (int b = 0; b < kBins; ++b) {
    if (bin_n[b] == 0) continue;
    const double n = static_cast<double>(bin_n[b]);
    ece += (n / static_cast<double>(total)) * std::abs(bin_acc[b] / n - bin_conf[b] / n);
  }
  return ece;
}

struct CalibrationReport {
  double t_fitted = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
};

/// Fit the temperature by golden-section search on log T in [log 0.05, log 10]
/// minimizing mean per-pixel NLL, bracket tolerance 1e-3 in T. The endpoints
/// and T=1 are also evaluated, so fitting can never worsen the objective on
/// the fitting split and a monotone objective returns the exact bound.
inline CalibrationReport fit_temperature(const std::vector<Tensor>& logits,
                                         const std::vector<LabelMap>& labels) {
  if (logits.empty() || logits.size() != labels.size())
    throw std::invalid_argument("fit_temperature needs at least one (logits, labels) pair");
  const double t_lo = 0.05, t_hi = 10.0;
  double a = std::log(t_lo), b = std::log(t_hi);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = detail::mean_nll_at(logits, labels, std::exp(x1));
  double f2 = detail::mean_nll_at(logits, labels, std::exp(x2));
  while (std::exp(b) - std::exp(a) > 1e-3) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = detail::mean_nll_at(logits, labels, std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = detail::mean_nll_at(logits, labels, std::exp(x2));
    }
  }
  // evaluate the bounds and T=1 before the interior solution; strict
  // improvement is required to replace an earlier candidate, so a monotone
  // (or saturated, tied) objective resolves to the exact bound
  double best_t = t_lo;
  double best_f = detail::mean_nll_at(logits, labels, t_lo);
  for (double cand : {t_hi, 1.0, std::exp(0.5 * (a + b))}) {
    const double f = detail::mean_nll_at(logits, labels, cand);
    if (f < best_f) {
      best_f = f;
      best_t = cand;
    }
  }

  CalibrationReport report;
  report.t_fitted = best_t;
  report.nll_before = detail::mean_nll_at(logits, labels, 1.0);
  report.nll_after = best_f;
  std::vector<Tensor> probs_before, probs_after;
  probs_before.reserve(logits.size());
  probs_after.reserve(logits.size());
  for (const Tensor& z : logits) {
    probs_before.push_back(softmax(z));
    probs_after.push_back(scaled_softmax(z, Temperature{best_t}));
  }
  report.ece_before = ece_15bin(probs_before, labels);
  report.ece_after = ece_15bin(probs_after, labels);
  return report;
}

}  // namespace pcd
