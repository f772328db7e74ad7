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

#include <stdexcept>
#include <vector>

#include "pcd/tensor.hpp"

namespace pcd {

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  double dsc = 0.0, iou = 0.0, precision = 0.0;
  bool counted = false;  // false when the class is absent from both pred and gt
};

struct EvalResult {
  std::vector<ClassMetrics> per_class;
  double mean_dsc = 0.0;
  double mean_iou = 0.0;
  double mean_precision = 0.0;
};

/// Per-class DSC = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN), precision =
/// TP/(TP+FP). Classes absent from both maps are skipped from the means;
/// a class that is only hallucinated (or only missed) scores 0.
inline EvalResult evaluate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw std::invalid_argument("shape mismatch between prediction and ground truth");
  if (pred.classes() != gt.classes())
    throw std::invalid_argument("class count mismatch between prediction and ground truth");
  const int k = gt.classes();
  EvalResult r;
  r.per_class.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred.labels()[i];
    const int g = gt.labels()[i];
    if (p == g) {
      ++r.per_class[static_cast<std::size_t>(p)].tp;
    } else {
      ++r.per_class[static_cast<std::size_t>(p)].fp;
      ++r.per_class[static_cast<std::size_t>(g)].fn;
    }
  }
  std::size_t counted = 0;
  for (auto& c : r.per_class) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) continue;  // absent from both
    c.counted = true;
    ++counted;
    c.dsc = static_cast<double>(2 * c.tp) / static_cast<double>(denom);
    c.iou = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
    c.precision = c.tp + c.fp > 0
                      ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                      : 0.0;
    r.mean_dsc += c.dsc;
    r.mean_iou += c.iou;
    r.mean_precision += c.precision;
  }
  if (counted > 0) {
    r.mean_dsc /= static_cast<double>(counted);
    r.mean_iou /= static_cast<double>(counted);
    r.mean_precision /= static_cast<double>(counted);
  }
  return r;
}

/// Unweighted mean over images. Per-class entries average over the images
/// where that class was counted; raw counts are summed for reference.
inline EvalResult aggregate(const std::vector<EvalResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate needs at least one result");
  EvalResult agg;
  agg.per_class.resize(results.front().per_class.size());
  std::vector<std::size_t> counted_images(agg.per_class.size(), 0);
  for (const auto& r : results) {
    if (r.per_class.size() != agg.per_class.size())
      throw std::invalid_argument("aggregate: class count mismatch");
    agg.mean_dsc += r.mean_dsc;
    agg.mean_iou += r.mean_iou;
    agg.mean_precision += r.mean_precision;
    for (std::size_t c = 0; c < agg.per_class.size(); ++c) {
      agg.per_class[c].tp += r.per_class[c].tp;
      agg.per_class[c].fp += r.per_class[c].fp;
      agg.per_class[c].fn += r.per_class[c].fn;
      if (r.per_class[c].counted) {
        agg.per_class[c].dsc += r.per_class[c].dsc;
        agg.per_class[c].iou += r.per_class[c].iou;
        agg.per_class[c].precision += r.per_class[c].precision;
        ++counted_images[c];
      }
    }
  }
  const auto n = static_cast<double>(results.size());
  agg.mean_dsc /= n;
  agg.mean_iou /= n;
  agg.mean_precision /= n;
  for (std::size_t c = 0; c < agg.per_class.size(); ++c) {
    if (counted_images[c] == 0) continue;
    agg.per_class[c].counted = true;
    agg.per_class[c].dsc /= static_cast<double>(counted_images[c]);
    agg.per_class[c].iou /= static_cast<double>(counted_images[c]);
    agg.per_class[c].precision /= static_cast<double>(counted_images[c]);
  }
  return agg;
}

}  // namespace pcd
