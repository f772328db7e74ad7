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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcd/io.hpp"
#include "pcd/rng.hpp"
#include "pcd/tensor.hpp"

namespace pcd {

/// Synthetic scene parameters: ellipses and axis-aligned rectangles over a
/// uniform background, per-class intensity means, Gaussian pixel noise.
struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  int classes = 3;
  int min_shapes = 1;
  int max_shapes = 3;
  std::vector<double> class_means;  // empty -> default_class_means(classes)
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

inline std::vector<double> default_class_means(int classes) {
  std::vector<double> means(classes);
  for (int k = 0; k < classes; ++k)
    means[k] = classes == 1 ? 0.5 : 0.1 + 0.8 * k / static_cast<double>(classes - 1);
  return means;
}

inline std::vector<double> resolve_class_means(const SceneSpec& spec) {
  std::vector<double> means =
      spec.class_means.empty() ? default_class_means(spec.classes) : spec.class_means;
  if (static_cast<int>(means.size()) != spec.classes)
    throw std::invalid_argument("class_means size must equal class count");
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b)
      if (std::abs(means[a] - means[b]) < 0.15)
        throw std::invalid_argument("class intensity means must differ by at least 0.15");
  return means;
}

struct Sample {
  Tensor image;  // [1,H,W] in [0,1]
  LabelMap labels;
};

/// One scene, fully determined by the per-image seed. Later shapes occlude
/// earlier ones; image = class mean + Gaussian noise, clamped to [0,1].
/// Shape classes cycle through 1..K-1 in draw order, so any image with at
/// least K-1 shapes covers every foreground class.
inline Sample generate_one(const SceneSpec& spec, std::uint64_t image_seed) {
  if (spec.classes < 2) throw std::invalid_argument("scene needs at least 2 classes");
  if (spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes)
    throw std::invalid_argument("invalid shape count range");
  const std::vector<double> means = resolve_class_means(spec);
  const auto h = static_cast<long>(spec.height), w = static_cast<long>(spec.width);
  Rng rng(image_seed);

  LabelMap labels(spec.height, spec.width, spec.classes);
  const int n_shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  for (int s = 0; s < n_shapes; ++s) {
    const int cls = 1 + s % (spec.classes - 1);
    const bool ellipse = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
    const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(h);
    const double rx = rng.uniform(0.08, 0.22) * static_cast<double>(w);
    const double ry = rng.uniform(0.08, 0.22) * static_cast<double>(h);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx);
        const double dy = (static_cast<double>(y) + 0.5 - cy);
        const bool inside = ellipse
                                ? (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0
                                : std::abs(dx) <= rx && std::abs(dy) <= ry;
        if (inside)
          labels.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), cls);
      }
  }

  Tensor image({1, spec.height, spec.width});
  for (std::size_t i = 0; i < image.numel(); ++i) {
    double v = means[labels.labels()[i]];
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
    image[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
  return Sample{std::move(image), std::move(labels)};
}

/// n samples with per-image derived seeds; index_offset shifts the seed
/// stream so disjoint splits can come from one base seed.
inline std::vector<Sample> generate(const SceneSpec& spec, std::size_t n,
                                    std::size_t index_offset = 0) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_one(spec, derive_seed(spec.seed, index_offset + i)));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset folders: img_%05d.pgm + lbl_%05d.pgm (raw class indices) + manifest.
// ---------------------------------------------------------------------------

inline std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05zu.pgm", i);
  return buf;
}

inline std::string label_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lbl_%05zu.pgm", i);
  return buf;
}

inline void save_dataset(const std::vector<Sample>& samples, const std::string& dir,
                         const SceneSpec& spec, std::size_t index_offset = 0) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    save_pgm(samples[i].image, dir + "/" + image_name(i));
    save_labels_pgm(samples[i].labels, dir + "/" + label_name(i));
  }
  KeyValues kv;
  kv["height"] = std::to_string(spec.height);
  kv["width"] = std::to_string(spec.width);
  kv["classes"] = std::to_string(spec.classes);
  kv["count"] = std::to_string(samples.size());
  kv["seed"] = std::to_string(spec.seed);
  kv["offset"] = std::to_string(index_offset);
  kv["noise_sigma"] = format_double(spec.noise_sigma);
  kv["min_shapes"] = std::to_string(spec.min_shapes);
  kv["max_shapes"] = std::to_string(spec.max_shapes);
  std::string means;
  for (double m : resolve_class_means(spec)) {
    if (!means.empty()) means += ",";
    means += format_double(m);
  }
  kv["class_means"] = means;
  save_keyvalues(kv, dir + "/manifest.txt");
}

struct Dataset {
  std::vector<Sample> samples;
  KeyValues manifest;

  int classes() const { return std::stoi(require_key(manifest, "classes")); }
  std::size_t count() const { return samples.size(); }
};

inline Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.manifest = load_keyvalues(dir + "/manifest.txt");
  const auto n = static_cast<std::size_t>(std::stoul(require_key(ds.manifest, "count")));
  const int classes = std::stoi(require_key(ds.manifest, "classes"));
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.image = load_pgm(dir + "/" + image_name(i));
    s.labels = load_labels_pgm(dir + "/" + label_name(i), classes);
    if (s.labels.height() != s.image.extent(1) || s.labels.width() != s.image.extent(2))
      throw std::runtime_error("image/label dimension mismatch at index " + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace pcd
