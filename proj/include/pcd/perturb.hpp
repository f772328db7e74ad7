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
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcd/io.hpp"
#include "pcd/rng.hpp"
#include "pcd/synth.hpp"
#include "pcd/tensor.hpp"

namespace pcd {

// ---------------------------------------------------------------------------
// Corruption families. The gaussian_noise severity ladder is the published
// one; every other ladder is a design constant shipped with the repo, and
// the asset-dependent reference corruptions (frost textures, JPEG codecs,
// ...) are replaced by documented self-contained approximations.
// ---------------------------------------------------------------------------

enum class Corruption {
  gaussian_noise,
  shot_noise,
  impulse_noise,
  defocus_blur,
  glass_blur,
  motion_blur,
  zoom_blur,
  snow,
  frost,
  fog,
  brightness,
  contrast,
  elastic,
  pixelate,
  jpeg,
};

inline const std::array<const char*, 15>& corruption_names() {
  static const std::array<const char*, 15> names = {
      "gaussian_noise", "shot_noise", "impulse_noise", "defocus_blur", "glass_blur",
      "motion_blur",    "zoom_blur",  "snow",          "frost",        "fog",
      "brightness",     "contrast",   "elastic",       "pixelate",     "jpeg"};
  return names;
}

inline const char* corruption_name(Corruption c) {
  return corruption_names()[static_cast<std::size_t>(c)];
}

inline Corruption corruption_from_name(const std::string& name) {
  const auto& names = corruption_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (name == names[i]) return static_cast<Corruption>(i);
  throw std::invalid_argument("unknown corruption family: " + name);
}

struct CorruptionSpec {
  Corruption family = Corruption::gaussian_noise;
  int severity = 1;  // 1..5
  std::uint64_t seed = 0;
};

/// Severity ladder table: family.severity -> parameter list. Shipped in the
/// repo as data/ladders.txt; the compiled-in table is the same text. The
/// PCD_LADDER_FILE environment variable points the CLI at an override file.
class SeverityLadder {
 public:
  static const char* builtin_text() {
    return
        "# severity ladder table: family.severity=param[,param...]\n"
        "# gaussian_noise follows the published sigma ladder; the rest are\n"
        "# design constants for the self-contained corruption approximations.\n"
        "gaussian_noise.1=0.04\n"
        "gaussian_noise.2=0.06\n"
        "gaussian_noise.3=0.08\n"
        "gaussian_noise.4=0.09\n"
        "gaussian_noise.5=0.10\n"
        "shot_noise.1=60\n"
        "shot_noise.2=25\n"
        "shot_noise.3=12\n"
        "shot_noise.4=5\n"
        "shot_noise.5=3\n"
        "impulse_noise.1=0.03\n"
        "impulse_noise.2=0.06\n"
        "impulse_noise.3=0.09\n"
        "impulse_noise.4=0.17\n"
        "impulse_noise.5=0.27\n"
        "defocus_blur.1=1\n"
        "defocus_blur.2=2\n"
        "defocus_blur.3=3\n"
        "defocus_blur.4=4\n"
        "defocus_blur.5=6\n"
        "glass_blur.1=0.6,1,1\n"
        "glass_blur.2=0.85,1,2\n"
        "glass_blur.3=1.1,1,2\n"
        "glass_blur.4=1.4,2,2\n"
        "glass_blur.5=1.7,2,3\n"
        "motion_blur.1=3\n"
        "motion_blur.2=5\n"
        "motion_blur.3=7\n"
        "motion_blur.4=9\n"
        "motion_blur.5=12\n"
        "zoom_blur.1=1.06\n"
        "zoom_blur.2=1.11\n"
        "zoom_blur.3=1.16\n"
        "zoom_blur.4=1.21\n"
        "zoom_blur.5=1.26\n"
        "snow.1=0.01,3,0.4\n"
        "snow.2=0.02,4,0.5\n"
        "snow.3=0.03,5,0.6\n"
        "snow.4=0.04,7,0.7\n"
        "snow.5=0.05,9,0.8\n"
        "frost.1=0.25\n"
        "frost.2=0.35\n"
        "frost.3=0.45\n"
        "frost.4=0.55\n"
        "frost.5=0.65\n"
        "fog.1=0.15\n"
        "fog.2=0.25\n"
        "fog.3=0.35\n"
        "fog.4=0.45\n"
        "fog.5=0.6\n"
        "brightness.1=0.1\n"
        "brightness.2=0.2\n"
        "brightness.3=0.3\n"
        "brightness.4=0.4\n"
        "brightness.5=0.5\n"
        "contrast.1=0.75\n"
        "contrast.2=0.6\n"
        "contrast.3=0.45\n"
        "contrast.4=0.3\n"
        "contrast.5=0.15\n"
        "elastic.1=1\n"
        "elastic.2=2\n"
        "elastic.3=3\n"
        "elastic.4=5\n"
        "elastic.5=7\n"
        "pixelate.1=0.6\n"
        "pixelate.2=0.5\n"
        "pixelate.3=0.4\n"
        "pixelate.4=0.3\n"
        "pixelate.5=0.25\n"
        "jpeg.1=25\n"
        "jpeg.2=18\n"
        "jpeg.3=15\n"
        "jpeg.4=10\n"
        "jpeg.5=7\n";
  }

  static SeverityLadder builtin() { return parse_text(builtin_text()); }

  static SeverityLadder from_file(const std::string& path) {
    std::string text;
    text = detail::read_file_bytes(path);
    return parse_text(text);
  }

  /// Builtin table unless PCD_LADDER_FILE names an override file.
  static SeverityLadder from_env_or_builtin() {
    const char* path = std::getenv("PCD_LADDER_FILE");
    return path && *path ? from_file(path) : builtin();
  }

  const std::vector<double>& params(const std::string& family, int severity) const {
    if (severity < 1 || severity > 5)
      throw std::invalid_argument("severity out of range: " + std::to_string(severity));
    const auto it = table_.find(family + "." + std::to_string(severity));
    if (it == table_.end())
      throw std::runtime_error("severity ladder missing entry for " + family + "." +
                               std::to_string(severity));
    return it->second;
  }

  bool operator==(const SeverityLadder& other) const { return table_ == other.table_; }

 private:
  static SeverityLadder parse_text(const std::string& text) {
    SeverityLadder ladder;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("malformed ladder line: " + line);
      const std::string key = line.substr(0, eq);
      std::vector<double> vals;
      for (const std::string& f : split_csv_line(line.substr(eq + 1)))
        vals.push_back(std::stod(f));
      if (vals.empty()) throw std::runtime_error("malformed ladder line: " + line);
      ladder.table_[key] = std::move(vals);
    }
    return ladder;
  }

  std::map<std::string, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// image helpers (replicate borders everywhere)
// ---------------------------------------------------------------------------

namespace imgops {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline double sample_clamped(const Tensor& img, std::size_t c, long y, long x) {
  const long h = static_cast<long>(img.extent(1)), w = static_cast<long>(img.extent(2));
  y = y < 0 ? 0 : (y >= h ? h - 1 : y);
  x = x < 0 ? 0 : (x >= w ? w - 1 : x);
  return img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
}

inline double bilinear(const Tensor& img, std::size_t c, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double wy = y - fy, wx = x - fx;
  const double v00 = sample_clamped(img, c, y0, x0);
  const double v01 = sample_clamped(img, c, y0, x0 + 1);
  const double v10 = sample_clamped(img, c, y0 + 1, x0);
  const double v11 = sample_clamped(img, c, y0 + 1, x0 + 1);
  return v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) + v11 * wy * wx;
}

/// Convolve every channel with a square kernel, replicate padding.
inline Tensor conv_replicate(const Tensor& img, const std::vector<double>& kernel, int radius) {
  const auto c_n = img.extent(0);
  const long h = static_cast<long>(img.extent(1)), w = static_cast<long>(img.extent(2));
  const int side = 2 * radius + 1;
  Tensor out(img.shape());
  for (std::size_t c = 0; c < c_n; ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < side; ++ky)
          for (int kx = 0; kx < side; ++kx)
            acc += kernel[static_cast<std::size_t>(ky * side + kx)] *
                   sample_clamped(img, c, y + ky - radius, x + kx - radius);
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
  return out;
}

inline Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k1(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k1[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k1[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k1) v /= sum;
  // separable: horizontal then vertical
  const auto c_n = img.extent(0);
  const long h = static_cast<long>(img.extent(1)), w = static_cast<long>(img.extent(2));
  Tensor mid(img.shape()), out(img.shape());
  for (std::size_t c = 0; c < c_n; ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k1[static_cast<std::size_t>(i + radius)] * sample_clamped(img, c, y, x + i);
        mid.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
  for (std::size_t c = 0; c < c_n; ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k1[static_cast<std::size_t>(i + radius)] * sample_clamped(mid, c, y + i, x);
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
  return out;
}

/// Smooth random field in [0,1]: bilinear interpolation of a coarse grid of
/// uniform draws. Octaves accumulate at halving cell sizes.
inline Tensor value_noise(std::size_t h, std::size_t w, int cell, int octaves, Rng& rng) {
  Tensor out({h, w});
  double weight = 1.0, total_weight = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const int step = std::max(1, cell >> o);
    const std::size_t gh = h / static_cast<std::size_t>(step) + 2;
    const std::size_t gw = w / static_cast<std::size_t>(step) + 2;
    std::vector<double> grid(gh * gw);
    for (auto& g : grid) g = rng.uniform();
    for (std::size_t y = 0; y < h; ++y) {
      const double gy = static_cast<double>(y) / step;
      const auto iy = static_cast<std::size_t>(gy);
      const double ty = gy - static_cast<double>(iy);
      for (std::size_t x = 0; x < w; ++x) {
        const double gx = static_cast<double>(x) / step;
        const auto ix = static_cast<std::size_t>(gx);
        const double tx = gx - static_cast<double>(ix);
        const double v00 = grid[iy * gw + ix], v01 = grid[iy * gw + ix + 1];
        const double v10 = grid[(iy + 1) * gw + ix], v11 = grid[(iy + 1) * gw + ix + 1];
        out.at(y, x) += weight * (v00 * (1 - ty) * (1 - tx) + v01 * (1 - ty) * tx +
                                  v10 * ty * (1 - tx) + v11 * ty * tx);
      }
    }
    total_weight += weight;
    weight *= 0.5;
  }
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] /= total_weight;
    lo = std::min(lo, out[i]);
    hi = std::max(hi, out[i]);
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = span > 1e-12 ? (out[i] - lo) / span : 0.5;
  return out;
}

/// Directional line kernel of the given length and angle, normalized.
inline std::pair<std::vector<double>, int> line_kernel(int length, double angle) {
  const int radius = std::max(1, (length - 1 + 1) / 2);
  const int side = 2 * radius + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side), 0.0);
  const double cx = std::cos(angle), cy = std::sin(angle);
  for (int i = 0; i < 2 * length - 1; ++i) {  // half-pixel steps avoid gaps
    const double t = 0.5 * i - 0.5 * (length - 1);
    const int px = static_cast<int>(std::lround(t * cx));
    const int py = static_cast<int>(std::lround(t * cy));
    k[static_cast<std::size_t>((py + radius) * side + (px + radius))] += 1.0;
  }
  double sum = 0.0;
  for (double v : k) sum += v;
  for (auto& v : k) v /= sum;
  return {std::move(k), radius};
}

inline double total_variation(const Tensor& img) {
  const auto c_n = img.extent(0);
  const std::size_t h = img.extent(1), w = img.extent(2);
  double tv = 0.0;
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (x + 1 < w) tv += std::abs(img.at(c, y, x + 1) - img.at(c, y, x));
        if (y + 1 < h) tv += std::abs(img.at(c, y + 1, x) - img.at(c, y, x));
      }
  return tv;
}

inline int poisson(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

}  // namespace imgops

// ---------------------------------------------------------------------------
// per-family transforms
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor corrupt_gaussian_noise(const Tensor& img, double sigma, Rng& rng) {
  Tensor out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i)
    out[i] = imgops::clamp01(img[i] + sigma * rng.normal());
  return out;
}

inline Tensor corrupt_shot_noise(const Tensor& img, double lambda, Rng& rng) {
  Tensor out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i)
    out[i] = imgops::clamp01(imgops::poisson(rng, img[i] * lambda) / lambda);
  return out;
}

inline Tensor corrupt_impulse_noise(const Tensor& img, double fraction, Rng& rng) {
  Tensor out = img;
  const std::size_t plane = img.extent(1) * img.extent(2);
  const std::size_t c_n = img.extent(0);
  for (std::size_t p = 0; p < plane; ++p) {
    const double u = rng.uniform();
    if (u < fraction) {
      const double v = u < fraction / 2.0 ? 0.0 : 1.0;
      for (std::size_t c = 0; c < c_n; ++c) out[c * plane + p] = v;
    }
  }
  return out;
}

inline Tensor corrupt_defocus_blur(const Tensor& img, double radius) {
  const int r = std::max(1, static_cast<int>(std::lround(radius)));
  const int side = 2 * r + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side), 0.0);
  double sum = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r + r / 4 + 1) {  // near-disk support
        k[static_cast<std::size_t>((dy + r) * side + (dx + r))] = 1.0;
        sum += 1.0;
      }
  for (auto& v : k) v /= sum;
  return imgops::conv_replicate(img, k, r);
}

inline Tensor corrupt_glass_blur(const Tensor& img, double sigma, int max_shift, int iters,
                                 Rng& rng) {
  // blur, locally shuffle, blur again; the closing blur keeps total
  // variation falling as severity rises
  Tensor out = imgops::gaussian_blur(img, sigma);
  const long h = static_cast<long>(img.extent(1)), w = static_cast<long>(img.extent(2));
  const std::size_t c_n = img.extent(0);
  for (int it = 0; it < iters; ++it)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const int dy = rng.uniform_int(-max_shift, max_shift);
        const int dx = rng.uniform_int(-max_shift, max_shift);
        long yy = y + dy, xx = x + dx;
        yy = yy < 0 ? 0 : (yy >= h ? h - 1 : yy);
        xx = xx < 0 ? 0 : (xx >= w ? w - 1 : xx);
        for (std::size_t c = 0; c < c_n; ++c)
          std::swap(out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)),
                    out.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
      }
  return imgops::gaussian_blur(out, sigma);
}

inline Tensor corrupt_motion_blur(const Tensor& img, int length, Rng& rng) {
  const double angle = rng.uniform(0.0, std::numbers::pi);
  auto [k, radius] = imgops::line_kernel(length, angle);
  return imgops::conv_replicate(img, k, radius);
}

inline Tensor corrupt_zoom_blur(const Tensor& img, double max_zoom) {
  const std::size_t c_n = img.extent(0);
  const std::size_t h = img.extent(1), w = img.extent(2);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor acc = img;
  const int steps = static_cast<int>(std::lround((max_zoom - 1.0) / 0.01));
  for (int s = 1; s <= steps; ++s) {
    const double f = 1.0 + 0.01 * s;
    for (std::size_t c = 0; c < c_n; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          acc.at(c, y, x) += imgops::bilinear(img, c, cy + (static_cast<double>(y) - cy) / f,
                                              cx + (static_cast<double>(x) - cx) / f);
  }
  const int count = steps + 1;
  for (std::size_t i = 0; i < acc.numel(); ++i)
    acc[i] = imgops::clamp01(acc[i] / static_cast<double>(count));
  return acc;
}

inline Tensor corrupt_snow(const Tensor& img, double density, int length, double intensity,
                           Rng& rng) {
  const std::size_t h = img.extent(1), w = img.extent(2);
  Tensor speck({1, h, w});
  for (std::size_t i = 0; i < speck.numel(); ++i) speck[i] = rng.uniform() < density ? 1.0 : 0.0;
  const double angle = rng.uniform(0.35, 0.65) * std::numbers::pi;  // roughly downward
  auto [k, radius] = imgops::line_kernel(length, angle);
  Tensor streak = imgops::conv_replicate(speck, k, radius);
  Tensor out = img;
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < img.extent(0); ++c)
    for (std::size_t p = 0; p < plane; ++p) {
      const double s = std::min(1.0, streak[p] * static_cast<double>(length));
      out[c * plane + p] = imgops::clamp01(out[c * plane + p] + intensity * s);
    }
  return out;
}

inline Tensor corrupt_frost(const Tensor& img, double alpha, Rng& rng) {
  // seeded value-noise frost map, screen-blended (multiplicative on the
  // inverted image) so crystals brighten
  Tensor f = imgops::value_noise(img.extent(1), img.extent(2), 12, 3, rng);
  Tensor out(img.shape());
  const std::size_t plane = img.extent(1) * img.extent(2);
  for (std::size_t c = 0; c < img.extent(0); ++c)
    for (std::size_t p = 0; p < plane; ++p)
      out[c * plane + p] =
          imgops::clamp01(1.0 - (1.0 - img[c * plane + p]) * (1.0 - alpha * f[p]));
  return out;
}

inline Tensor corrupt_fog(const Tensor& img, double alpha, Rng& rng) {
  Tensor haze = imgops::value_noise(img.extent(1), img.extent(2), 24, 4, rng);
  Tensor out(img.shape());
  const std::size_t plane = img.extent(1) * img.extent(2);
  for (std::size_t c = 0; c < img.extent(0); ++c)
    for (std::size_t p = 0; p < plane; ++p) {
      const double bright = 0.6 + 0.4 * haze[p];
      out[c * plane + p] = imgops::clamp01(img[c * plane + p] * (1.0 - alpha) + alpha * bright);
    }
  return out;
}

inline Tensor corrupt_brightness(const Tensor& img, double offset) {
  Tensor out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) out[i] = imgops::clamp01(img[i] + offset);
  return out;
}

inline Tensor corrupt_contrast(const Tensor& img, double factor) {
  const std::size_t plane = img.extent(1) * img.extent(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < img.extent(0); ++c) {
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += img[c * plane + p];
    mean /= static_cast<double>(plane);
    for (std::size_t p = 0; p < plane; ++p)
      out[c * plane + p] = imgops::clamp01((img[c * plane + p] - mean) * factor + mean);
  }
  return out;
}

inline Tensor corrupt_elastic(const Tensor& img, double amplitude, Rng& rng) {
  const std::size_t h = img.extent(1), w = img.extent(2);
  Tensor dy({1, h, w}), dx({1, h, w});
  for (std::size_t i = 0; i < dy.numel(); ++i) dy[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = rng.uniform(-1.0, 1.0);
  dy = imgops::gaussian_blur(dy, 6.0);
  dx = imgops::gaussian_blur(dx, 6.0);
  double maxabs = 1e-8;
  for (std::size_t i = 0; i < dy.numel(); ++i)
    maxabs = std::max({maxabs, std::abs(dy[i]), std::abs(dx[i])});
  const double scale = amplitude / maxabs;
  Tensor out(img.shape());
  for (std::size_t c = 0; c < img.extent(0); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = imgops::bilinear(img, c, static_cast<double>(y) + dy[y * w + x] * scale,
                                           static_cast<double>(x) + dx[y * w + x] * scale);
  return out;
}

inline Tensor corrupt_pixelate(const Tensor& img, double scale) {
  const std::size_t h = img.extent(1), w = img.extent(2);
  const auto hs = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(h) * scale)));
  const auto ws = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(w) * scale)));
  Tensor out(img.shape());
  for (std::size_t c = 0; c < img.extent(0); ++c) {
    std::vector<double> small(hs * ws, 0.0);
    for (std::size_t ty = 0; ty < hs; ++ty) {
      const std::size_t y0 = ty * h / hs, y1 = std::max(y0 + 1, (ty + 1) * h / hs);
      for (std::size_t tx = 0; tx < ws; ++tx) {
        const std::size_t x0 = tx * w / ws, x1 = std::max(x0 + 1, (tx + 1) * w / ws);
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) acc += img.at(c, y, x);
        small[ty * ws + tx] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = small[(y * hs / h) * ws + (x * ws / w)];
  }
  return out;
}

// 8x8 blockwise DCT with a quality-scaled quantization table; no chroma
// subsampling, channels quantized independently.
inline Tensor corrupt_jpeg(const Tensor& img, double quality) {
  static const int kLumaQuant[64] = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  const double q = std::min(100.0, std::max(1.0, quality));
  const double s = q < 50.0 ? 5000.0 / q : 200.0 - 2.0 * q;
  double quant[64];
  for (int i = 0; i < 64; ++i)
    quant[i] = std::min(255.0, std::max(1.0, std::floor((kLumaQuant[i] * s + 50.0) / 100.0)));

  // orthonormal 8-point DCT-II basis
  double basis[8][8];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x)
      basis[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                    std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);

  const std::size_t h = img.extent(1), w = img.extent(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < img.extent(0); ++c) {
    for (std::size_t by = 0; by < h; by += 8)
      for (std::size_t bx = 0; bx < w; bx += 8) {
        double block[8][8], tmp[8][8], coef[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y][x] = imgops::sample_clamped(img, c, static_cast<long>(by) + y,
                                                 static_cast<long>(bx) + x) *
                              255.0 -
                          128.0;
        // coef = basis * block * basis^T
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += basis[u][y] * block[y][x];
            tmp[u][x] = acc;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += tmp[u][x] * basis[v][x];
            coef[u][v] = std::round(acc / quant[u * 8 + v]) * quant[u * 8 + v];
          }
        // block = basis^T * coef * basis
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += basis[u][y] * coef[u][v];
            tmp[y][v] = acc;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v) acc += tmp[y][v] * basis[v][x];
            block[y][x] = acc;
          }
        for (int y = 0; y < 8 && by + static_cast<std::size_t>(y) < h; ++y)
          for (int x = 0; x < 8 && bx + static_cast<std::size_t>(x) < w; ++x)
            out.at(c, by + static_cast<std::size_t>(y), bx + static_cast<std::size_t>(x)) =
                imgops::clamp01((block[y][x] + 128.0) / 255.0);
      }
  }
  return out;
}

inline const std::vector<double>& ladder_params(const SeverityLadder& ladder,
                                                const CorruptionSpec& spec, std::size_t arity) {
  const auto& p = ladder.params(corruption_name(spec.family), spec.severity);
  if (p.size() < arity)
    throw std::runtime_error(std::string("malformed ladder entry for ") +
                             corruption_name(spec.family));
  return p;
}

}  // namespace detail

/// Apply one corruption at the given severity; deterministic for a given
/// spec.seed, output clamped to [0,1] with the input shape preserved.
inline Tensor corrupt(const Tensor& image, const CorruptionSpec& spec,
                      const SeverityLadder& ladder) {
  if (image.ndim() != 3) throw std::invalid_argument("corrupt expects [C,H,W]");
  if (spec.severity < 1 || spec.severity > 5)
    throw std::invalid_argument("severity out of range: " + std::to_string(spec.severity));
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(spec.family) * 8 +
                                     static_cast<std::uint64_t>(spec.severity)));
  using detail::ladder_params;
  switch (spec.family) {
    case Corruption::gaussian_noise:
      return detail::corrupt_gaussian_noise(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::shot_noise:
      return detail::corrupt_shot_noise(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::impulse_noise:
      return detail::corrupt_impulse_noise(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::defocus_blur:
      return detail::corrupt_defocus_blur(image, ladder_params(ladder, spec, 1)[0]);
    case Corruption::glass_blur: {
      const auto& p = ladder_params(ladder, spec, 3);
      return detail::corrupt_glass_blur(image, p[0], static_cast<int>(p[1]),
                                        static_cast<int>(p[2]), rng);
    }
    case Corruption::motion_blur:
      return detail::corrupt_motion_blur(
          image, static_cast<int>(ladder_params(ladder, spec, 1)[0]), rng);
    case Corruption::zoom_blur:
      return detail::corrupt_zoom_blur(image, ladder_params(ladder, spec, 1)[0]);
    case Corruption::snow: {
      const auto& p = ladder_params(ladder, spec, 3);
      return detail::corrupt_snow(image, p[0], static_cast<int>(p[1]), p[2], rng);
    }
    case Corruption::frost:
      return detail::corrupt_frost(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::fog:
      return detail::corrupt_fog(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::brightness:
      return detail::corrupt_brightness(image, ladder_params(ladder, spec, 1)[0]);
    case Corruption::contrast:
      return detail::corrupt_contrast(image, ladder_params(ladder, spec, 1)[0]);
    case Corruption::elastic:
      return detail::corrupt_elastic(image, ladder_params(ladder, spec, 1)[0], rng);
    case Corruption::pixelate:
      return detail::corrupt_pixelate(image, ladder_params(ladder, spec, 1)[0]);
    case Corruption::jpeg:
      return detail::corrupt_jpeg(image, ladder_params(ladder, spec, 1)[0]);
  }
  throw std::invalid_argument("unknown corruption family");
}

/// Mirror a dataset folder with corrupted images and untouched labels.
inline void corrupt_dataset(const std::string& in_dir, const std::string& out_dir,
                            const CorruptionSpec& spec, const SeverityLadder& ladder) {
  if (spec.severity < 1 || spec.severity > 5)
    throw std::invalid_argument("severity out of range: " + std::to_string(spec.severity));
  Dataset ds = load_dataset(in_dir);
  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    CorruptionSpec per_image = spec;
    per_image.seed = derive_seed(spec.seed, i);
    save_pgm(corrupt(ds.samples[i].image, per_image, ladder), out_dir + "/" + image_name(i));
    // labels copied byte-for-byte
    detail::write_file_bytes(out_dir + "/" + label_name(i),
                             detail::read_file_bytes(in_dir + "/" + label_name(i)));
  }
  KeyValues kv = ds.manifest;
  kv["corruption"] = corruption_name(spec.family);
  kv["corruption_severity"] = std::to_string(spec.severity);
  kv["corruption_seed"] = std::to_string(spec.seed);
  save_keyvalues(kv, out_dir + "/manifest.txt");
}

}  // namespace pcd
