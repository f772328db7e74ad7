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
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pcd {

/// Dense row-major real tensor with explicit shape.
///
/// Layout is always [channel, row, col] for image-like data. Values live as
/// f64 in memory so loss accumulation and finite-difference checks stay
/// clean; files store f32 (see io.hpp).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_))
      throw std::invalid_argument("tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t extent(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // [H,W] accessors
  double& at(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
  double at(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }

  // [C,H,W] accessors
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw std::invalid_argument("tensor extent must be positive");
      if (e > (std::size_t{1} << 31) / n) throw std::invalid_argument("dimension overflow");
      n *= e;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Per-pixel semantic class index grid with class count K.
class LabelMap {
 public:
  LabelMap() = default;

  LabelMap(std::size_t height, std::size_t width, int classes)
      : height_(height), width_(width), classes_(classes), labels_(height * width, 0) {
    validate_dims();
  }

  LabelMap(std::size_t height, std::size_t width, int classes, std::vector<std::uint8_t> labels)
      : height_(height), width_(width), classes_(classes), labels_(std::move(labels)) {
    validate_dims();
    if (labels_.size() != height_ * width_)
      throw std::invalid_argument("label data length does not match dimensions");
    for (std::uint8_t v : labels_)
      if (static_cast<int>(v) >= classes_)
        throw std::invalid_argument("label index out of range: " + std::to_string(v));
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  int classes() const { return classes_; }
  std::size_t size() const { return labels_.size(); }

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }

  void set(std::size_t y, std::size_t x, int c) {
    if (c < 0 || c >= classes_) throw std::invalid_argument("label index out of range");
    labels_[y * width_ + x] = static_cast<std::uint8_t>(c);
  }

  const std::vector<std::uint8_t>& labels() const { return labels_; }

 private:
  void validate_dims() const {
    if (height_ == 0 || width_ == 0) throw std::invalid_argument("label map must be non-empty");
    if (classes_ < 1 || classes_ > 256)
      throw std::invalid_argument("class count must be in [1, 256]");
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  int classes_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// One-hot encoding [K,H,W]: exactly one 1.0 per pixel across the channel axis.
inline Tensor one_hot(const LabelMap& labels) {
  const std::size_t h = labels.height(), w = labels.width();
  const auto k = static_cast<std::size_t>(labels.classes());
  Tensor out({k, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out.at(labels.at(y, x), y, x) = 1.0;
  return out;
}

}  // namespace pcd
