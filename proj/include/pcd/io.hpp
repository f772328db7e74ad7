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

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcd/tensor.hpp"

namespace pcd {

// ---------------------------------------------------------------------------
// PCDT tensor files
//
// magic "PCDT" | version 0x01 | dtype 0x00 (f32) | ndim u8 |
// ndim x u32 little-endian extents | payload f32 little-endian row-major.
// Round-trips are bit-identical for f32-representable values.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t f32_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

inline float bits_f32(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace detail

inline void save_tensor(const Tensor& t, const std::string& path) {
  if (t.ndim() == 0) throw std::invalid_argument("cannot save empty tensor");
  if (t.ndim() > 255) throw std::invalid_argument("dimension overflow");
  if (!t.all_finite()) throw std::runtime_error("non-finite value in tensor");
  std::string out;
  out.reserve(7 + 4 * t.ndim() + 4 * t.numel());
  out += "PCDT";
  out.push_back(0x01);  // version
  out.push_back(0x00);  // dtype f32
  out.push_back(static_cast<char>(t.ndim()));
  for (std::size_t i = 0; i < t.ndim(); ++i) {
    if (t.extent(i) > 0xffffffffull) throw std::invalid_argument("dimension overflow");
    detail::put_u32_le(out, static_cast<std::uint32_t>(t.extent(i)));
  }
  for (std::size_t i = 0; i < t.numel(); ++i)
    detail::put_u32_le(out, detail::f32_bits(static_cast<float>(t[i])));
  detail::write_file_bytes(path, out);
}

inline Tensor load_tensor(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 7 || std::memcmp(p, "PCDT", 4) != 0)
    throw std::runtime_error("not a PCDT file: " + path);
  if (p[4] != 0x01) throw std::runtime_error("unsupported PCDT version");
  if (p[5] != 0x00) throw std::runtime_error("unsupported PCDT dtype");
  const std::size_t ndim = p[6];
  if (ndim == 0) throw std::runtime_error("dimension overflow");
  if (bytes.size() < 7 + 4 * ndim) throw std::runtime_error("bad payload length: " + path);
  std::vector<std::size_t> shape(ndim);
  std::size_t numel = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = detail::get_u32_le(p + 7 + 4 * i);
    if (shape[i] == 0 || shape[i] > (std::size_t{1} << 31) / numel)
      throw std::runtime_error("dimension overflow");
    numel *= shape[i];
  }
  const std::size_t header = 7 + 4 * ndim;
  if (bytes.size() != header + 4 * numel)
    throw std::runtime_error("bad payload length: " + path);
  std::vector<double> data(numel);
  for (std::size_t i = 0; i < numel; ++i)
    data[i] = static_cast<double>(detail::bits_f32(detail::get_u32_le(p + header + 4 * i)));
  Tensor t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw std::runtime_error("non-finite value in tensor file: " + path);
  return t;
}

// ---------------------------------------------------------------------------
// PNM images: binary P5 (grayscale) and P6 (RGB), maxval 255 only.
// Pixel values scale to [0,1] on load; save inverts exactly for multiples
// of 1/255.
// ---------------------------------------------------------------------------

namespace detail {

struct PnmHeader {
  char variant;  // '5' or '6'
  std::size_t width, height;
  std::size_t payload_offset;
};

inline PnmHeader parse_pnm_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw std::runtime_error("not a PNM file: " + path);
  const char variant = bytes[1];
  if (variant != '5' && variant != '6') {
    if (variant >= '1' && variant <= '7')
      throw std::runtime_error("unsupported PNM variant: P" + std::string(1, variant));
    throw std::runtime_error("not a PNM file: " + path);
  }
  std::size_t pos = 2;
  auto next_token = [&]() -> std::size_t {
    // Skip whitespace and '#' comment lines, then parse a decimal field.
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
      throw std::runtime_error("malformed PNM header: " + path);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 0xffffffffull) throw std::runtime_error("malformed PNM header: " + path);
      ++pos;
    }
    return v;
  };
  PnmHeader h;
  h.variant = variant;
  h.width = next_token();
  h.height = next_token();
  const std::size_t maxval = next_token();
  if (h.width == 0 || h.height == 0) throw std::runtime_error("malformed PNM header: " + path);
  if (maxval != 255) throw std::runtime_error("unsupported PNM maxval (must be 255): " + path);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw std::runtime_error("malformed PNM header: " + path);
  h.payload_offset = pos + 1;  // single whitespace byte before payload
  return h;
}

}  // namespace detail

inline Tensor load_pgm(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto h = detail::parse_pnm_header(bytes, path);
  if (h.variant != '5') throw std::runtime_error("expected P5 grayscale: " + path);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.payload_offset != n) throw std::runtime_error("bad payload length: " + path);
  Tensor t({1, h.height, h.width});
  for (std::size_t i = 0; i < n; ++i)
    t[i] = static_cast<unsigned char>(bytes[h.payload_offset + i]) / 255.0;
  return t;
}

inline void save_pgm(const Tensor& t, const std::string& path) {
  if (t.ndim() != 3 || t.extent(0) != 1)
    throw std::invalid_argument("save_pgm expects a [1,H,W] tensor");
  const std::size_t height = t.extent(1), width = t.extent(2);
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double v = t[i] < 0.0 ? 0.0 : (t[i] > 1.0 ? 1.0 : t[i]);
    out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
  }
  detail::write_file_bytes(path, out);
}

inline Tensor load_ppm(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto h = detail::parse_pnm_header(bytes, path);
  if (h.variant != '6') throw std::runtime_error("expected P6 RGB: " + path);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.payload_offset != 3 * n)
    throw std::runtime_error("bad payload length: " + path);
  Tensor t({3, h.height, h.width});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      t[c * n + i] = static_cast<unsigned char>(bytes[h.payload_offset + 3 * i + c]) / 255.0;
  return t;
}

inline void save_ppm(const Tensor& t, const std::string& path) {
  if (t.ndim() != 3 || t.extent(0) != 3)
    throw std::invalid_argument("save_ppm expects a [3,H,W] tensor");
  const std::size_t height = t.extent(1), width = t.extent(2);
  const std::size_t n = height * width;
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double raw = t[c * n + i];
      const double v = raw < 0.0 ? 0.0 : (raw > 1.0 ? 1.0 : raw);
      out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
  detail::write_file_bytes(path, out);
}

// Label maps persist as P5 with raw class indices 0..K-1 in the payload bytes.
inline LabelMap load_labels_pgm(const std::string& path, int classes) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto h = detail::parse_pnm_header(bytes, path);
  if (h.variant != '5') throw std::runtime_error("expected P5 label map: " + path);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.payload_offset != n) throw std::runtime_error("bad payload length: " + path);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<std::uint8_t>(bytes[h.payload_offset + i]);
  return LabelMap(h.height, h.width, classes, std::move(labels));
}

inline void save_labels_pgm(const LabelMap& m, const std::string& path) {
  std::string out =
      "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(m.labels().data()), m.labels().size());
  detail::write_file_bytes(path, out);
}

// ---------------------------------------------------------------------------
// key=value manifests (configs, checkpoints, severity ladders)
// ---------------------------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

inline void save_keyvalues(const KeyValues& kv, const std::string& path) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  detail::write_file_bytes(path, out);
}

inline KeyValues load_keyvalues(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed key=value line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& require_key(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("missing manifest key: " + key);
  return it->second;
}

// ---------------------------------------------------------------------------
// small formatting helpers (deterministic CSV output)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace pcd
