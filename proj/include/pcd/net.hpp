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

// ---------------------------------------------------------------------------
// Same-padding 2-D convolution primitives (stride 1, odd kernel, zero pad).
// Written as shift-and-accumulate over contiguous rows so the inner loops
// vectorize.
// ---------------------------------------------------------------------------

/// out[oc,y,x] = b[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * in[ic, y+ky-p, x+kx-p]
inline void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
  const long ic_n = static_cast<long>(w.extent(1));
  const long oc_n = static_cast<long>(w.extent(0));
  const long k = static_cast<long>(w.extent(2));
  const long p = (k - 1) / 2;
  const long h = static_cast<long>(in.extent(1));
  const long wd = static_cast<long>(in.extent(2));
  const long plane = h * wd;
  for (long oc = 0; oc < oc_n; ++oc) {
    double* op = out.data() + oc * plane;
    const double bias = b[static_cast<std::size_t>(oc)];
    for (long i = 0; i < plane; ++i) op[i] = bias;
    for (long ic = 0; ic < ic_n; ++ic) {
      const double* ip = in.data() + ic * plane;
      for (long ky = 0; ky < k; ++ky) {
        const long dy = ky - p;
        for (long kx = 0; kx < k; ++kx) {
          const long dx = kx - p;
          const double wv = w.data()[((oc * ic_n + ic) * k + ky) * k + kx];
          const long y0 = dy < 0 ? -dy : 0;
          const long y1 = dy > 0 ? h - dy : h;
          const long x0 = dx < 0 ? -dx : 0;
          const long x1 = dx > 0 ? wd - dx : wd;
          for (long y = y0; y < y1; ++y) {
            const double* src = ip + (y + dy) * wd + dx;
            double* dst = op + y * wd;
            for (long x = x0; x < x1; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

/// din[ic,y,x] = sum_{oc,ky,kx} w[oc,ic,ky,kx] * dout[oc, y-(ky-p), x-(kx-p)]
inline void conv2d_backward_input(const Tensor& w, const Tensor& dout, Tensor& din) {
  const long ic_n = static_cast<long>(w.extent(1));
  const long oc_n = static_cast<long>(w.extent(0));
  const long k = static_cast<long>(w.extent(2));
  const long p = (k - 1) / 2;
  const long h = static_cast<long>(dout.extent(1));
  const long wd = static_cast<long>(dout.extent(2));
  const long plane = h * wd;
  for (long i = 0; i < ic_n * plane; ++i) din.data()[i] = 0.0;
  for (long oc = 0; oc < oc_n; ++oc) {
    const double* dp = dout.data() + oc * plane;
    for (long ic = 0; ic < ic_n; ++ic) {
      double* gp = din.data() + ic * plane;
      for (long ky = 0; ky < k; ++ky) {
        const long dy = ky - p;
        for (long kx = 0; kx < k; ++kx) {
          const long dx = kx - p;
          const double wv = w.data()[((oc * ic_n + ic) * k + ky) * k + kx];
          // The input pixel at (y, x) feeds output (y - dy, x - dx).
          const long y0 = dy > 0 ? dy : 0;
          const long y1 = dy < 0 ? h + dy : h;
          const long x0 = dx > 0 ? dx : 0;
          const long x1 = dx < 0 ? wd + dx : wd;
          for (long y = y0; y < y1; ++y) {
            const double* src = dp + (y - dy) * wd - dx;
            double* dst = gp + y * wd;
            for (long x = x0; x < x1; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

/// dw[oc,ic,ky,kx] += sum_{y,x} dout[oc,y,x] * in[ic, y+ky-p, x+kx-p]
/// db[oc] += sum_{y,x} dout[oc,y,x]
inline void conv2d_backward_params(const Tensor& in, const Tensor& dout, std::size_t kernel,
                                   Tensor& dw_acc, Tensor& db_acc) {
  const long ic_n = static_cast<long>(in.extent(0));
  const long oc_n = static_cast<long>(dout.extent(0));
  const long k = static_cast<long>(kernel);
  const long p = (k - 1) / 2;
  const long h = static_cast<long>(in.extent(1));
  const long wd = static_cast<long>(in.extent(2));
  const long plane = h * wd;
  for (long oc = 0; oc < oc_n; ++oc) {
    const double* dp = dout.data() + oc * plane;
    double bsum = 0.0;
    for (long i = 0; i < plane; ++i) bsum += dp[i];
    db_acc[static_cast<std::size_t>(oc)] += bsum;
    for (long ic = 0; ic < ic_n; ++ic) {
      const double* ip = in.data() + ic * plane;
      for (long ky = 0; ky < k; ++ky) {
        const long dy = ky - p;
        for (long kx = 0; kx < k; ++kx) {
          const long dx = kx - p;
          const long y0 = dy < 0 ? -dy : 0;
          const long y1 = dy > 0 ? h - dy : h;
          const long x0 = dx < 0 ? -dx : 0;
          const long x1 = dx > 0 ? wd - dx : wd;
          double acc = 0.0;
          for (long y = y0; y < y1; ++y) {
            const double* src = ip + (y + dy) * wd + dx;
            const double* dst = dp + y * wd;
            for (long x = x0; x < x1; ++x) acc += dst[x] * src[x];
          }
          dw_acc.data()[((oc * ic_n + ic) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Fully-convolutional segmentation network.
// Default stack: conv3x3 C->F, ReLU, conv3x3 F->F, ReLU, conv1x1 F->K.
// ---------------------------------------------------------------------------

struct ConvLayerSpec {
  int in_channels;
  int out_channels;
  int kernel;
  bool relu;
};

struct ConvNet {
  std::vector<ConvLayerSpec> layers;
  std::vector<Tensor> weights;  // per layer [out, in, k, k]
  std::vector<Tensor> biases;   // per layer [out]

  int in_channels() const { return layers.front().in_channels; }
  int out_channels() const { return layers.back().out_channels; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) n += weights[l].numel() + biases[l].numel();
    return n;
  }
};

inline ConvNet make_net(std::vector<ConvLayerSpec> layers) {
  if (layers.empty()) throw std::invalid_argument("network needs at least one layer");
  ConvNet net;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    if (s.kernel % 2 == 0 || s.kernel < 1) throw std::invalid_argument("kernel must be odd");
    if (l > 0 && s.in_channels != layers[l - 1].out_channels)
      throw std::invalid_argument("layer channel mismatch");
    net.weights.emplace_back(std::vector<std::size_t>{
        static_cast<std::size_t>(s.out_channels), static_cast<std::size_t>(s.in_channels),
        static_cast<std::size_t>(s.kernel), static_cast<std::size_t>(s.kernel)});
    net.biases.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(s.out_channels)});
  }
  net.layers = std::move(layers);
  return net;
}

inline ConvNet make_segnet(int in_channels, int classes, int width = 16) {
  return make_net({{in_channels, width, 3, true}, {width, width, 3, true}, {width, classes, 1, false}});
}

/// Fan-in-scaled uniform init, +-sqrt(6 / fan_in); biases start at zero.
inline void init_params(ConvNet& net, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& s = net.layers[l];
    const double bound = std::sqrt(6.0 / (s.in_channels * s.kernel * s.kernel));
    for (std::size_t i = 0; i < net.weights[l].numel(); ++i)
      net.weights[l][i] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < net.biases[l].numel(); ++i) net.biases[l][i] = 0.0;
  }
}

struct ForwardCache {
  std::vector<Tensor> inputs;  // inputs[l] feeds layer l; inputs[0] is the image
  std::vector<Tensor> pre;     // pre-activation conv outputs per layer
};

/// Deterministic forward pass; spatial dims are preserved by same-padding.
inline Tensor forward(const ConvNet& net, const Tensor& image, ForwardCache* cache = nullptr) {
  if (image.ndim() != 3 || static_cast<int>(image.extent(0)) != net.in_channels())
    throw std::invalid_argument("input shape mismatch");
  const std::size_t h = image.extent(1), w = image.extent(2);
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Tensor cur = image;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& s = net.layers[l];
    Tensor out({static_cast<std::size_t>(s.out_channels), h, w});
    conv2d_forward(cur, net.weights[l], net.biases[l], out);
    if (cache) {
      cache->inputs.push_back(std::move(cur));
      cache->pre.push_back(out);
    }
    if (s.relu)
      for (std::size_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    cur = std::move(out);
  }
  return cur;
}

struct Gradients {
  std::vector<Tensor> dw;
  std::vector<Tensor> db;
};

inline Gradients make_zero_grads(const ConvNet& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    g.dw.emplace_back(net.weights[l].shape());
    g.db.emplace_back(net.biases[l].shape());
  }
  return g;
}

inline void add_grads(Gradients& into, const Gradients& from) {
  for (std::size_t l = 0; l < into.dw.size(); ++l) {
    for (std::size_t i = 0; i < into.dw[l].numel(); ++i) into.dw[l][i] += from.dw[l][i];
    for (std::size_t i = 0; i < into.db[l].numel(); ++i) into.db[l][i] += from.db[l][i];
  }
}

/// Analytic backprop from a per-pixel logit gradient; parameter gradients are
/// accumulated into `grads` so batch members can share one buffer.
inline void accumulate_backward(const ConvNet& net, const ForwardCache& cache,
                                const Tensor& dlogits, Gradients& grads) {
  Tensor delta = dlogits;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (net.layers[l].relu) {
      const Tensor& pre = cache.pre[l];
      for (std::size_t i = 0; i < delta.numel(); ++i)
        if (pre[i] <= 0.0) delta[i] = 0.0;
    }
    conv2d_backward_params(cache.inputs[l], delta, static_cast<std::size_t>(net.layers[l].kernel),
                           grads.dw[l], grads.db[l]);
    if (l > 0) {
      Tensor prev(cache.inputs[l].shape());
      conv2d_backward_input(net.weights[l], delta, prev);
      delta = std::move(prev);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam with standard bias correction.
// ---------------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m_w, v_w, m_b, v_b;
};

inline AdamState make_adam(const ConvNet& net, double lr = 1e-3) {
  AdamState s;
  s.lr = lr;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    s.m_w.emplace_back(net.weights[l].shape());
    s.v_w.emplace_back(net.weights[l].shape());
    s.m_b.emplace_back(net.biases[l].shape());
    s.v_b.emplace_back(net.biases[l].shape());
  }
  return s;
}

namespace detail {

inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, double lr,
                        double beta1, double beta2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace detail

inline void adam_step(AdamState& state, ConvNet& net, const Gradients& grads) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    detail::adam_update(net.weights[l], grads.dw[l], state.m_w[l], state.v_w[l], state.lr,
                        state.beta1, state.beta2, state.eps, bc1, bc2);
    detail::adam_update(net.biases[l], grads.db[l], state.m_b[l], state.v_b[l], state.lr,
                        state.beta1, state.beta2, state.eps, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: one PCDT tensor per parameter plus a key=value manifest.
// ---------------------------------------------------------------------------

inline std::string encode_layers(const std::vector<ConvLayerSpec>& layers) {
  std::string s;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l) s += ",";
    s += std::to_string(layers[l].in_channels) + ":" + std::to_string(layers[l].out_channels) +
         ":" + std::to_string(layers[l].kernel) + ":" + (layers[l].relu ? "relu" : "linear");
  }
  return s;
}

inline std::vector<ConvLayerSpec> decode_layers(const std::string& s) {
  std::vector<ConvLayerSpec> layers;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(pos, end - pos);
    int in_ch = 0, out_ch = 0, k = 0;
    char act[16] = {0};
    if (std::sscanf(item.c_str(), "%d:%d:%d:%15s", &in_ch, &out_ch, &k, act) != 4)
      throw std::runtime_error("malformed layer spec: " + item);
    layers.push_back({in_ch, out_ch, k, std::string(act) == "relu"});
    pos = end + 1;
  }
  return layers;
}

inline void save_checkpoint(const ConvNet& net, const std::string& dir,
                            const KeyValues& extra = {}) {
  std::filesystem::create_directories(dir);
  KeyValues kv = extra;
  kv["format"] = "pcd-checkpoint-1";
  kv["layers"] = encode_layers(net.layers);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof(name), "layer%02zu_w.pcdt", l);
    save_tensor(net.weights[l], dir + "/" + name);
    std::snprintf(name, sizeof(name), "layer%02zu_b.pcdt", l);
    save_tensor(net.biases[l], dir + "/" + name);
  }
  save_keyvalues(kv, dir + "/manifest.txt");
}

inline ConvNet load_checkpoint(const std::string& dir, KeyValues* manifest_out = nullptr) {
  const KeyValues kv = load_keyvalues(dir + "/manifest.txt");
  if (require_key(kv, "format") != "pcd-checkpoint-1")
    throw std::runtime_error("unsupported checkpoint format in " + dir);
  ConvNet net = make_net(decode_layers(require_key(kv, "layers")));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof(name), "layer%02zu_w.pcdt", l);
    Tensor w = load_tensor(dir + "/" + name);
    if (!w.same_shape(net.weights[l])) throw std::runtime_error("checkpoint weight shape mismatch");
    net.weights[l] = std::move(w);
    std::snprintf(name, sizeof(name), "layer%02zu_b.pcdt", l);
    Tensor b = load_tensor(dir + "/" + name);
    if (!b.same_shape(net.biases[l])) throw std::runtime_error("checkpoint bias shape mismatch");
    net.biases[l] = std::move(b);
  }
  if (manifest_out) *manifest_out = kv;
  return net;
}

}  // namespace pcd
