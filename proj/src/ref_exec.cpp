/* Copyright 2026 The tinysed Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tinysed/ref_exec.hpp"

#include <algorithm>
#include <cmath>

namespace tinysed {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TensorF apply_layer(const Model& m, const LayerSpec& l, const TensorF& x) {
  const ModelWeights& w = m.weights;
  switch (l.kind) {
    case LayerKind::Conv2D:
      return conv2d(x, w.at(l.name + "/kernel"), w.at(l.name + "/bias"), l.padding, l.activation);
    case LayerKind::MaxPool2:
      return maxpool2(x);
    case LayerKind::Dense:
      return dense(x, w.at(l.name + "/kernel"), w.at(l.name + "/bias"), l.activation);
    case LayerKind::BatchNorm:
      return batchnorm(x, w.at(l.name + "/gamma"), w.at(l.name + "/beta"),
                       w.at(l.name + "/mean"), w.at(l.name + "/var"), l.activation);
    case LayerKind::Flatten: {
      TensorF y = x;
      y.reshape({x.size()});
      return y;
    }
    case LayerKind::Softmax:
      return softmax(x);
    case LayerKind::Recurrent:
      break;
  }
  throw DomainError("recurrent layer cannot be applied per patch");
}

}  // namespace

TensorF recurrent_cell(const TensorF& x, const TensorF& h, const RecurrentParams& p,
                       RecurrentMode mode) {
  const std::size_t in = x.size();
  const std::size_t hs = h.size();
  const std::size_t gates = mode == RecurrentMode::Gru ? 3 : 1;
  if (p.w_input.shape() != Shape{in, gates * hs} || p.w_recurrent.shape() != Shape{hs, gates * hs} ||
      p.bias.size() != gates * hs) {
    throw DomainError("recurrent cell: dimension mismatch");
  }
  const std::size_t cols = gates * hs;
  // Input projection for all gates.
  std::vector<double> xp(p.bias.values());
  for (std::size_t k = 0; k < in; ++k) {
    for (std::size_t j = 0; j < cols; ++j) xp[j] += x[k] * p.w_input[k * cols + j];
  }
  TensorF out({hs});
  if (mode == RecurrentMode::VanillaTanh) {
    for (std::size_t j = 0; j < hs; ++j) {
      double s = xp[j];
      for (std::size_t k = 0; k < hs; ++k) s += h[k] * p.w_recurrent[k * cols + j];
      out[j] = std::tanh(s);
    }
    return out;
  }
  std::vector<double> z(hs), r(hs);
  for (std::size_t j = 0; j < hs; ++j) {
    double sz = xp[j], sr = xp[hs + j];
    for (std::size_t k = 0; k < hs; ++k) {
      sz += h[k] * p.w_recurrent[k * cols + j];
      sr += h[k] * p.w_recurrent[k * cols + hs + j];
    }
    z[j] = sigmoid(sz);
    r[j] = sigmoid(sr);
  }
  for (std::size_t j = 0; j < hs; ++j) {
    double sn = xp[2 * hs + j];
    for (std::size_t k = 0; k < hs; ++k) sn += r[k] * h[k] * p.w_recurrent[k * cols + 2 * hs + j];
    const double n = std::tanh(sn);
    out[j] = (1.0 - z[j]) * n + z[j] * h[j];
  }
  return out;
}

TensorF batchnorm(const TensorF& x, const TensorF& gamma, const TensorF& beta,
                  const TensorF& mean, const TensorF& var, Activation act) {
  const std::size_t c = gamma.size();
  if (x.size() % c != 0 || x.shape().back() != c) {
    throw DomainError("batchnorm: channel count mismatch");
  }
  TensorF y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t ch = i % c;
    double v = (x[i] - mean[ch]) / std::sqrt(var[ch] + kBatchNormEps) * gamma[ch] + beta[ch];
    if (act == Activation::Relu) v = std::max(v, 0.0);
    y[i] = v;
  }
  return y;
}

TensorF softmax(const TensorF& logits) {
  TensorF p = logits;
  if (p.empty()) return p;
  const double mx = *std::max_element(p.values().begin(), p.values().end());
  double sum = 0.0;
  for (auto& v : p.values()) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p.values()) v /= sum;
  return p;
}

std::size_t argmax(const TensorF& v) {
  return static_cast<std::size_t>(
      std::distance(v.values().begin(), std::max_element(v.values().begin(), v.values().end())));
}

ForwardTrace forward(const Model& m, std::span<const TensorF> patches, bool keep_activations) {
  if (patches.empty()) throw DomainError("forward: no input patches");
  for (const TensorF& p : patches) {
    if (p.shape() != m.arch.input_shape) {
      throw DomainError("forward: patch shape " + shape_to_string(p.shape()) +
                        " does not match model input " + shape_to_string(m.arch.input_shape));
    }
  }
  const auto& layers = m.arch.layers;
  const std::size_t n_layers = layers.size();
  const std::size_t rec = m.arch.recurrent_index().value_or(n_layers);
  const auto tap = m.arch.embedding_index();
  const bool has_softmax = !layers.empty() && layers.back().kind == LayerKind::Softmax;
  const std::size_t logits_end = has_softmax ? n_layers - 1 : n_layers;

  ForwardTrace t;
  if (keep_activations) t.activations.resize(n_layers);

  // Per-patch prefix.
  const std::size_t prefix_end = std::min(rec, logits_end);
  std::vector<TensorF> per_patch;
  per_patch.reserve(patches.size());
  for (const TensorF& patch : patches) {
    TensorF cur = patch;
    for (std::size_t i = 0; i < prefix_end; ++i) {
      cur = apply_layer(m, layers[i], cur);
      if (keep_activations) t.activations[i].push_back(cur);
      if (tap && *tap == i) {
        if (t.embedding.empty()) t.embedding = TensorF(cur.shape(), 0.0);
        for (std::size_t k = 0; k < cur.size(); ++k) t.embedding[k] += cur[k];
      }
    }
    per_patch.push_back(std::move(cur));
  }
  if (!t.embedding.empty()) {
    for (auto& v : t.embedding.values()) v /= static_cast<double>(patches.size());
  }

  TensorF cur;
  if (rec < n_layers) {
    const LayerSpec& l = layers[rec];
    const RecurrentParams params{m.weights.at(l.name + "/w_input"),
                                 m.weights.at(l.name + "/w_recurrent"),
                                 m.weights.at(l.name + "/bias")};
    TensorF h({static_cast<std::size_t>(l.units)}, 0.0);
    for (const TensorF& x : per_patch) {
      h = recurrent_cell(x, h, params, l.rnn_mode);
      if (keep_activations) t.activations[rec].push_back(h);
    }
    cur = std::move(h);
    for (std::size_t i = rec + 1; i < logits_end; ++i) {
      cur = apply_layer(m, layers[i], cur);
      if (keep_activations) t.activations[i].push_back(cur);
    }
  } else {
    cur = TensorF(per_patch.front().shape(), 0.0);
    for (const TensorF& y : per_patch) {
      for (std::size_t k = 0; k < y.size(); ++k) cur[k] += y[k];
    }
    for (auto& v : cur.values()) v /= static_cast<double>(per_patch.size());
  }
  t.logits = cur;
  t.class_probs = softmax(cur);
  if (keep_activations && has_softmax) t.activations[n_layers - 1].push_back(t.class_probs);
  return t;
}

ForwardTrace forward(const Model& m, const TensorF& patch, bool keep_activations) {
  return forward(m, std::span<const TensorF>(&patch, 1), keep_activations);
}

}  // namespace tinysed
