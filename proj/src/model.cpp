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

#include "tinysed/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tinysed {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Dense: return "dense";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Recurrent: return "recurrent";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}
std::string to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }
std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "none"; }
std::string to_string(RecurrentMode m) {
  return m == RecurrentMode::Gru ? "gru" : "vanilla-tanh";
}

LayerSpec LayerSpec::conv(std::string name, int channels, Padding p, Activation a) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.name = std::move(name);
  l.units = channels;
  l.padding = p;
  l.activation = a;
  return l;
}

LayerSpec LayerSpec::pool(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::dense(std::string name, int units, Activation a, bool tap) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.name = std::move(name);
  l.units = units;
  l.activation = a;
  l.embedding_tap = tap;
  return l;
}

LayerSpec LayerSpec::batchnorm(std::string name, Activation a) {
  LayerSpec l;
  l.kind = LayerKind::BatchNorm;
  l.name = std::move(name);
  l.activation = a;
  return l;
}

LayerSpec LayerSpec::recurrent(std::string name, RecurrentMode mode, int hidden) {
  LayerSpec l;
  l.kind = LayerKind::Recurrent;
  l.name = std::move(name);
  l.units = hidden;
  l.rnn_mode = mode;
  l.activation = Activation::None;
  return l;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::softmax(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Softmax;
  l.name = std::move(name);
  return l;
}

std::optional<std::size_t> ModelArch::embedding_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].embedding_tap) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> ModelArch::recurrent_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::Recurrent) return i;
  }
  return std::nullopt;
}

std::size_t ModelArch::find_layer(const std::string& layer_name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == layer_name) return i;
  }
  throw DomainError("no layer named '" + layer_name + "' in " + name);
}

std::vector<LayerTrace> shape_trace(const ModelArch& arch) {
  if (arch.input_shape.size() != 3 || element_count(arch.input_shape) == 0) {
    throw DomainError(arch.name + ": input shape must be H,W,C with positive dims");
  }
  std::size_t softmax_count = 0;
  std::size_t tap_count = 0;
  std::size_t recurrent_count = 0;
  std::vector<LayerTrace> trace;
  trace.reserve(arch.layers.size());
  Shape cur = arch.input_shape;

  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string where = arch.name + "/" + l.name + ": ";
    LayerTrace t;
    t.input = cur;
    if (l.embedding_tap) ++tap_count;
    switch (l.kind) {
      case LayerKind::Conv2D: {
        if (cur.size() != 3) throw DomainError(where + "conv2d needs an H,W,C input");
        if (l.units <= 0) throw DomainError(where + "conv2d needs out channels > 0");
        const long shrink = l.padding == Padding::Valid ? 2 : 0;
        const long h = static_cast<long>(cur[0]) - shrink;
        const long w = static_cast<long>(cur[1]) - shrink;
        if (h <= 0 || w <= 0) throw DomainError(where + "non-positive spatial dimension");
        cur = {static_cast<std::size_t>(h), static_cast<std::size_t>(w),
               static_cast<std::size_t>(l.units)};
        break;
      }
      case LayerKind::MaxPool2:
        if (cur.size() != 3) throw DomainError(where + "maxpool2 needs an H,W,C input");
        cur = {(cur[0] + 1) / 2, (cur[1] + 1) / 2, cur[2]};
        break;
      case LayerKind::Dense:
        if (l.units <= 0) throw DomainError(where + "dense needs units > 0");
        cur = {static_cast<std::size_t>(l.units)};
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Softmax:
        break;
      case LayerKind::Recurrent:
        ++recurrent_count;
        if (cur.size() != 1) throw DomainError(where + "recurrent needs a vector input");
        if (l.units <= 0) throw DomainError(where + "recurrent needs hidden units > 0");
        cur = {static_cast<std::size_t>(l.units)};
        break;
      case LayerKind::Flatten:
        cur = {element_count(cur)};
        break;
    }
    if (l.kind == LayerKind::Softmax) {
      ++softmax_count;
      if (i + 1 != arch.layers.size()) throw DomainError(where + "softmax must be last");
    }
    t.output = cur;
    t.output_elements = element_count(cur);
    trace.push_back(std::move(t));
  }
  if (!arch.layers.empty() && softmax_count != 1) {
    throw DomainError(arch.name + ": exactly one softmax layer is required");
  }
  if (tap_count > 1) throw DomainError(arch.name + ": more than one embedding tap");
  if (recurrent_count > 1) throw DomainError(arch.name + ": more than one recurrent layer");
  return trace;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "VGGish", "M20M", "M2M", "M200k", "M20k", "M20k_int8", "toy_teacher", "toy_student"};
  return names;
}

namespace {

constexpr int kPool = -1;

// Conv/pool feature extractor, dense stack ending in the 128-d embedding,
// batch norm, recurrent layer and the 10-class head.
ModelArch m_family(std::string name, const std::vector<int>& features,
                   const std::vector<int>& hidden_fc, Padding padding,
                   RecurrentMode rnn, int rnn_units) {
  ModelArch a;
  a.name = std::move(name);
  a.input_shape = {96, 64, 1};
  int conv_i = 0;
  int pool_i = 0;
  for (int f : features) {
    if (f == kPool) {
      a.layers.push_back(LayerSpec::pool("pool" + std::to_string(++pool_i)));
    } else {
      a.layers.push_back(LayerSpec::conv("conv" + std::to_string(++conv_i), f, padding));
    }
  }
  a.layers.push_back(LayerSpec::flatten());
  int fc_i = 0;
  for (int u : hidden_fc) {
    a.layers.push_back(LayerSpec::dense("fc" + std::to_string(++fc_i), u, Activation::Relu));
  }
  a.layers.push_back(
      LayerSpec::dense("fc" + std::to_string(++fc_i), 128, Activation::None, true));
  a.layers.push_back(LayerSpec::batchnorm("bn"));
  a.layers.push_back(LayerSpec::recurrent("rnn", rnn, rnn_units));
  a.layers.push_back(LayerSpec::dense("fc" + std::to_string(++fc_i), 10));
  a.layers.push_back(LayerSpec::softmax());
  return a;
}

}  // namespace

ModelArch preset(const std::string& name) {
  const int P = kPool;
  using RM = RecurrentMode;
  if (name == "VGGish") {
    return m_family(name, {64, P, 128, P, 256, 256, P, 512, 512, P}, {4096, 4096},
                    Padding::Same, RM::Gru, 20);
  }
  if (name == "M20M") {
    return m_family(name, {64, P, 128, P, 256, P, 256, P}, {2048, 2048}, Padding::Same,
                    RM::Gru, 20);
  }
  if (name == "M2M") {
    return m_family(name, {32, P, 64, P, 128, P, 128, P}, {512}, Padding::Same, RM::Gru, 20);
  }
  if (name == "M200k") {
    return m_family(name, {8, P, 16, P, 32, P, 64, P, 64, P}, {256}, Padding::Same,
                    RM::Gru, 20);
  }
  if (name == "M20k") {
    return m_family(name, {4, P, 8, P, 16, P, 16, P, 32, P}, {64}, Padding::Valid,
                    RM::Gru, 20);
  }
  if (name == "M20k_int8") {
    return m_family(name, {4, P, 8, P, 16, P, 16, P, 32, P}, {64}, Padding::Valid,
                    RM::VanillaTanh, 60);
  }
  if (name == "toy_teacher") {
    ModelArch a;
    a.name = name;
    a.input_shape = {24, 16, 1};
    a.layers = {LayerSpec::conv("conv1", 16, Padding::Same),
                LayerSpec::pool("pool1"),
                LayerSpec::conv("conv2", 32, Padding::Same),
                LayerSpec::pool("pool2"),
                LayerSpec::flatten(),
                LayerSpec::dense("fc1", 64, Activation::Relu),
                LayerSpec::dense("fc2", 32, Activation::None, true),
                LayerSpec::batchnorm("bn", Activation::Relu),
                LayerSpec::dense("fc3", kToyClasses),
                LayerSpec::softmax()};
    return a;
  }
  if (name == "toy_student") {
    ModelArch a;
    a.name = name;
    a.input_shape = {24, 16, 1};
    a.layers = {LayerSpec::conv("conv1", 4, Padding::Valid),
                LayerSpec::pool("pool1"),
                LayerSpec::conv("conv2", 8, Padding::Valid),
                LayerSpec::pool("pool2"),
                LayerSpec::flatten(),
                LayerSpec::dense("fc1", 32, Activation::None, true),
                LayerSpec::batchnorm("bn", Activation::Relu),
                LayerSpec::dense("fc2", kToyClasses),
                LayerSpec::softmax()};
    return a;
  }
  throw DomainError("unknown preset '" + name + "'");
}

TensorF& ModelWeights::at(const std::string& key) {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw DomainError("missing weight tensor '" + key + "'");
  return it->second;
}

const TensorF& ModelWeights::at(const std::string& key) const {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw DomainError("missing weight tensor '" + key + "'");
  return it->second;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelArch& arch) {
  const auto trace = shape_trace(arch);
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const Shape& in = trace[i].input;
    const std::size_t u = static_cast<std::size_t>(l.units);
    switch (l.kind) {
      case LayerKind::Conv2D:
        out.push_back({l.name + "/kernel", {3, 3, in[2], u}});
        out.push_back({l.name + "/bias", {u}});
        break;
      case LayerKind::Dense:
        out.push_back({l.name + "/kernel", {element_count(in), u}});
        out.push_back({l.name + "/bias", {u}});
        break;
      case LayerKind::BatchNorm: {
        const std::size_t c = in.back();
        for (const char* role : {"/gamma", "/beta", "/mean", "/var"}) {
          out.push_back({l.name + role, {c}});
        }
        break;
      }
      case LayerKind::Recurrent: {
        const std::size_t gates = l.rnn_mode == RecurrentMode::Gru ? 3 : 1;
        out.push_back({l.name + "/w_input", {in[0], gates * u}});
        out.push_back({l.name + "/w_recurrent", {u, gates * u}});
        out.push_back({l.name + "/bias", {gates * u}});
        break;
      }
      default:
        break;
    }
  }
  return out;
}

void check_weights(const ModelArch& arch, const ModelWeights& w) {
  const auto expected = parameter_shapes(arch);
  for (const auto& [key, shape] : expected) {
    auto it = w.tensors.find(key);
    if (it == w.tensors.end()) throw DomainError("missing weight tensor '" + key + "'");
    if (it->second.shape() != shape) {
      throw DomainError("weight '" + key + "' has shape " +
                        shape_to_string(it->second.shape()) + ", expected " +
                        shape_to_string(shape));
    }
  }
  if (w.tensors.size() != expected.size()) {
    throw DomainError("weights contain tensors not declared by the architecture");
  }
}

Model init_model(const ModelArch& arch, std::uint64_t seed) {
  Model m{arch, {}};
  std::mt19937_64 rng(seed);
  for (const auto& [key, shape] : parameter_shapes(arch)) {
    TensorF t(shape, 0.0);
    const std::string role = key.substr(key.find('/') + 1);
    if (role == "kernel" || role == "w_input" || role == "w_recurrent") {
      const std::size_t fan_in = element_count(shape) / shape.back();
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      const double scale = role == "kernel" ? 1.0 : 0.5;
      for (auto& v : t.values()) v = scale * dist(rng);
    } else if (role == "gamma" || role == "var") {
      std::fill(t.values().begin(), t.values().end(), 1.0);
    }
    m.weights.tensors.emplace(key, std::move(t));
  }
  return m;
}

Model fold_batchnorm(const Model& m) {
  Model out{m.arch, m.weights};
  out.arch.layers.clear();
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
    const LayerSpec& l = m.arch.layers[i];
    if (l.kind != LayerKind::BatchNorm) {
      out.arch.layers.push_back(l);
      continue;
    }
    if (out.arch.layers.empty() || out.arch.layers.back().kind != LayerKind::Dense ||
        out.arch.layers.back().activation != Activation::None) {
      throw DomainError("batch norm '" + l.name +
                        "' must directly follow a dense layer without activation");
    }
    LayerSpec& dense = out.arch.layers.back();
    TensorF& kernel = out.weights.at(dense.name + "/kernel");
    TensorF& bias = out.weights.at(dense.name + "/bias");
    const TensorF& gamma = m.weights.at(l.name + "/gamma");
    const TensorF& beta = m.weights.at(l.name + "/beta");
    const TensorF& mean = m.weights.at(l.name + "/mean");
    const TensorF& var = m.weights.at(l.name + "/var");
    const std::size_t units = bias.size();
    const std::size_t fan_in = kernel.dim(0);
    for (std::size_t u = 0; u < units; ++u) {
      const double scale = gamma[u] / std::sqrt(var[u] + kBatchNormEps);
      for (std::size_t k = 0; k < fan_in; ++k) kernel[k * units + u] *= scale;
      bias[u] = (bias[u] - mean[u]) * scale + beta[u];
    }
    dense.activation = l.activation;
    for (const char* role : {"/gamma", "/beta", "/mean", "/var"}) {
      out.weights.tensors.erase(l.name + role);
    }
  }
  return out;
}

bool conv_channels_multiple_of_4(const ModelArch& arch) {
  return std::all_of(arch.layers.begin(), arch.layers.end(), [](const LayerSpec& l) {
    return l.kind != LayerKind::Conv2D || l.units % 4 == 0;
  });
}

}  // namespace tinysed
