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

#ifndef TINYSED_MODEL_HPP_
#define TINYSED_MODEL_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tinysed/fxp.hpp"
#include "tinysed/tensor.hpp"

namespace tinysed {

enum class LayerKind { Conv2D, MaxPool2, Dense, BatchNorm, Recurrent, Flatten, Softmax };
enum class Padding { Valid, Same };
enum class Activation { None, Relu };
enum class RecurrentMode { VanillaTanh, Gru };

std::string to_string(LayerKind k);
std::string to_string(Padding p);
std::string to_string(Activation a);
std::string to_string(RecurrentMode m);

// One layer of a linear chain. Conv kernels are always 3x3 stride 1, pools
// 2x2 stride 2 with ceil-mode rounding.
struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::string name;
  int units = 0;  // conv out channels, dense out units, recurrent hidden size
  Padding padding = Padding::Valid;
  Activation activation = Activation::None;
  RecurrentMode rnn_mode = RecurrentMode::Gru;
  bool embedding_tap = false;

  static LayerSpec conv(std::string name, int channels, Padding p,
                        Activation a = Activation::Relu);
  static LayerSpec pool(std::string name);
  static LayerSpec dense(std::string name, int units,
                         Activation a = Activation::None, bool tap = false);
  static LayerSpec batchnorm(std::string name, Activation a = Activation::None);
  static LayerSpec recurrent(std::string name, RecurrentMode mode, int hidden);
  static LayerSpec flatten(std::string name = "flatten");
  static LayerSpec softmax(std::string name = "softmax");

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelArch {
  std::string name;
  Shape input_shape;  // H, W, C
  std::vector<LayerSpec> layers;

  std::optional<std::size_t> embedding_index() const;
  std::optional<std::size_t> recurrent_index() const;
  std::size_t find_layer(const std::string& layer_name) const;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

struct LayerTrace {
  Shape input;
  Shape output;
  std::size_t output_elements = 0;
};

// Per-layer input/output shapes. Throws DomainError on a non-positive
// spatial dimension or a structural error (softmax misplaced, two taps...).
std::vector<LayerTrace> shape_trace(const ModelArch& arch);

const std::vector<std::string>& preset_names();
// VGGish, M20M, M2M, M200k, M20k, M20k_int8, toy_teacher, toy_student.
ModelArch preset(const std::string& name);
constexpr int kToyClasses = 10;

// Float parameters keyed "<layer>/<role>": kernel, bias, gamma, beta, mean,
// var, w_input, w_recurrent.
struct ModelWeights {
  std::map<std::string, TensorF> tensors;

  TensorF& at(const std::string& key);
  const TensorF& at(const std::string& key) const;
  bool contains(const std::string& key) const { return tensors.count(key) > 0; }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

struct Model {
  ModelArch arch;
  ModelWeights weights;
};

// Expected parameter tensors for every layer, in layer order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelArch& arch);

// Throws DomainError when a tensor is missing or has the wrong shape.
void check_weights(const ModelArch& arch, const ModelWeights& w);

// He-normal kernels, zero biases, identity batch norm.
Model init_model(const ModelArch& arch, std::uint64_t seed);

constexpr double kBatchNormEps = 1e-5;

// Absorb every BatchNorm into the preceding (linear) dense layer. The BN's
// activation moves onto the dense layer.
Model fold_batchnorm(const Model& m);

bool conv_channels_multiple_of_4(const ModelArch& arch);

}  // namespace tinysed

#endif  // TINYSED_MODEL_HPP_
