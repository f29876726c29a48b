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

#ifndef TINYSED_COST_HPP_
#define TINYSED_COST_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tinysed/model.hpp"

namespace tinysed {

struct Tally {
  std::vector<std::uint64_t> per_layer;  // aligned with arch.layers
  std::uint64_t total = 0;
};

// Weights + biases; BN counts 4 values per channel.
Tally count_params(const ModelArch& arch);

// Multiplies and adds for one 96x64 patch (one recurrent step):
//   conv    2 * c * k^2 * out_H * out_W * out_C
//   pool    2 * k^2 * out_elements   (filter formula with c = 1, k = 2)
//   dense   2 * in * out
//   vanilla 2 * (in + h) * h
//   gru     3 * 2 * (in + h) * h + 3 * h
// Batch norm is folded into the preceding dense layer and costs nothing.
Tally count_ops(const ModelArch& arch);

enum class BufferSlot { A, B, InPlace, None };

struct BufferPlan {
  std::size_t buffer_a = 0;
  std::size_t buffer_b = 0;
  std::size_t scratch = 0;
  std::size_t total = 0;
  BufferSlot input_slot = BufferSlot::A;
  std::vector<BufferSlot> layer_slots;  // where each layer writes its output
  std::vector<std::size_t> sizes;       // ping-pong sequence a0, a1, ...
};

// Conv/dense/recurrent outputs alternate between A and B starting with the
// input in A; pools run in place on their producer's buffer. Sizes are in
// bytes (int8). Scratch holds two widened (int16) im2col columns of the
// largest conv receptive field.
BufferPlan plan_buffers(const ModelArch& arch);

struct LayerCost {
  std::string name;
  LayerKind kind;
  Shape output;
  std::uint64_t output_elements = 0;
  std::uint64_t params = 0;
  std::uint64_t ops = 0;
};

struct CostReport {
  std::string model;
  std::vector<LayerCost> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_ops = 0;
  BufferPlan buffers;

  std::uint64_t params_bytes() const { return total_params; }
};

CostReport estimate(const ModelArch& arch);

struct PlatformSpec {
  std::string name;
  std::optional<double> flash_kb;  // nullopt: external storage, unbounded
  double ram_kb = 0;
  double power_mw = 0;
  double mips = 0;
};

const std::vector<PlatformSpec>& platform_presets();
const PlatformSpec& platform(const std::string& name);

enum class Axis { Flash, Ram, Throughput, Power };
std::string to_string(Axis a);

struct FeasibilityVerdict {
  bool pass = true;
  std::vector<Axis> failed;
  std::vector<std::string> reasons;
  double ram_shortfall_bytes = 0;  // > 0 when RAM fails
};

// One op per instruction; a patch must be classified within one second.
FeasibilityVerdict feasibility(const CostReport& report, const PlatformSpec& p,
                               std::optional<double> power_budget_mw = std::nullopt);

nlohmann::json to_json(const CostReport& r);
nlohmann::json to_json(const FeasibilityVerdict& v);

}  // namespace tinysed

#endif  // TINYSED_COST_HPP_
