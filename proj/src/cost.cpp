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

#include "tinysed/cost.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace tinysed {
namespace {

constexpr std::uint64_t kKernel = 3;
constexpr std::uint64_t kPoolKernel = 2;

std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

}  // namespace

Tally count_params(const ModelArch& arch) {
  const auto trace = shape_trace(arch);
  Tally t;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::uint64_t in = u64(element_count(trace[i].input));
    const std::uint64_t u = static_cast<std::uint64_t>(l.units);
    std::uint64_t p = 0;
    switch (l.kind) {
      case LayerKind::Conv2D: {
        const std::uint64_t c = u64(trace[i].input[2]);
        p = u * (c * kKernel * kKernel) + u;
        break;
      }
      case LayerKind::Dense:
        p = in * u + u;
        break;
      case LayerKind::BatchNorm:
        p = 4 * u64(trace[i].input.back());
        break;
      case LayerKind::Recurrent: {
        const std::uint64_t cell = (in + u) * u + u;
        p = l.rnn_mode == RecurrentMode::Gru ? 3 * cell : cell;
        break;
      }
      default:
        break;
    }
    t.per_layer.push_back(p);
    t.total += p;
  }
  return t;
}

Tally count_ops(const ModelArch& arch) {
  const auto trace = shape_trace(arch);
  Tally t;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::uint64_t in = u64(element_count(trace[i].input));
    const std::uint64_t out = u64(trace[i].output_elements);
    const std::uint64_t u = static_cast<std::uint64_t>(l.units);
    std::uint64_t ops = 0;
    switch (l.kind) {
      case LayerKind::Conv2D: {
        const std::uint64_t ops_filter = 2 * u64(trace[i].input[2]) * kKernel * kKernel;
        ops = ops_filter * out;
        break;
      }
      case LayerKind::MaxPool2:
        ops = 2 * kPoolKernel * kPoolKernel * out;
        break;
      case LayerKind::Dense:
        ops = 2 * in * u;
        break;
      case LayerKind::Recurrent:
        ops = l.rnn_mode == RecurrentMode::Gru ? 3 * 2 * (in + u) * u + 3 * u
                                               : 2 * (in + u) * u;
        break;
      default:
        break;
    }
    t.per_layer.push_back(ops);
    t.total += ops;
  }
  return t;
}

BufferPlan plan_buffers(const ModelArch& arch) {
  const auto trace = shape_trace(arch);
  BufferPlan plan;
  plan.sizes.push_back(element_count(arch.input_shape));
  BufferSlot current = BufferSlot::A;
  std::size_t max_receptive = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    switch (l.kind) {
      case LayerKind::Conv2D:
        max_receptive = std::max(max_receptive, trace[i].input[2] * 9);
        [[fallthrough]];
      case LayerKind::Dense:
      case LayerKind::Recurrent:
        current = current == BufferSlot::A ? BufferSlot::B : BufferSlot::A;
        plan.layer_slots.push_back(current);
        plan.sizes.push_back(trace[i].output_elements);
        break;
      case LayerKind::MaxPool2:
        plan.layer_slots.push_back(BufferSlot::InPlace);
        break;
      default:
        plan.layer_slots.push_back(BufferSlot::None);
        break;
    }
  }
  for (std::size_t k = 0; k < plan.sizes.size(); ++k) {
    std::size_t& target = k % 2 == 0 ? plan.buffer_a : plan.buffer_b;
    target = std::max(target, plan.sizes[k]);
  }
  plan.scratch = 2 * max_receptive * sizeof(std::int16_t);
  plan.total = plan.buffer_a + plan.buffer_b + plan.scratch;
  return plan;
}

CostReport estimate(const ModelArch& arch) {
  const auto trace = shape_trace(arch);
  const Tally params = count_params(arch);
  const Tally ops = count_ops(arch);
  CostReport r;
  r.model = arch.name;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    r.layers.push_back({arch.layers[i].name, arch.layers[i].kind, trace[i].output,
                        u64(trace[i].output_elements), params.per_layer[i], ops.per_layer[i]});
  }
  r.total_params = params.total;
  r.total_ops = ops.total;
  r.buffers = plan_buffers(arch);
  return r;
}

const std::vector<PlatformSpec>& platform_presets() {
  static const std::vector<PlatformSpec> presets = {
      {"Arduino", 32.0, 2.0, 60.0, 20.0},
      {"ChipKit uc32", 512.0, 32.0, 181.0, 124.8},
      {"STM32L476RG", 1024.0, 128.0, 26.0, 80.0},
      {"TI MSP432P4111", 2048.0, 256.0, 23.0, 58.56},
      {"BeagleBone Black", std::nullopt, 524288.0, 2300.0, 1607.0},
      {"Raspberry Pi 3 B+", std::nullopt, 1048576.0, 5500.0, 2800.0},
  };
  return presets;
}

const PlatformSpec& platform(const std::string& name) {
  auto lower = [](std::string s) {
    std::string out;
    for (char c : s) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    return out;
  };
  const std::string key = lower(name);
  for (const auto& p : platform_presets()) {
    const std::string pk = lower(p.name);
    if (pk == key || pk.find(key) != std::string::npos) return p;
  }
  throw DomainError("unknown platform '" + name + "'");
}

std::string to_string(Axis a) {
  switch (a) {
    case Axis::Flash: return "flash";
    case Axis::Ram: return "ram";
    case Axis::Throughput: return "mips";
    case Axis::Power: return "power";
  }
  return "?";
}

FeasibilityVerdict feasibility(const CostReport& report, const PlatformSpec& p,
                               std::optional<double> power_budget_mw) {
  FeasibilityVerdict v;
  auto fail = [&](Axis a, std::string why) {
    v.pass = false;
    v.failed.push_back(a);
    v.reasons.push_back(std::move(why));
  };
  std::ostringstream os;
  const double params_bytes = static_cast<double>(report.params_bytes());
  if (p.flash_kb && params_bytes > *p.flash_kb * 1024.0) {
    os << "flash: " << params_bytes << " B of parameters > " << *p.flash_kb << " KB";
    fail(Axis::Flash, os.str());
    os.str("");
  }
  const double ram_bytes = static_cast<double>(report.buffers.total);
  if (ram_bytes > p.ram_kb * 1024.0) {
    v.ram_shortfall_bytes = ram_bytes - p.ram_kb * 1024.0;
    os << "ram: " << report.buffers.total << " B of buffers > " << p.ram_kb
       << " KB (short by " << v.ram_shortfall_bytes << " B)";
    fail(Axis::Ram, os.str());
    os.str("");
  }
  const double ops = static_cast<double>(report.total_ops);
  if (ops > p.mips * 1e6) {
    os << "mips: " << ops / 1e6 << " Mop per patch > " << p.mips << " MIPS";
    fail(Axis::Throughput, os.str());
    os.str("");
  }
  if (power_budget_mw && p.power_mw > *power_budget_mw) {
    os << "power: " << p.power_mw << " mW > budget " << *power_budget_mw << " mW";
    fail(Axis::Power, os.str());
  }
  return v;
}

nlohmann::json to_json(const CostReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["total_params"] = r.total_params;
  j["total_ops"] = r.total_ops;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : r.layers) {
    j["layers"].push_back({{"name", l.name},
                           {"kind", to_string(l.kind)},
                           {"output_shape", l.output},
                           {"output_elements", l.output_elements},
                           {"params", l.params},
                           {"ops", l.ops}});
  }
  j["buffers"] = {{"a", r.buffers.buffer_a},
                  {"b", r.buffers.buffer_b},
                  {"scratch", r.buffers.scratch},
                  {"total", r.buffers.total}};
  return j;
}

nlohmann::json to_json(const FeasibilityVerdict& v) {
  nlohmann::json j;
  j["pass"] = v.pass;
  j["failed"] = nlohmann::json::array();
  for (Axis a : v.failed) j["failed"].push_back(to_string(a));
  j["reasons"] = v.reasons;
  return j;
}

}  // namespace tinysed
