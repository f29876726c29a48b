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

#ifndef TINYSED_MODEL_IO_HPP_
#define TINYSED_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "tinysed/model.hpp"

namespace tinysed {

// Malformed or incompatible file contents.
class FormatError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Tensor blob layout (all integers little-endian):
//   "TSED" | u16 version | u32 tensor_count
//   per tensor: u32 name_len | name bytes | u8 dtype | u32 rank | u32 dims[rank] | data
// dtype: 0 = f32, 1 = i8, 2 = f64.
constexpr std::uint16_t kBlobVersion = 1;

enum class DType : std::uint8_t { F32 = 0, I8 = 1, F64 = 2 };

using AnyTensor = std::variant<TensorF, TensorI8>;

struct NamedTensor {
  std::string name;
  AnyTensor tensor;
  // Storage precision for real tensors; F32 narrows on write.
  DType real_dtype = DType::F64;
};

void write_blob(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_blob(const std::filesystem::path& path);

// Equally shaped tensors as one [N, ...] tensor and back. Stacking an empty
// list needs the item shape.
TensorF stack_tensors(std::span<const TensorF> items, const Shape& item_shape);
std::vector<TensorF> unstack_tensors(const TensorF& stacked);

// Feature file: a blob holding one f32 tensor "patches" [N, H, W, C].
void save_patches(const std::filesystem::path& path, std::span<const TensorF> patches);
std::vector<TensorF> load_patches(const std::filesystem::path& path);

nlohmann::json arch_to_json(const ModelArch& arch);
ModelArch arch_from_json(const nlohmann::json& j);

// A model is stored as "<stem>.json" (architecture) + "<stem>.bin" (weights).
// `path` may name either file or the bare stem.
void save_model(const std::filesystem::path& path, const Model& m);
Model load_model(const std::filesystem::path& path);

std::filesystem::path model_json_path(const std::filesystem::path& path);
std::filesystem::path model_blob_path(const std::filesystem::path& path);

}  // namespace tinysed

#endif  // TINYSED_MODEL_IO_HPP_
