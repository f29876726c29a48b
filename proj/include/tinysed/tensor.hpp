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

#ifndef TINYSED_TENSOR_HPP_
#define TINYSED_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinysed {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_to_string(const Shape& shape);

// Dense row-major tensor. Activations are laid out HWC, conv kernels HWCF,
// dense matrices [in, out].
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " +
                                  shape_to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // 3-D accessor for HWC activations.
  T& at(std::size_t h, std::size_t w, std::size_t c) noexcept {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }
  const T& at(std::size_t h, std::size_t w, std::size_t c) const noexcept {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  void reshape(Shape shape) {
    if (element_count(shape) != data_.size()) {
      throw std::invalid_argument("reshape to " + shape_to_string(shape) +
                                  " changes element count");
    }
    shape_ = std::move(shape);
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Real-valued tensors are double precision throughout; int8 tensors carry
// fixed-point codes.
using TensorF = BasicTensor<double>;
using TensorI8 = BasicTensor<std::int8_t>;

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

}  // namespace tinysed

#endif  // TINYSED_TENSOR_HPP_
