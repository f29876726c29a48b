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

#ifndef TINYSED_QEXEC_HPP_
#define TINYSED_QEXEC_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tinysed/model.hpp"
#include "tinysed/quant.hpp"

namespace tinysed {

namespace qkernels {

// Int8 kernels on raw buffers. Accumulation is int32; the bias is aligned by
// the left shift and the sum renormalised by requantize(); ReLU clamps the
// requantized code at zero.

// im2col into `scratch`, two output pixels per pass; scratch must hold
// 2 * 9 * C int16 values. Returns the output shape.
Shape qconv2d(const std::int8_t* x, const Shape& in, const TensorI8& kernel, const TensorI8& bias,
              Padding padding, ShiftSpec s, bool relu, std::int8_t* y, std::int16_t* scratch);

// Direct loops, no scratch; reference for qconv2d.
Shape qconv2d_direct(const std::int8_t* x, const Shape& in, const TensorI8& kernel,
                     const TensorI8& bias, Padding padding, ShiftSpec s, bool relu, std::int8_t* y);

void qdense(const std::int8_t* x, std::size_t in, const TensorI8& kernel, const TensorI8& bias,
            ShiftSpec s, bool relu, std::int8_t* y);

// 2x2/2 ceil-mode max pool, written over its own input.
Shape qmaxpool2_inplace(std::int8_t* x, const Shape& in);

// pre = requantize(x.Wx + align(h.Wh), b); y = lut[pre + 128].
void qrecurrent_cell(const std::int8_t* x, std::size_t in, const std::int8_t* h,
                     const TensorI8& w_input, const TensorI8& w_recurrent, const TensorI8& bias,
                     ShiftSpec s, int state_align, const std::array<std::int8_t, 256>& lut,
                     std::int8_t* y);

}  // namespace qkernels

// Buffers A and B, the im2col scratch and the persistent recurrent state of
// one inference. Records the high-water mark of every region.
class InferenceContext {
 public:
  explicit InferenceContext(const BufferPlan& plan);

  std::int8_t* buffer(BufferSlot s);
  std::int16_t* scratch() { return scratch_.data(); }
  std::size_t capacity(BufferSlot s) const;
  std::size_t scratch_bytes() const { return scratch_.size() * sizeof(std::int16_t); }

  // Records that `bytes` of a region were written; throws when it overflows.
  void touch(BufferSlot s, std::size_t bytes);
  void touch_scratch(std::size_t bytes);

  std::vector<std::int8_t>& state(const std::string& layer, std::size_t units);
  void reset_state();

  // Sum of the A, B and scratch high-water marks (bytes).
  std::size_t peak_bytes() const { return hw_a_ + hw_b_ + hw_scratch_; }
  void reset_peak() { hw_a_ = hw_b_ = hw_scratch_ = 0; }

  bool matches(const BufferPlan& plan) const;

 private:
  std::vector<std::int8_t> a_, b_;
  std::vector<std::int16_t> scratch_;
  std::map<std::string, std::vector<std::int8_t>> state_;
  std::size_t hw_a_ = 0, hw_b_ = 0, hw_scratch_ = 0;
};

struct QForwardResult {
  TensorI8 logits;                    // final logit codes (rounded patch mean if feedforward)
  std::vector<std::int32_t> logit_sum;  // sum of per-patch logit codes
  QFormat logit_format;
  std::size_t prediction = 0;  // argmax of logit_sum
  std::size_t peak_bytes = 0;
};

std::vector<TensorI8> quantize_patches(const QuantizedModel& qm, std::span<const TensorF> patches);

// Runs every layer inside `ctx`; the recurrent state is reset at the start
// of the clip and carried across its patches.
QForwardResult qforward(const QuantizedModel& qm, std::span<const TensorI8> patches,
                        InferenceContext& ctx);
QForwardResult qforward(const QuantizedModel& qm, std::span<const TensorI8> patches);

struct CompareReport {
  std::size_t samples = 0;
  std::size_t classes = 0;
  double accuracy_float = 0.0;
  double accuracy_int8 = 0.0;
  double gap = 0.0;        // accuracy_float - accuracy_int8
  double agreement = 0.0;  // top-1 agreement between the two paths
  std::vector<double> f1_float, f1_int8;
};

std::vector<double> per_class_f1(std::span<const std::size_t> labels,
                                 std::span<const std::size_t> predictions, std::size_t classes);

CompareReport compare_models(const Model& float_model, const QuantizedModel& qm,
                             std::span<const std::vector<TensorF>> clips,
                             std::span<const std::size_t> labels, std::size_t classes);

nlohmann::json to_json(const CompareReport& r);

}  // namespace tinysed

#endif  // TINYSED_QEXEC_HPP_
