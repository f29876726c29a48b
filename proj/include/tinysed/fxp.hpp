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

#ifndef TINYSED_FXP_HPP_
#define TINYSED_FXP_HPP_

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace tinysed {

// Raised for domain errors (bad inputs to otherwise well-formed calls).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kBitwidth = 8;
constexpr int kCodeMin = -128;
constexpr int kCodeMax = 127;
constexpr double kInfiniteSqnr = std::numeric_limits<double>::infinity();

// Signed 8-bit fixed-point layout: one sign bit, `integer_bits` integer bits
// and `decimal_bits` fractional bits, integer_bits + decimal_bits + 1 == 8.
// Range is [-2^integer_bits, 2^integer_bits - 2^-decimal_bits].
class QFormat {
 public:
  constexpr QFormat() = default;
  constexpr QFormat(int integer_bits, int decimal_bits)
      : integer_bits_(integer_bits), decimal_bits_(decimal_bits) {
    if (integer_bits < 0 || decimal_bits < 0 ||
        integer_bits + decimal_bits + 1 != kBitwidth) {
      throw std::invalid_argument("invalid Q-format: integer + decimal + 1 "
                                  "must equal the 8-bit width");
    }
  }
  static constexpr QFormat with_integer_bits(int i) { return {i, 7 - i}; }

  constexpr int integer_bits() const noexcept { return integer_bits_; }
  constexpr int decimal_bits() const noexcept { return decimal_bits_; }
  constexpr int bitwidth() const noexcept { return kBitwidth; }

  double step() const noexcept;
  double range() const noexcept;  // 2^integer_bits
  double min_value() const noexcept;
  double max_value() const noexcept;

  std::string to_string() const;  // "Q3.4"

  friend constexpr bool operator==(QFormat, QFormat) = default;

 private:
  int integer_bits_ = 0;
  int decimal_bits_ = 7;
};

// Bias alignment and output renormalisation amounts for one layer.
struct ShiftSpec {
  int left_shift = 0;
  int right_shift = 0;
  friend constexpr bool operator==(ShiftSpec, ShiftSpec) = default;
};

inline std::int8_t saturate8(std::int64_t v) noexcept {
  if (v < kCodeMin) return static_cast<std::int8_t>(kCodeMin);
  if (v > kCodeMax) return static_cast<std::int8_t>(kCodeMax);
  return static_cast<std::int8_t>(v);
}

// Round to nearest (ties away from zero), saturate to [-128, 127].
std::int8_t quantize(double x, QFormat q) noexcept;
double dequantize(std::int8_t code, QFormat q) noexcept;

// Unsaturated rounded code; used to classify granular vs overload samples.
std::int64_t raw_code(double x, QFormat q) noexcept;

struct SqnrReport {
  double sqnr = 0.0;            // E[x^2] / E[e^2], kInfiniteSqnr if e == 0
  double signal_power = 0.0;    // E[x^2]
  double mse_granular = 0.0;    // contribution of in-range samples
  double mse_overload = 0.0;    // contribution of saturated samples
  double mse = 0.0;             // mse_granular + mse_overload
  std::size_t overload_count = 0;
};

// Throws DomainError on empty or all-zero input.
SqnrReport measure_sqnr(std::span<const double> values, QFormat q);

// saturate8(round_shift(acc + (bias << left), right)); round_shift adds
// 2^(right-1) before the arithmetic shift when right > 0.
std::int8_t requantize(std::int32_t acc, std::int32_t bias, ShiftSpec s);

// Same arithmetic, without the final saturation.
std::int64_t requantize_wide(std::int32_t acc, std::int32_t bias,
                             ShiftSpec s) noexcept;

}  // namespace tinysed

#endif  // TINYSED_FXP_HPP_
