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

#include "tinysed/fxp.hpp"

#include <cmath>

namespace tinysed {

double QFormat::step() const noexcept { return std::ldexp(1.0, -decimal_bits_); }
double QFormat::range() const noexcept { return std::ldexp(1.0, integer_bits_); }
double QFormat::min_value() const noexcept { return -range(); }
double QFormat::max_value() const noexcept { return range() - step(); }

std::string QFormat::to_string() const {
  return "Q" + std::to_string(integer_bits_) + "." +
         std::to_string(decimal_bits_);
}

std::int64_t raw_code(double x, QFormat q) noexcept {
  if (std::isnan(x)) return 0;
  const double scaled = std::ldexp(x, q.decimal_bits());
  // Anything this far out saturates anyway; keep the cast defined.
  if (scaled > 1e15) return static_cast<std::int64_t>(1e15);
  if (scaled < -1e15) return static_cast<std::int64_t>(-1e15);
  return static_cast<std::int64_t>(std::round(scaled));
}

std::int8_t quantize(double x, QFormat q) noexcept {
  return saturate8(raw_code(x, q));
}

double dequantize(std::int8_t code, QFormat q) noexcept {
  return std::ldexp(static_cast<double>(code), -q.decimal_bits());
}

SqnrReport measure_sqnr(std::span<const double> values, QFormat q) {
  if (values.empty()) {
    throw DomainError("measure_sqnr: empty value set");
  }
  double sum_sq = 0.0;
  double err_granular = 0.0;
  double err_overload = 0.0;
  std::size_t overloads = 0;
  for (double x : values) {
    sum_sq += x * x;
    const std::int64_t code = raw_code(x, q);
    const double e = x - dequantize(saturate8(code), q);
    if (code < kCodeMin || code > kCodeMax) {
      err_overload += e * e;
      ++overloads;
    } else {
      err_granular += e * e;
    }
  }
  if (sum_sq == 0.0) {
    throw DomainError("measure_sqnr: all-zero signal, SQNR undefined");
  }
  const double n = static_cast<double>(values.size());
  SqnrReport r;
  r.signal_power = sum_sq / n;
  r.mse_granular = err_granular / n;
  r.mse_overload = err_overload / n;
  r.mse = r.mse_granular + r.mse_overload;
  r.overload_count = overloads;
  r.sqnr = r.mse == 0.0 ? kInfiniteSqnr : r.signal_power / r.mse;
  return r;
}

std::int64_t requantize_wide(std::int32_t acc, std::int32_t bias,
                             ShiftSpec s) noexcept {
  std::int64_t sum = static_cast<std::int64_t>(acc) +
                     (static_cast<std::int64_t>(bias) << s.left_shift);
  if (s.right_shift > 0) {
    sum += std::int64_t{1} << (s.right_shift - 1);
    sum >>= s.right_shift;
  }
  return sum;
}

std::int8_t requantize(std::int32_t acc, std::int32_t bias, ShiftSpec s) {
  if (s.left_shift < 0 || s.right_shift < 0) {
    throw std::invalid_argument("requantize: negative shift");
  }
  return saturate8(requantize_wide(acc, bias, s));
}

}  // namespace tinysed
