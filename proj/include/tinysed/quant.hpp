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

#ifndef TINYSED_QUANT_HPP_
#define TINYSED_QUANT_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tinysed/cost.hpp"
#include "tinysed/fxp.hpp"
#include "tinysed/model.hpp"

namespace tinysed {

// Streaming statistics of one tensor. Bin i in [-8, 8] counts |x| in
// [2^(i-1), 2^i); the lowest bin also takes everything below 2^-9 and the
// last slot counts |x| >= 2^8.
class TensorStats {
 public:
  static constexpr int kMinBin = -8;
  static constexpr int kMaxBin = 8;
  static constexpr std::size_t kSlots = kMaxBin - kMinBin + 2;
  static constexpr std::size_t kDefaultReservoir = 65536;

  explicit TensorStats(std::uint64_t seed = 0, std::size_t reservoir_cap = kDefaultReservoir);

  void add(double x);
  void add(std::span<const double> xs);
  // Histogram, count and sum of squares add exactly; reservoirs are merged by
  // weighted sampling without replacement.
  void merge(const TensorStats& other);

  std::uint64_t count() const noexcept { return count_; }
  double sum_squares() const noexcept { return sum_sq_; }
  double max_abs() const noexcept { return max_abs_; }
  const std::array<std::uint64_t, kSlots>& histogram() const noexcept { return hist_; }
  std::uint64_t bin(int i) const;  // i in [kMinBin, kMaxBin]
  std::uint64_t overflow() const noexcept { return hist_.back(); }
  const std::vector<double>& reservoir() const noexcept { return reservoir_; }
  std::size_t reservoir_cap() const noexcept { return cap_; }

  // Empirical P(|x| >= 2^i), exact from the histogram for i in [-8, 8].
  double fraction_at_least_pow2(int i) const;

  static std::size_t slot_of(double x);

 private:
  std::array<std::uint64_t, kSlots> hist_{};
  std::uint64_t count_ = 0;
  double sum_sq_ = 0.0;
  double max_abs_ = 0.0;
  std::size_t cap_;
  std::vector<double> reservoir_;
  std::mt19937_64 rng_;
};

using StatsMap = std::map<std::string, TensorStats>;

// Keys: "input", every parameter tensor ("<layer>/kernel", ...), the output
// of every conv/dense/recurrent layer ("<layer>") and the recurrent
// pre-activation ("<layer>/preact"). Each clip is one patch sequence.
StatsMap collect_stats(const Model& model, std::span<const std::vector<TensorF>> clips,
                       std::uint64_t seed = 0);
StatsMap collect_stats(const Model& model, std::span<const TensorF> patches,
                       std::uint64_t seed = 0);

enum class Scheme { Sqnr, Overload };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

constexpr double kDefaultOverloadThreshold = 1e-4;

// argmax over the 8 formats of the reservoir SQNR; ties go to fewer integer
// bits; an all-zero tensor gets Q0.7.
QFormat qformat_sqnr(const TensorStats& s);

struct OverloadChoice {
  QFormat format;
  bool saturated = false;  // no format met the threshold
};
// Smallest i with P(|x| >= 2^i) < p_th (p_th == 0: no sample at or above 2^i).
OverloadChoice qformat_overload_checked(const TensorStats& s, double p_th = kDefaultOverloadThreshold);
QFormat qformat_overload(const TensorStats& s, double p_th = kDefaultOverloadThreshold);

class InvalidPlanError : public DomainError {
 public:
  using DomainError::DomainError;
};

// left = (n_i + n_w) - n_b, right = (n_i + n_w) - n_o; throws
// InvalidPlanError when either is negative.
ShiftSpec derive_shifts(QFormat q_in, QFormat q_w, QFormat q_b, QFormat q_out);

// 1 / sum(1 / g); infinite stages drop out.
double overall_sqnr(std::span<const double> stage_sqnr);

// Formats and shifts of one conv/dense/recurrent layer. For a recurrent
// layer `input`/`weight` describe the x path, `output` is the pre-activation
// fed to the tanh table and `state` is the hidden state format.
struct LayerQuant {
  std::string layer;
  LayerKind kind = LayerKind::Dense;
  QFormat input, weight, bias, output;
  ShiftSpec shift;
  std::optional<QFormat> state;
  std::optional<QFormat> weight_recurrent;
  // Left shift applied to the h.Wh accumulator so it shares the x path's
  // decimals; negative means a rounding right shift.
  int state_align = 0;
};

struct QuantPlan {
  Scheme scheme = Scheme::Sqnr;
  double p_threshold = kDefaultOverloadThreshold;
  QFormat input;
  std::vector<LayerQuant> layers;
  std::map<std::string, QFormat> tensors;  // parameter tensors
  std::vector<std::string> warnings;

  const LayerQuant& layer(const std::string& name) const;
};

nlohmann::json to_json(const QuantPlan& p);
QuantPlan plan_from_json(const nlohmann::json& j);
std::string plan_report(const QuantPlan& p);

struct QuantizedModel {
  ModelArch arch;  // batch norm folded
  std::map<std::string, TensorI8> tensors;
  QuantPlan plan;
  BufferPlan buffers;
  // Per recurrent layer: tanh table indexed by pre-activation code + 128.
  std::map<std::string, std::array<std::int8_t, 256>> tanh_lut;
};

std::array<std::int8_t, 256> build_tanh_lut(QFormat pre, QFormat state);

struct QuantizeOptions {
  Scheme scheme = Scheme::Sqnr;
  double p_threshold = kDefaultOverloadThreshold;
};

// Picks every format, repairs negative shifts by dropping bias/output
// decimals (logged in plan.warnings) and quantizes the parameters. Batch norm
// is folded first when present.
QuantizedModel quantize_model(const Model& model, const StatsMap& stats,
                              const QuantizeOptions& opt = {});

// Quantizes the parameters with the formats of an existing plan; throws
// InvalidPlanError when the plan does not cover the model.
QuantizedModel apply_plan(const Model& model, const QuantPlan& plan);

// Float model whose weights are the dequantized codes.
Model dequantized_model(const QuantizedModel& qm);

// "<stem>.json" holds {"format":"tinysed-qmodel", arch, plan, weights} and
// "<stem>.bin" the int8 tensors.
void save_quantized(const std::filesystem::path& path, const QuantizedModel& qm);
QuantizedModel load_quantized(const std::filesystem::path& path);

// C header with int8 arrays (conv kernels O,H,W,I; dense kernels [out][in])
// and per-layer shift macros.
std::string export_c_header(const QuantizedModel& qm);

}  // namespace tinysed

#endif  // TINYSED_QUANT_HPP_
