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

#include "tinysed/quant.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tinysed/model_io.hpp"
#include "tinysed/ref_exec.hpp"

namespace tinysed {
namespace {

constexpr std::size_t kClipsPerBlock = 8;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TensorStats& slot(StatsMap& m, const std::string& key, std::uint64_t seed) {
  auto it = m.find(key);
  if (it == m.end()) it = m.emplace(key, TensorStats(mix(seed, fnv1a(key)))).first;
  return it->second;
}

QFormat parse_qformat(const std::string& s) {
  int i = 0, d = 0;
  char q = 0, dot = 0;
  std::istringstream is(s);
  if (!(is >> q >> i >> dot >> d) || q != 'Q' || dot != '.') {
    throw FormatError("bad Q-format '" + s + "'");
  }
  try {
    return QFormat(i, d);
  } catch (const std::invalid_argument&) {
    throw FormatError("bad Q-format '" + s + "'");
  }
}

bool has_batchnorm(const ModelArch& a) {
  return std::any_of(a.layers.begin(), a.layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::BatchNorm; });
}

TensorI8 quantize_tensor(const TensorF& t, QFormat q) {
  TensorI8 out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = quantize(t[i], q);
  return out;
}

std::string macro_name(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += std::isalnum(static_cast<unsigned char>(c))
               ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
               : '_';
  }
  return out;
}

std::string ident_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// TensorStats

TensorStats::TensorStats(std::uint64_t seed, std::size_t reservoir_cap)
    : cap_(reservoir_cap), rng_(seed) {
  if (cap_ == 0) throw DomainError("reservoir capacity must be positive");
}

std::size_t TensorStats::slot_of(double x) {
  const double a = std::abs(x);
  if (!(a >= std::ldexp(1.0, kMinBin))) return 0;
  if (a >= std::ldexp(1.0, kMaxBin)) return kSlots - 1;
  int e = 0;
  std::frexp(a, &e);  // a in [2^(e-1), 2^e)
  return static_cast<std::size_t>(e - kMinBin);
}

void TensorStats::add(double x) {
  ++hist_[slot_of(x)];
  ++count_;
  sum_sq_ += x * x;
  max_abs_ = std::max(max_abs_, std::abs(x));
  if (reservoir_.size() < cap_) {
    reservoir_.push_back(x);
  } else {
    std::uniform_int_distribution<std::uint64_t> pick(0, count_ - 1);
    const std::uint64_t j = pick(rng_);
    if (j < cap_) reservoir_[j] = x;
  }
}

void TensorStats::add(std::span<const double> xs) {
  for (double x : xs) add(x);
}

void TensorStats::merge(const TensorStats& other) {
  const std::uint64_t n_a = count_;
  const std::uint64_t n_b = other.count_;
  for (std::size_t i = 0; i < kSlots; ++i) hist_[i] += other.hist_[i];
  count_ += other.count_;
  sum_sq_ += other.sum_sq_;
  max_abs_ = std::max(max_abs_, other.max_abs_);
  if (n_a + n_b <= cap_) {
    reservoir_.insert(reservoir_.end(), other.reservoir_.begin(), other.reservoir_.end());
    return;
  }
  std::vector<double> a = reservoir_, b = other.reservoir_;
  std::shuffle(a.begin(), a.end(), rng_);
  std::shuffle(b.begin(), b.end(), rng_);
  // Each reservoir item stands for n / |reservoir| stream values.
  const double w_a = a.empty() ? 0.0 : static_cast<double>(n_a) / static_cast<double>(a.size());
  const double w_b = b.empty() ? 0.0 : static_cast<double>(n_b) / static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  std::vector<double> out;
  out.reserve(cap_);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (out.size() < cap_ && (ia < a.size() || ib < b.size())) {
    const double mass_a = w_a * static_cast<double>(a.size() - ia);
    const double mass_b = w_b * static_cast<double>(b.size() - ib);
    if (u(rng_) * (mass_a + mass_b) < mass_a) {
      out.push_back(a[ia++]);
    } else {
      out.push_back(b[ib++]);
    }
  }
  reservoir_ = std::move(out);
}

std::uint64_t TensorStats::bin(int i) const {
  if (i < kMinBin || i > kMaxBin) throw DomainError("histogram bin out of range");
  return hist_[static_cast<std::size_t>(i - kMinBin)];
}

double TensorStats::fraction_at_least_pow2(int i) const {
  if (i < kMinBin || i > kMaxBin) throw DomainError("power-of-two bound out of range");
  if (count_ == 0) return 0.0;
  std::uint64_t n = overflow();
  for (int j = i + 1; j <= kMaxBin; ++j) n += bin(j);
  return static_cast<double>(n) / static_cast<double>(count_);
}

// ---------------------------------------------------------------------------
// Statistics collection

StatsMap collect_stats(const Model& model, std::span<const std::vector<TensorF>> clips,
                       std::uint64_t seed) {
  if (clips.empty()) throw DomainError("collect_stats: empty calibration set");
  const Model m = has_batchnorm(model.arch) ? fold_batchnorm(model) : model;
  const auto& layers = m.arch.layers;
  const auto rec = m.arch.recurrent_index();
  if (rec && layers[*rec].rnn_mode != RecurrentMode::VanillaTanh) {
    throw DomainError("collect_stats: only vanilla recurrent layers are quantizable");
  }

  const std::size_t n_blocks = (clips.size() + kClipsPerBlock - 1) / kClipsPerBlock;
  std::vector<StatsMap> blocks(n_blocks);
  std::vector<std::string> errors(n_blocks);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < n_blocks; ++b) {
    try {
      StatsMap& sm = blocks[b];
      const std::uint64_t bseed = mix(seed, b + 1);
      const std::size_t end = std::min(clips.size(), (b + 1) * kClipsPerBlock);
      for (std::size_t c = b * kClipsPerBlock; c < end; ++c) {
        const auto& clip = clips[c];
        const ForwardTrace t = forward(m, clip, true);
        TensorStats& in = slot(sm, "input", bseed);
        for (const TensorF& p : clip) in.add(p.values());
        for (std::size_t i = 0; i < layers.size(); ++i) {
          const LayerSpec& l = layers[i];
          if (l.kind != LayerKind::Conv2D && l.kind != LayerKind::Dense &&
              l.kind != LayerKind::Recurrent) {
            continue;
          }
          TensorStats& st = slot(sm, l.name, bseed);
          for (const TensorF& a : t.activations[i]) st.add(a.values());
          if (l.kind != LayerKind::Recurrent) continue;
          TensorStats& pre = slot(sm, l.name + "/preact", bseed);
          const TensorF& wx = m.weights.at(l.name + "/w_input");
          const TensorF& wh = m.weights.at(l.name + "/w_recurrent");
          const TensorF& bias = m.weights.at(l.name + "/bias");
          const std::size_t hs = static_cast<std::size_t>(l.units);
          for (std::size_t k = 0; k < t.activations[i].size(); ++k) {
            const TensorF& x = i == 0 ? clip[k] : t.activations[i - 1][k];
            for (std::size_t j = 0; j < hs; ++j) {
              double s = bias[j];
              for (std::size_t q = 0; q < x.size(); ++q) s += x[q] * wx[q * hs + j];
              if (k > 0) {
                const TensorF& h = t.activations[i][k - 1];
                for (std::size_t q = 0; q < hs; ++q) s += h[q] * wh[q * hs + j];
              }
              pre.add(s);
            }
          }
        }
      }
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DomainError("collect_stats: " + e);
  }
  StatsMap out = std::move(blocks.front());
  for (std::size_t b = 1; b < n_blocks; ++b) {
    for (const auto& [key, st] : blocks[b]) {
      auto it = out.find(key);
      if (it == out.end()) {
        out.emplace(key, st);
      } else {
        it->second.merge(st);
      }
    }
  }
  for (const auto& [key, shape] : parameter_shapes(m.arch)) {
    TensorStats& st = slot(out, key, seed);
    st.add(m.weights.at(key).values());
  }
  return out;
}

StatsMap collect_stats(const Model& model, std::span<const TensorF> patches, std::uint64_t seed) {
  std::vector<std::vector<TensorF>> clips;
  clips.reserve(patches.size());
  for (const TensorF& p : patches) clips.push_back({p});
  return collect_stats(model, clips, seed);
}

// ---------------------------------------------------------------------------
// Format selection

std::string to_string(Scheme s) { return s == Scheme::Sqnr ? "sqnr" : "overload"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "sqnr") return Scheme::Sqnr;
  if (s == "overload") return Scheme::Overload;
  throw DomainError("unknown quantization scheme '" + s + "'");
}

QFormat qformat_sqnr(const TensorStats& s) {
  if (s.count() == 0) throw DomainError("qformat_sqnr: empty statistics");
  const auto& r = s.reservoir();
  if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; })) return {0, 7};
  QFormat best = QFormat::with_integer_bits(0);
  double best_sqnr = -1.0;
  for (int i = 0; i <= 7; ++i) {
    const QFormat q = QFormat::with_integer_bits(i);
    const double g = measure_sqnr(r, q).sqnr;
    if (g > best_sqnr) {
      best = q;
      best_sqnr = g;
    }
  }
  return best;
}

OverloadChoice qformat_overload_checked(const TensorStats& s, double p_th) {
  if (s.count() == 0) throw DomainError("qformat_overload: empty statistics");
  if (!(p_th >= 0.0)) throw DomainError("qformat_overload: negative threshold");
  for (int i = 0; i <= 7; ++i) {
    const double f = s.fraction_at_least_pow2(i);
    if (p_th > 0.0 ? f < p_th : f == 0.0) return {QFormat::with_integer_bits(i), false};
  }
  return {QFormat::with_integer_bits(7), true};
}

QFormat qformat_overload(const TensorStats& s, double p_th) {
  return qformat_overload_checked(s, p_th).format;
}

ShiftSpec derive_shifts(QFormat q_in, QFormat q_w, QFormat q_b, QFormat q_out) {
  const int acc = q_in.decimal_bits() + q_w.decimal_bits();
  const ShiftSpec s{acc - q_b.decimal_bits(), acc - q_out.decimal_bits()};
  if (s.left_shift < 0 || s.right_shift < 0) {
    throw InvalidPlanError("negative shift (left " + std::to_string(s.left_shift) + ", right " +
                           std::to_string(s.right_shift) + ") for " + q_in.to_string() + " x " +
                           q_w.to_string() + " + " + q_b.to_string() + " -> " +
                           q_out.to_string());
  }
  return s;
}

double overall_sqnr(std::span<const double> stage_sqnr) {
  if (stage_sqnr.empty()) throw DomainError("overall_sqnr: no stages");
  double inv = 0.0;
  for (double g : stage_sqnr) {
    if (!(g > 0.0)) throw DomainError("overall_sqnr: stage SQNR must be positive");
    if (!std::isinf(g)) inv += 1.0 / g;
  }
  return inv == 0.0 ? kInfiniteSqnr : 1.0 / inv;
}

// ---------------------------------------------------------------------------
// Plans

const LayerQuant& QuantPlan::layer(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.layer == name) return l;
  }
  throw DomainError("no quantization entry for layer '" + name + "'");
}

nlohmann::json to_json(const QuantPlan& p) {
  nlohmann::json j;
  j["scheme"] = to_string(p.scheme);
  if (p.scheme == Scheme::Overload) j["p_threshold"] = p.p_threshold;
  j["input"] = p.input.to_string();
  j["tensors"] = nlohmann::json::object();
  for (const auto& [k, q] : p.tensors) j["tensors"][k] = q.to_string();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : p.layers) {
    nlohmann::json e{{"name", l.layer},
                     {"kind", to_string(l.kind)},
                     {"input", l.input.to_string()},
                     {"weight", l.weight.to_string()},
                     {"bias", l.bias.to_string()},
                     {"output", l.output.to_string()},
                     {"left_shift", l.shift.left_shift},
                     {"right_shift", l.shift.right_shift}};
    if (l.state) e["state"] = l.state->to_string();
    if (l.weight_recurrent) e["weight_recurrent"] = l.weight_recurrent->to_string();
    if (l.kind == LayerKind::Recurrent) e["state_align"] = l.state_align;
    j["layers"].push_back(std::move(e));
  }
  j["warnings"] = p.warnings;
  return j;
}

QuantPlan plan_from_json(const nlohmann::json& j) {
  try {
    QuantPlan p;
    p.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    p.p_threshold = j.value("p_threshold", kDefaultOverloadThreshold);
    p.input = parse_qformat(j.at("input").get<std::string>());
    for (const auto& [k, v] : j.at("tensors").items()) p.tensors[k] = parse_qformat(v.get<std::string>());
    for (const auto& e : j.at("layers")) {
      LayerQuant l;
      l.layer = e.at("name").get<std::string>();
      const std::string kind = e.at("kind").get<std::string>();
      l.kind = kind == "conv2d"      ? LayerKind::Conv2D
               : kind == "recurrent" ? LayerKind::Recurrent
                                     : LayerKind::Dense;
      l.input = parse_qformat(e.at("input").get<std::string>());
      l.weight = parse_qformat(e.at("weight").get<std::string>());
      l.bias = parse_qformat(e.at("bias").get<std::string>());
      l.output = parse_qformat(e.at("output").get<std::string>());
      l.shift = {e.at("left_shift").get<int>(), e.at("right_shift").get<int>()};
      if (e.contains("state")) l.state = parse_qformat(e["state"].get<std::string>());
      if (e.contains("weight_recurrent")) {
        l.weight_recurrent = parse_qformat(e["weight_recurrent"].get<std::string>());
      }
      l.state_align = e.value("state_align", 0);
      if (derive_shifts(l.input, l.weight, l.bias, l.output) != l.shift) {
        throw FormatError("layer '" + l.layer + "': shifts inconsistent with formats");
      }
      p.layers.push_back(std::move(l));
    }
    p.warnings = j.value("warnings", std::vector<std::string>{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed quantization plan: ") + e.what());
  } catch (const InvalidPlanError& e) {
    throw FormatError(std::string("invalid quantization plan: ") + e.what());
  }
}

std::string plan_report(const QuantPlan& p) {
  std::ostringstream os;
  os << "scheme " << to_string(p.scheme);
  if (p.scheme == Scheme::Overload) os << " (p_th " << p.p_threshold << ")";
  os << "\ninput " << p.input.to_string() << "\n\n";
  os << std::left << std::setw(12) << "layer" << std::setw(8) << "input" << std::setw(8)
     << "weight" << std::setw(8) << "bias" << std::setw(8) << "output" << std::setw(8)
     << "lshift" << "rshift\n";
  for (const auto& l : p.layers) {
    os << std::setw(12) << l.layer << std::setw(8) << l.input.to_string() << std::setw(8)
       << l.weight.to_string() << std::setw(8) << l.bias.to_string() << std::setw(8)
       << l.output.to_string() << std::setw(8) << l.shift.left_shift << l.shift.right_shift;
    if (l.state) {
      os << "  state " << l.state->to_string() << " w_rec " << l.weight_recurrent->to_string()
         << " align " << l.state_align;
    }
    os << "\n";
  }
  for (const auto& w : p.warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::array<std::int8_t, 256> build_tanh_lut(QFormat pre, QFormat state) {
  std::array<std::int8_t, 256> lut{};
  for (int c = kCodeMin; c <= kCodeMax; ++c) {
    lut[static_cast<std::size_t>(c + 128)] =
        quantize(std::tanh(dequantize(static_cast<std::int8_t>(c), pre)), state);
  }
  return lut;
}

QuantizedModel quantize_model(const Model& model, const StatsMap& stats, const QuantizeOptions& opt) {
  const Model m = has_batchnorm(model.arch) ? fold_batchnorm(model) : model;
  if (!conv_channels_multiple_of_4(m.arch)) {
    throw DomainError("quantize_model: conv channel counts must be multiples of 4");
  }
  QuantPlan plan;
  plan.scheme = opt.scheme;
  plan.p_threshold = opt.p_threshold;

  auto pick = [&](const std::string& key) {
    auto it = stats.find(key);
    if (it == stats.end()) throw DomainError("quantize_model: no statistics for '" + key + "'");
    if (opt.scheme == Scheme::Sqnr) return qformat_sqnr(it->second);
    const OverloadChoice c = qformat_overload_checked(it->second, opt.p_threshold);
    if (c.saturated) plan.warnings.push_back(key + ": overload threshold unmet, saturating at Q7.0");
    return c.format;
  };
  // Drop decimals of a bias/output format until its shift is nonnegative.
  auto fit = [&](QFormat q, int acc, const std::string& what) {
    if (q.decimal_bits() <= acc) return q;
    plan.warnings.push_back(what + ": " + q.to_string() + " -> " + QFormat(7 - acc, acc).to_string() +
                            " to keep shifts nonnegative");
    return QFormat(7 - acc, acc);
  };
  auto quantize_param = [&](const std::string& key, QFormat q) { plan.tensors[key] = q; };

  plan.input = pick("input");
  QFormat cur = plan.input;
  for (const LayerSpec& l : m.arch.layers) {
    switch (l.kind) {
      case LayerKind::Conv2D:
      case LayerKind::Dense: {
        LayerQuant lq;
        lq.layer = l.name;
        lq.kind = l.kind;
        lq.input = cur;
        lq.weight = pick(l.name + "/kernel");
        const int acc = lq.input.decimal_bits() + lq.weight.decimal_bits();
        lq.bias = fit(pick(l.name + "/bias"), acc, l.name + "/bias");
        lq.output = fit(pick(l.name), acc, l.name);
        lq.shift = derive_shifts(lq.input, lq.weight, lq.bias, lq.output);
        quantize_param(l.name + "/kernel", lq.weight);
        quantize_param(l.name + "/bias", lq.bias);
        cur = lq.output;
        plan.layers.push_back(lq);
        break;
      }
      case LayerKind::Recurrent: {
        if (l.rnn_mode != RecurrentMode::VanillaTanh) {
          throw DomainError("quantize_model: int8 GRU is not supported");
        }
        LayerQuant lq;
        lq.layer = l.name;
        lq.kind = l.kind;
        lq.input = cur;
        lq.weight = pick(l.name + "/w_input");
        const int acc = lq.input.decimal_bits() + lq.weight.decimal_bits();
        lq.bias = fit(pick(l.name + "/bias"), acc, l.name + "/bias");
        lq.output = fit(pick(l.name + "/preact"), acc, l.name + "/preact");
        lq.shift = derive_shifts(lq.input, lq.weight, lq.bias, lq.output);
        lq.state = pick(l.name);
        lq.weight_recurrent = pick(l.name + "/w_recurrent");
        lq.state_align = acc - (lq.state->decimal_bits() + lq.weight_recurrent->decimal_bits());
        quantize_param(l.name + "/w_input", lq.weight);
        quantize_param(l.name + "/w_recurrent", *lq.weight_recurrent);
        quantize_param(l.name + "/bias", lq.bias);
        cur = *lq.state;
        plan.layers.push_back(lq);
        break;
      }
      case LayerKind::BatchNorm:
        throw DomainError("quantize_model: batch norm must be folded");
      default:
        break;
    }
  }
  return apply_plan(m, plan);
}

QuantizedModel apply_plan(const Model& model, const QuantPlan& plan) {
  const Model m = has_batchnorm(model.arch) ? fold_batchnorm(model) : model;
  if (!conv_channels_multiple_of_4(m.arch)) {
    throw DomainError("apply_plan: conv channel counts must be multiples of 4");
  }
  QuantizedModel qm;
  qm.arch = m.arch;
  qm.plan = plan;
  for (const auto& [key, shape] : parameter_shapes(m.arch)) {
    auto it = plan.tensors.find(key);
    if (it == plan.tensors.end()) throw InvalidPlanError("plan has no format for '" + key + "'");
    qm.tensors.emplace(key, quantize_tensor(m.weights.at(key), it->second));
  }
  QFormat cur = plan.input;
  for (const LayerSpec& l : m.arch.layers) {
    if (l.kind != LayerKind::Conv2D && l.kind != LayerKind::Dense &&
        l.kind != LayerKind::Recurrent) {
      continue;
    }
    const LayerQuant& lq = plan.layer(l.name);
    if (lq.input != cur || lq.shift != derive_shifts(lq.input, lq.weight, lq.bias, lq.output)) {
      throw InvalidPlanError("plan entry for '" + l.name + "' is inconsistent");
    }
    if (l.kind == LayerKind::Recurrent) {
      if (!lq.state || !lq.weight_recurrent) {
        throw InvalidPlanError("plan entry for '" + l.name + "' lacks the state format");
      }
      qm.tanh_lut[l.name] = build_tanh_lut(lq.output, *lq.state);
      cur = *lq.state;
    } else {
      cur = lq.output;
    }
  }
  qm.buffers = plan_buffers(qm.arch);
  return qm;
}

Model dequantized_model(const QuantizedModel& qm) {
  Model m;
  m.arch = qm.arch;
  for (const auto& [key, codes] : qm.tensors) {
    const QFormat q = qm.plan.tensors.at(key);
    TensorF t(codes.shape());
    for (std::size_t i = 0; i < codes.size(); ++i) t[i] = dequantize(codes[i], q);
    m.weights.tensors.emplace(key, std::move(t));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Files

void save_quantized(const std::filesystem::path& path, const QuantizedModel& qm) {
  nlohmann::json j;
  j["format"] = "tinysed-qmodel";
  j["version"] = 1;
  j["arch"] = arch_to_json(qm.arch);
  j["plan"] = to_json(qm.plan);
  j["weights"] = model_blob_path(path).filename().string();
  {
    std::ofstream out(model_json_path(path), std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + model_json_path(path).string() + "'");
    out << j.dump(2) << "\n";
  }
  std::vector<NamedTensor> tensors;
  for (const auto& [key, shape] : parameter_shapes(qm.arch)) {
    tensors.push_back({key, qm.tensors.at(key), DType::I8});
  }
  write_blob(model_blob_path(path), tensors);
}

QuantizedModel load_quantized(const std::filesystem::path& path) {
  nlohmann::json j;
  {
    std::ifstream in(model_json_path(path));
    if (!in) throw FormatError("cannot open '" + model_json_path(path).string() + "'");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed quantized model JSON: ") + e.what());
    }
  }
  if (j.value("format", "") != "tinysed-qmodel") throw FormatError("not a quantized model file");
  if (j.value("version", 0) != 1) throw FormatError("unsupported quantized model version");
  QuantizedModel qm;
  qm.arch = arch_from_json(j.at("arch"));
  qm.plan = plan_from_json(j.at("plan"));
  for (NamedTensor& nt : read_blob(model_blob_path(path))) {
    auto* codes = std::get_if<TensorI8>(&nt.tensor);
    if (codes == nullptr) throw FormatError("tensor '" + nt.name + "' is not int8");
    qm.tensors.emplace(nt.name, std::move(*codes));
  }
  for (const auto& [key, shape] : parameter_shapes(qm.arch)) {
    auto it = qm.tensors.find(key);
    if (it == qm.tensors.end() || it->second.shape() != shape) {
      throw FormatError("tensor '" + key + "' missing or mis-shaped");
    }
    if (qm.plan.tensors.count(key) == 0) throw FormatError("no format for tensor '" + key + "'");
  }
  for (const auto& l : qm.plan.layers) {
    if (l.kind == LayerKind::Recurrent) {
      if (!l.state) throw FormatError("recurrent layer '" + l.layer + "' lacks a state format");
      qm.tanh_lut[l.layer] = build_tanh_lut(l.output, *l.state);
    }
  }
  qm.buffers = plan_buffers(qm.arch);
  return qm;
}

std::string export_c_header(const QuantizedModel& qm) {
  const std::string guard = "TINYSED_" + macro_name(qm.arch.name) + "_WEIGHTS_H_";
  std::ostringstream os;
  os << "/* int8 weights of " << qm.arch.name << " (" << to_string(qm.plan.scheme)
     << " formats). Generated by tinysed; do not edit. */\n\n";
  os << "#ifndef " << guard << "\n#define " << guard << "\n\n#include <stdint.h>\n\n";
  os << "#define INPUT_DEC_BITS " << qm.plan.input.decimal_bits() << "\n";
  os << "#define BUFFER_A_SIZE " << qm.buffers.buffer_a << "\n";
  os << "#define BUFFER_B_SIZE " << qm.buffers.buffer_b << "\n";
  os << "#define SCRATCH_SIZE " << qm.buffers.scratch << "\n\n";

  auto emit = [&](const std::string& key, const std::vector<std::int8_t>& data) {
    os << "static const int8_t " << ident_name(key) << "[" << data.size() << "] = {";
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i % 16 == 0) os << "\n   ";
      os << " " << static_cast<int>(data[i]) << (i + 1 < data.size() ? "," : "");
    }
    os << "\n};\n";
  };

  for (const auto& l : qm.plan.layers) {
    const std::string up = macro_name(l.layer);
    os << "/* " << l.layer << ": " << l.input.to_string() << " x " << l.weight.to_string() << " + "
       << l.bias.to_string() << " -> " << l.output.to_string() << " */\n";
    os << "#define " << up << "_BIAS_LSHIFT " << l.shift.left_shift << "\n";
    os << "#define " << up << "_OUT_RSHIFT " << l.shift.right_shift << "\n";
    if (l.kind == LayerKind::Recurrent) {
      os << "#define " << up << "_STATE_DEC_BITS " << l.state->decimal_bits() << "\n";
      os << "#define " << up << "_STATE_ALIGN " << l.state_align << "\n";
    }
    const std::string base = l.layer + "/";
    if (l.kind == LayerKind::Conv2D) {
      // HWIO -> OHWI
      const TensorI8& k = qm.tensors.at(base + "kernel");
      const std::size_t kh = k.dim(0), kw = k.dim(1), ci = k.dim(2), co = k.dim(3);
      std::vector<std::int8_t> v;
      v.reserve(k.size());
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t h = 0; h < kh; ++h)
          for (std::size_t w = 0; w < kw; ++w)
            for (std::size_t c = 0; c < ci; ++c) v.push_back(k[((h * kw + w) * ci + c) * co + o]);
      os << "#define " << up << "_IN_CH " << ci << "\n#define " << up << "_OUT_CH " << co << "\n";
      emit(base + "kernel", v);
      emit(base + "bias", qm.tensors.at(base + "bias").values());
    } else if (l.kind == LayerKind::Dense) {
      const TensorI8& k = qm.tensors.at(base + "kernel");
      const std::size_t in = k.dim(0), out = k.dim(1);
      std::vector<std::int8_t> v;
      v.reserve(k.size());
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) v.push_back(k[i * out + o]);
      os << "#define " << up << "_IN " << in << "\n#define " << up << "_OUT " << out << "\n";
      emit(base + "kernel", v);
      emit(base + "bias", qm.tensors.at(base + "bias").values());
    } else {
      emit(base + "w_input", qm.tensors.at(base + "w_input").values());
      emit(base + "w_recurrent", qm.tensors.at(base + "w_recurrent").values());
      emit(base + "bias", qm.tensors.at(base + "bias").values());
      const auto& lut = qm.tanh_lut.at(l.layer);
      emit(base + "tanh_lut", std::vector<std::int8_t>(lut.begin(), lut.end()));
    }
    os << "\n";
  }
  os << "#endif  /* " << guard << " */\n";
  return os.str();
}

}  // namespace tinysed
