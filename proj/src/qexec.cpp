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

#include "tinysed/qexec.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "tinysed/ref_exec.hpp"

namespace tinysed {
namespace qkernels {
namespace {

struct ConvGeom {
  std::size_t h, w, c, kh, kw, f, oh, ow;
  std::ptrdiff_t pad_h, pad_w;
};

ConvGeom conv_geom(const Shape& in, const TensorI8& kernel, const TensorI8& bias, Padding padding) {
  if (in.size() != 3 || kernel.rank() != 4 || kernel.dim(2) != in[2] ||
      bias.size() != kernel.dim(3)) {
    throw DomainError("qconv2d: shape mismatch");
  }
  ConvGeom g{in[0], in[1], in[2], kernel.dim(0), kernel.dim(1), kernel.dim(3), 0, 0, 0, 0};
  if (padding == Padding::Same) {
    g.oh = g.h;
    g.ow = g.w;
    g.pad_h = static_cast<std::ptrdiff_t>((g.kh - 1) / 2);
    g.pad_w = static_cast<std::ptrdiff_t>((g.kw - 1) / 2);
  } else {
    if (g.h < g.kh || g.w < g.kw) throw DomainError("qconv2d: input smaller than kernel");
    g.oh = g.h - g.kh + 1;
    g.ow = g.w - g.kw + 1;
  }
  return g;
}

inline std::int8_t finish(std::int32_t acc, std::int8_t bias, ShiftSpec s, bool relu) {
  const std::int8_t v = requantize(acc, bias, s);
  return relu && v < 0 ? std::int8_t{0} : v;
}

inline std::int32_t clamp32(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(
      v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
}

}  // namespace

Shape qconv2d(const std::int8_t* x, const Shape& in, const TensorI8& kernel, const TensorI8& bias,
              Padding padding, ShiftSpec s, bool relu, std::int8_t* y, std::int16_t* scratch) {
  const ConvGeom g = conv_geom(in, kernel, bias, padding);
  const std::size_t col = g.kh * g.kw * g.c;
  const std::size_t pixels = g.oh * g.ow;
  auto fill = [&](std::size_t p, std::int16_t* dst) {
    const auto oy = static_cast<std::ptrdiff_t>(p / g.ow) - g.pad_h;
    const auto ox = static_cast<std::ptrdiff_t>(p % g.ow) - g.pad_w;
    for (std::size_t dy = 0; dy < g.kh; ++dy) {
      const std::ptrdiff_t iy = oy + static_cast<std::ptrdiff_t>(dy);
      for (std::size_t dx = 0; dx < g.kw; ++dx) {
        const std::ptrdiff_t ix = ox + static_cast<std::ptrdiff_t>(dx);
        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                            ix < static_cast<std::ptrdiff_t>(g.w);
        const std::int8_t* src = inside ? x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c : nullptr;
        for (std::size_t c = 0; c < g.c; ++c) *dst++ = inside ? src[c] : std::int16_t{0};
      }
    }
  };
  const std::int8_t* w = kernel.data();
  for (std::size_t p = 0; p < pixels; p += 2) {
    const bool pair = p + 1 < pixels;
    fill(p, scratch);
    if (pair) fill(p + 1, scratch + col);
    for (std::size_t f = 0; f < g.f; ++f) {
      std::int32_t acc0 = 0, acc1 = 0;
      for (std::size_t q = 0; q < col; ++q) {
        const std::int32_t wq = w[q * g.f + f];
        acc0 += scratch[q] * wq;
        if (pair) acc1 += scratch[col + q] * wq;
      }
      y[p * g.f + f] = finish(acc0, bias[f], s, relu);
      if (pair) y[(p + 1) * g.f + f] = finish(acc1, bias[f], s, relu);
    }
  }
  return {g.oh, g.ow, g.f};
}

Shape qconv2d_direct(const std::int8_t* x, const Shape& in, const TensorI8& kernel,
                     const TensorI8& bias, Padding padding, ShiftSpec s, bool relu, std::int8_t* y) {
  const ConvGeom g = conv_geom(in, kernel, bias, padding);
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      for (std::size_t f = 0; f < g.f; ++f) {
        std::int32_t acc = 0;
        for (std::size_t dy = 0; dy < g.kh; ++dy) {
          for (std::size_t dx = 0; dx < g.kw; ++dx) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + dy) - g.pad_h;
            const auto ix = static_cast<std::ptrdiff_t>(ox + dx) - g.pad_w;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                ix >= static_cast<std::ptrdiff_t>(g.w)) {
              continue;
            }
            for (std::size_t c = 0; c < g.c; ++c) {
              acc += x[(static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c + c] *
                     kernel[((dy * g.kw + dx) * g.c + c) * g.f + f];
            }
          }
        }
        y[(oy * g.ow + ox) * g.f + f] = finish(acc, bias[f], s, relu);
      }
    }
  }
  return {g.oh, g.ow, g.f};
}

void qdense(const std::int8_t* x, std::size_t in, const TensorI8& kernel, const TensorI8& bias,
            ShiftSpec s, bool relu, std::int8_t* y) {
  if (kernel.rank() != 2 || kernel.dim(0) != in || bias.size() != kernel.dim(1)) {
    throw DomainError("qdense: shape mismatch");
  }
  const std::size_t out = kernel.dim(1);
  std::vector<std::int32_t> acc(out, 0);
  for (std::size_t k = 0; k < in; ++k) {
    const std::int32_t xk = x[k];
    if (xk == 0) continue;
    const std::int8_t* row = kernel.data() + k * out;
    for (std::size_t j = 0; j < out; ++j) acc[j] += xk * row[j];
  }
  for (std::size_t j = 0; j < out; ++j) y[j] = finish(acc[j], bias[j], s, relu);
}

Shape qmaxpool2_inplace(std::int8_t* x, const Shape& in) {
  if (in.size() != 3) throw DomainError("qmaxpool2: expected a rank-3 input");
  const std::size_t h = in[0], w = in[1], c = in[2];
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const std::size_t dst = (oy * ow + ox) * c;
      // Every read of this window lies at or after the write position.
      assert(dst <= (2 * oy * w + 2 * ox) * c);
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::int8_t m = std::numeric_limits<std::int8_t>::min();
        for (std::size_t dy = 0; dy < 2 && 2 * oy + dy < h; ++dy) {
          for (std::size_t dx = 0; dx < 2 && 2 * ox + dx < w; ++dx) {
            m = std::max(m, x[((2 * oy + dy) * w + 2 * ox + dx) * c + ch]);
          }
        }
        x[dst + ch] = m;
      }
    }
  }
  return {oh, ow, c};
}

void qrecurrent_cell(const std::int8_t* x, std::size_t in, const std::int8_t* h,
                     const TensorI8& w_input, const TensorI8& w_recurrent, const TensorI8& bias,
                     ShiftSpec s, int state_align, const std::array<std::int8_t, 256>& lut,
                     std::int8_t* y) {
  const std::size_t hs = bias.size();
  if (w_input.shape() != Shape{in, hs} || w_recurrent.shape() != Shape{hs, hs}) {
    throw DomainError("qrecurrent_cell: shape mismatch");
  }
  for (std::size_t j = 0; j < hs; ++j) {
    std::int64_t ax = 0, ah = 0;
    for (std::size_t k = 0; k < in; ++k) ax += x[k] * w_input[k * hs + j];
    for (std::size_t k = 0; k < hs; ++k) ah += h[k] * w_recurrent[k * hs + j];
    if (state_align >= 0) {
      ah *= std::int64_t{1} << state_align;
    } else {
      ah = (ah + (std::int64_t{1} << (-state_align - 1))) >> -state_align;
    }
    const std::int8_t pre = requantize(clamp32(ax + ah), bias[j], s);
    y[j] = lut[static_cast<std::size_t>(pre + 128)];
  }
}

}  // namespace qkernels

// ---------------------------------------------------------------------------

InferenceContext::InferenceContext(const BufferPlan& plan)
    : a_(plan.buffer_a), b_(plan.buffer_b), scratch_((plan.scratch + 1) / 2) {}

std::int8_t* InferenceContext::buffer(BufferSlot s) {
  if (s == BufferSlot::A) return a_.data();
  if (s == BufferSlot::B) return b_.data();
  throw DomainError("InferenceContext: not a buffer slot");
}

std::size_t InferenceContext::capacity(BufferSlot s) const {
  if (s == BufferSlot::A) return a_.size();
  if (s == BufferSlot::B) return b_.size();
  return 0;
}

void InferenceContext::touch(BufferSlot s, std::size_t bytes) {
  if (bytes > capacity(s)) throw DomainError("InferenceContext: buffer overflow");
  std::size_t& hw = s == BufferSlot::A ? hw_a_ : hw_b_;
  hw = std::max(hw, bytes);
}

void InferenceContext::touch_scratch(std::size_t bytes) {
  if (bytes > scratch_bytes()) throw DomainError("InferenceContext: scratch overflow");
  hw_scratch_ = std::max(hw_scratch_, bytes);
}

std::vector<std::int8_t>& InferenceContext::state(const std::string& layer, std::size_t units) {
  auto& s = state_[layer];
  if (s.size() != units) s.assign(units, 0);
  return s;
}

void InferenceContext::reset_state() {
  for (auto& [name, s] : state_) std::fill(s.begin(), s.end(), std::int8_t{0});
}

bool InferenceContext::matches(const BufferPlan& plan) const {
  return a_.size() == plan.buffer_a && b_.size() == plan.buffer_b &&
         scratch_bytes() >= plan.scratch && scratch_bytes() <= plan.scratch + 1;
}

std::vector<TensorI8> quantize_patches(const QuantizedModel& qm, std::span<const TensorF> patches) {
  std::vector<TensorI8> out;
  out.reserve(patches.size());
  for (const TensorF& p : patches) {
    TensorI8 q(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = quantize(p[i], qm.plan.input);
    out.push_back(std::move(q));
  }
  return out;
}

QForwardResult qforward(const QuantizedModel& qm, std::span<const TensorI8> patches,
                        InferenceContext& ctx) {
  if (patches.empty()) throw DomainError("qforward: no input patches");
  if (!ctx.matches(qm.buffers)) throw DomainError("qforward: context size mismatch");
  const auto& layers = qm.arch.layers;
  const auto& slots = qm.buffers.layer_slots;
  if (slots.size() != layers.size()) throw DomainError("qforward: buffer plan does not match arch");
  const std::size_t rec = qm.arch.recurrent_index().value_or(layers.size());
  const std::size_t in_elems = element_count(qm.arch.input_shape);

  std::map<std::string, const LayerQuant*> lq;
  for (const auto& l : qm.plan.layers) lq[l.layer] = &l;
  auto layer_plan = [&](const std::string& name) -> const LayerQuant& {
    auto it = lq.find(name);
    if (it == lq.end()) throw DomainError("qforward: no plan for layer '" + name + "'");
    return *it->second;
  };
  auto codes = [&](const std::string& key) -> const TensorI8& {
    auto it = qm.tensors.find(key);
    if (it == qm.tensors.end()) throw DomainError("qforward: missing tensor '" + key + "'");
    return it->second;
  };

  ctx.reset_state();
  QForwardResult r;
  BufferSlot cur = BufferSlot::A;
  Shape shape;

  // Runs layers [begin, end) starting from `cur`/`shape`.
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const LayerSpec& l = layers[i];
      switch (l.kind) {
        case LayerKind::Conv2D: {
          const LayerQuant& p = layer_plan(l.name);
          const TensorI8& k = codes(l.name + "/kernel");
          const std::size_t col = k.dim(0) * k.dim(1) * shape[2];
          if (l.padding == Padding::Valid && (shape[0] < k.dim(0) || shape[1] < k.dim(1))) {
            throw DomainError("qforward: input smaller than kernel in '" + l.name + "'");
          }
          const Shape out_shape = l.padding == Padding::Same
                                      ? Shape{shape[0], shape[1], k.dim(3)}
                                      : Shape{shape[0] - k.dim(0) + 1, shape[1] - k.dim(1) + 1, k.dim(3)};
          const std::size_t pixels = out_shape[0] * out_shape[1];
          ctx.touch_scratch(std::min<std::size_t>(2, pixels) * col * sizeof(std::int16_t));
          ctx.touch(slots[i], element_count(out_shape));
          shape = qkernels::qconv2d(ctx.buffer(cur), shape, k, codes(l.name + "/bias"), l.padding,
                                    p.shift, l.activation == Activation::Relu,
                                    ctx.buffer(slots[i]), ctx.scratch());
          cur = slots[i];
          break;
        }
        case LayerKind::MaxPool2:
          shape = qkernels::qmaxpool2_inplace(ctx.buffer(cur), shape);
          break;
        case LayerKind::Flatten:
          shape = {element_count(shape)};
          break;
        case LayerKind::Dense: {
          const LayerQuant& p = layer_plan(l.name);
          const TensorI8& k = codes(l.name + "/kernel");
          const std::size_t n = element_count(shape);
          ctx.touch(slots[i], k.dim(1));
          qkernels::qdense(ctx.buffer(cur), n, k, codes(l.name + "/bias"), p.shift,
                           l.activation == Activation::Relu, ctx.buffer(slots[i]));
          shape = {k.dim(1)};
          cur = slots[i];
          break;
        }
        case LayerKind::Recurrent: {
          const LayerQuant& p = layer_plan(l.name);
          const auto units = static_cast<std::size_t>(l.units);
          auto& h = ctx.state(l.name, units);
          ctx.touch(slots[i], units);
          std::int8_t* y = ctx.buffer(slots[i]);
          qkernels::qrecurrent_cell(ctx.buffer(cur), element_count(shape), h.data(),
                                    codes(l.name + "/w_input"), codes(l.name + "/w_recurrent"),
                                    codes(l.name + "/bias"), p.shift, p.state_align,
                                    qm.tanh_lut.at(l.name), y);
          std::copy(y, y + units, h.begin());
          shape = {units};
          cur = slots[i];
          break;
        }
        case LayerKind::Softmax:
          break;
        case LayerKind::BatchNorm:
          throw DomainError("qforward: batch norm must be folded");
      }
    }
  };

  const bool recurrent = rec < layers.size();
  for (std::size_t k = 0; k < patches.size(); ++k) {
    if (patches[k].shape() != qm.arch.input_shape) {
      throw DomainError("qforward: patch shape " + shape_to_string(patches[k].shape()) +
                        " does not match model input");
    }
    ctx.touch(BufferSlot::A, in_elems);
    std::copy(patches[k].data(), patches[k].data() + in_elems, ctx.buffer(BufferSlot::A));
    cur = BufferSlot::A;
    shape = qm.arch.input_shape;
    if (recurrent) {
      run(0, rec + 1);
      if (k + 1 == patches.size()) run(rec + 1, layers.size());
    } else {
      run(0, layers.size());
    }
    if (!recurrent || k + 1 == patches.size()) {
      const std::size_t n = element_count(shape);
      if (r.logit_sum.empty()) r.logit_sum.assign(n, 0);
      const std::int8_t* y = ctx.buffer(cur);
      for (std::size_t j = 0; j < n; ++j) r.logit_sum[j] += y[j];
    }
  }
  const std::size_t n_logit_patches = recurrent ? 1 : patches.size();
  r.logits = TensorI8({r.logit_sum.size()});
  for (std::size_t j = 0; j < r.logit_sum.size(); ++j) {
    r.logits[j] = saturate8(std::llround(static_cast<double>(r.logit_sum[j]) /
                                         static_cast<double>(n_logit_patches)));
  }
  r.logit_format = qm.plan.layers.empty() ? qm.plan.input : qm.plan.layers.back().output;
  if (!qm.plan.layers.empty() && qm.plan.layers.back().state) r.logit_format = *qm.plan.layers.back().state;
  r.prediction = static_cast<std::size_t>(std::distance(
      r.logit_sum.begin(), std::max_element(r.logit_sum.begin(), r.logit_sum.end())));
  r.peak_bytes = ctx.peak_bytes();
  return r;
}

QForwardResult qforward(const QuantizedModel& qm, std::span<const TensorI8> patches) {
  InferenceContext ctx(qm.buffers);
  return qforward(qm, patches, ctx);
}

std::vector<double> per_class_f1(std::span<const std::size_t> labels,
                                 std::span<const std::size_t> predictions, std::size_t classes) {
  if (labels.size() != predictions.size()) throw DomainError("per_class_f1: size mismatch");
  std::vector<double> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) {
      throw DomainError("per_class_f1: label out of range");
    }
    if (labels[i] == predictions[i]) {
      tp[labels[i]] += 1;
    } else {
      fp[predictions[i]] += 1;
      fn[labels[i]] += 1;
    }
  }
  std::vector<double> f1(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double d = 2 * tp[c] + fp[c] + fn[c];
    f1[c] = d > 0 ? 2 * tp[c] / d : 0.0;
  }
  return f1;
}

CompareReport compare_models(const Model& float_model, const QuantizedModel& qm,
                             std::span<const std::vector<TensorF>> clips,
                             std::span<const std::size_t> labels, std::size_t classes) {
  if (clips.size() != labels.size()) throw DomainError("compare_models: label count mismatch");
  if (clips.empty()) throw DomainError("compare_models: empty dataset");
  if (float_model.arch.input_shape != qm.arch.input_shape) {
    throw DomainError("compare_models: architectures differ");
  }
  for (std::size_t l : labels) {
    if (l >= classes) throw DomainError("compare_models: label out of range");
  }
  const std::size_t n = clips.size();
  std::vector<std::size_t> pf(n), pq(n);
  std::vector<std::string> errors(n);
#pragma omp parallel
  {
    InferenceContext ctx(qm.buffers);
#pragma omp for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        const ForwardTrace t = forward(float_model, clips[i], false);
        if (t.logits.size() != classes) throw DomainError("class count mismatch");
        pf[i] = argmax(t.logits);
        pq[i] = qforward(qm, quantize_patches(qm, clips[i]), ctx).prediction;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DomainError("compare_models: " + e);
  }
  CompareReport r;
  r.samples = n;
  r.classes = classes;
  std::size_t cf = 0, cq = 0, agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cf += pf[i] == labels[i];
    cq += pq[i] == labels[i];
    agree += pf[i] == pq[i];
  }
  r.accuracy_float = static_cast<double>(cf) / static_cast<double>(n);
  r.accuracy_int8 = static_cast<double>(cq) / static_cast<double>(n);
  r.gap = r.accuracy_float - r.accuracy_int8;
  r.agreement = static_cast<double>(agree) / static_cast<double>(n);
  r.f1_float = per_class_f1(labels, pf, classes);
  r.f1_int8 = per_class_f1(labels, pq, classes);
  return r;
}

nlohmann::json to_json(const CompareReport& r) {
  return {{"samples", r.samples},        {"classes", r.classes},
          {"accuracy_float", r.accuracy_float}, {"accuracy_int8", r.accuracy_int8},
          {"gap", r.gap},                {"agreement", r.agreement},
          {"f1_float", r.f1_float},      {"f1_int8", r.f1_int8}};
}

}  // namespace tinysed
