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

#include "tinysed/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "tinysed/kernels.hpp"
#include "tinysed/model_io.hpp"

namespace tinysed {
namespace {

struct SampleGrads {
  LossTerms terms;
  std::vector<TensorF> grads;  // aligned with trainable keys
};

std::size_t logits_end(const ModelArch& a) {
  return !a.layers.empty() && a.layers.back().kind == LayerKind::Softmax ? a.layers.size() - 1
                                                                          : a.layers.size();
}

void check_trainable(const ModelArch& a) {
  for (const auto& l : a.layers) {
    if (l.kind == LayerKind::Recurrent) {
      throw DomainError("backprop: unsupported layer '" + l.name + "' (recurrent) in trainable model");
    }
  }
}

// Terms and dL/dlogits for one sample.
LossTerms output_terms(const TensorF& p, std::size_t label, const TensorF* pbar, const TensorF* vt,
                       const TensorF& vs, const LossWeights& w, TensorF* dz) {
  const std::size_t c = p.size();
  if (label >= c) throw DomainError("loss: label out of range");
  if (pbar && pbar->size() != c) throw DomainError("loss: teacher/student class count mismatch");
  if (vt && vt->size() != vs.size()) throw DomainError("loss: embedding dimension mismatch");
  LossTerms t;
  std::vector<double> g(c, 0.0);  // dL/dp
  if (p[label] >= kLogFloor) g[label] -= w.alpha_h / p[label];
  t.hard = -std::log(std::max(p[label], kLogFloor));
  if (pbar) {
    for (std::size_t k = 0; k < c; ++k) {
      t.soft -= (*pbar)[k] * std::log(std::max(p[k], kLogFloor));
      if (p[k] >= kLogFloor) g[k] -= w.alpha_s * (*pbar)[k] / p[k];
    }
  }
  if (vt) {
    for (std::size_t k = 0; k < vs.size(); ++k) {
      const double d = (*vt)[k] - vs[k];
      t.embed += d * d;
    }
  }
  if (dz) {
    double gp = 0.0;
    for (std::size_t k = 0; k < c; ++k) gp += g[k] * p[k];
    *dz = TensorF({c});
    for (std::size_t k = 0; k < c; ++k) (*dz)[k] = p[k] * (g[k] - gp);
  }
  return t;
}

void relu_mask(TensorF& dy, const TensorF& y) {
  for (std::size_t k = 0; k < dy.size(); ++k) {
    if (!(y[k] > 0.0)) dy[k] = 0.0;
  }
}

SampleGrads sample_grads(const Model& m, const std::vector<std::string>& keys, const TensorF& x,
                         std::size_t label, const TensorF* pbar, const TensorF* vt,
                         const LossWeights& w, std::size_t train_from) {
  const auto& layers = m.arch.layers;
  const ForwardTrace t = forward(m, x, true);
  const auto tap = m.arch.embedding_index();
  SampleGrads sg;
  sg.grads.resize(keys.size());
  TensorF dy;
  sg.terms = output_terms(t.class_probs, label, pbar, tap ? vt : nullptr,
                          t.embedding, w, &dy);
  auto slot = [&](const std::string& key) -> TensorF& {
    const auto it = std::find(keys.begin(), keys.end(), key);
    return sg.grads[static_cast<std::size_t>(it - keys.begin())];
  };
  for (std::size_t i = logits_end(m.arch); i-- > train_from;) {
    const LayerSpec& l = layers[i];
    const TensorF& xi = i == 0 ? x : t.activations[i - 1][0];
    const TensorF& yi = t.activations[i][0];
    if (tap && *tap == i && vt && w.alpha_e > 0.0) {
      for (std::size_t k = 0; k < dy.size(); ++k) dy[k] += w.alpha_e * 2.0 * (yi[k] - (*vt)[k]);
    }
    const bool need_dx = i > train_from;
    switch (l.kind) {
      case LayerKind::Conv2D: {
        if (l.activation == Activation::Relu) relu_mask(dy, yi);
        auto g = kernels::conv2d_backward(xi, m.weights.at(l.name + "/kernel"), dy, l.padding, need_dx);
        slot(l.name + "/kernel") = std::move(g.dkernel);
        slot(l.name + "/bias") = std::move(g.dbias);
        dy = std::move(g.dx);
        break;
      }
      case LayerKind::Dense: {
        if (l.activation == Activation::Relu) relu_mask(dy, yi);
        auto g = kernels::dense_backward(xi, m.weights.at(l.name + "/kernel"), dy, need_dx);
        slot(l.name + "/kernel") = std::move(g.dkernel);
        slot(l.name + "/bias") = std::move(g.dbias);
        dy = std::move(g.dx);
        break;
      }
      case LayerKind::MaxPool2:
        dy = kernels::maxpool2_backward(xi, dy);
        break;
      case LayerKind::Flatten:
        dy.reshape(xi.shape());
        break;
      case LayerKind::BatchNorm: {
        if (l.activation == Activation::Relu) relu_mask(dy, yi);
        const TensorF& gamma = m.weights.at(l.name + "/gamma");
        const TensorF& mean = m.weights.at(l.name + "/mean");
        const TensorF& var = m.weights.at(l.name + "/var");
        const std::size_t c = gamma.size();
        TensorF dg({c}, 0.0), db({c}, 0.0), dx(xi.shape());
        for (std::size_t k = 0; k < dy.size(); ++k) {
          const std::size_t ch = k % c;
          const double inv = 1.0 / std::sqrt(var[ch] + kBatchNormEps);
          dg[ch] += dy[k] * (xi[k] - mean[ch]) * inv;
          db[ch] += dy[k];
          dx[k] = dy[k] * gamma[ch] * inv;
        }
        slot(l.name + "/gamma") = std::move(dg);
        slot(l.name + "/beta") = std::move(db);
        dy = std::move(dx);
        break;
      }
      case LayerKind::Softmax:
      case LayerKind::Recurrent:
        throw DomainError("backprop: unsupported layer '" + l.name + "' in trainable position");
    }
  }
  return sg;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct EvalResult {
  double loss = 0.0;  // mean per sample
  double accuracy = 0.0;
};

EvalResult evaluate(const Model& m, const Split& s, const TeacherTargets* tt, const LossWeights& w) {
  const std::size_t n = s.size();
  std::vector<double> loss(n, 0.0);
  std::vector<int> hit(n, 0);
  const bool use_t = tt != nullptr;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const ForwardTrace t = forward(m, s.x[i], false);
    const LossTerms lt = output_terms(t.class_probs, s.y[i], use_t ? &tt->probs[i] : nullptr,
                                      use_t && !t.embedding.empty() ? &tt->embedding[i] : nullptr,
                                      t.embedding, w, nullptr);
    loss[i] = compound_loss(lt, w);
    hit[i] = argmax(t.logits) == s.y[i];
  }
  EvalResult r;
  if (n == 0) return r;
  r.loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(n);
  r.accuracy = static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(n);
  return r;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha_h >= 0.0 && alpha_s >= 0.0 && alpha_e >= 0.0)) {
    throw DomainError("loss weights must be nonnegative");
  }
  if (alpha_h + alpha_s + alpha_e <= 0.0) throw DomainError("at least one loss weight must be positive");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Th: return "Th";
    case Strategy::Ths: return "Ths";
    case Strategy::Thse: return "Thse";
    case Strategy::Te: return "Te";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "Th") return Strategy::Th;
  if (s == "Ths") return Strategy::Ths;
  if (s == "Thse") return Strategy::Thse;
  if (s == "Te") return Strategy::Te;
  throw DomainError("unknown strategy '" + s + "' (expected Th, Ths, Thse or Te)");
}

LossWeights strategy_weights(Strategy s) {
  switch (s) {
    case Strategy::Th: return {1.0, 0.0, 0.0};
    case Strategy::Ths: return {0.5, 1.0, 0.0};
    case Strategy::Thse: return {1.0, 1.0, 1.0};
    case Strategy::Te: return {0.0, 0.0, 1.0};
  }
  return {};
}

double compound_loss(const LossTerms& t, const LossWeights& w) {
  return w.alpha_h * t.hard + w.alpha_s * t.soft + w.alpha_e * t.embed;
}

TeacherTargets teacher_targets(const Model& teacher, std::span<const TensorF> inputs) {
  TeacherTargets tt;
  tt.probs.resize(inputs.size());
  tt.embedding.resize(inputs.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ForwardTrace t = forward(teacher, inputs[i], false);
    tt.probs[i] = std::move(t.class_probs);
    tt.embedding[i] = std::move(t.embedding);
  }
  return tt;
}

LossTerms loss_terms(std::span<const ForwardTrace> student, const TeacherTargets* teacher,
                     std::span<const std::size_t> labels) {
  if (student.size() != labels.size()) throw DomainError("loss_terms: label count mismatch");
  if (teacher && (teacher->probs.size() != student.size() ||
                  teacher->embedding.size() != student.size())) {
    throw DomainError("loss_terms: teacher target count mismatch");
  }
  LossTerms sum;
  const LossWeights w{1.0, 1.0, 1.0};
  for (std::size_t n = 0; n < student.size(); ++n) {
    const LossTerms t =
        output_terms(student[n].class_probs, labels[n], teacher ? &teacher->probs[n] : nullptr,
                     teacher ? &teacher->embedding[n] : nullptr, student[n].embedding, w, nullptr);
    sum.hard += t.hard;
    sum.soft += t.soft;
    sum.embed += t.embed;
  }
  return sum;
}

std::vector<std::string> trainable_keys(const ModelArch& arch) {
  std::vector<std::string> keys;
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::Conv2D || l.kind == LayerKind::Dense) {
      keys.push_back(l.name + "/kernel");
      keys.push_back(l.name + "/bias");
    } else if (l.kind == LayerKind::BatchNorm) {
      keys.push_back(l.name + "/gamma");
      keys.push_back(l.name + "/beta");
    }
  }
  return keys;
}

GradResult backprop_grads(const Model& model, std::span<const TensorF> inputs,
                          std::span<const std::size_t> labels, const TeacherTargets* teacher,
                          const LossWeights& w, std::size_t train_from) {
  w.validate();
  check_trainable(model.arch);
  if (inputs.size() != labels.size()) throw DomainError("backprop: label count mismatch");
  if (w.needs_teacher() && teacher == nullptr) throw DomainError("backprop: teacher required");
  if (teacher && (teacher->probs.size() != inputs.size() || teacher->embedding.size() != inputs.size())) {
    throw DomainError("backprop: teacher target count mismatch");
  }
  if (w.alpha_e > 0.0 && !model.arch.embedding_index()) {
    throw DomainError("backprop: embedding loss needs an embedding tap");
  }
  const auto keys = trainable_keys(model.arch);
  std::vector<std::size_t> key_layer(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    key_layer[k] = model.arch.find_layer(keys[k].substr(0, keys[k].find('/')));
  }
  const std::size_t n = inputs.size();
  std::vector<SampleGrads> per(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      per[i] = sample_grads(model, keys, inputs[i], labels[i],
                            teacher ? &teacher->probs[i] : nullptr,
                            teacher ? &teacher->embedding[i] : nullptr, w, train_from);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DomainError(e);
  }
  // Fixed-order reduction.
  GradResult r;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (key_layer[k] < train_from) continue;
    TensorF acc(model.weights.at(keys[k]).shape(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const TensorF& g = per[i].grads[k];
      for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
    }
    r.grads.tensors.emplace(keys[k], std::move(acc));
  }
  for (const auto& s : per) {
    r.terms.hard += s.terms.hard;
    r.terms.soft += s.terms.soft;
    r.terms.embed += s.terms.embed;
  }
  r.loss = compound_loss(r.terms, w);
  return r;
}

GradResult backprop_grads(const Model& model, std::span<const TensorF> inputs,
                          std::span<const std::size_t> labels, const Model* teacher,
                          const LossWeights& w) {
  if (teacher == nullptr) return backprop_grads(model, inputs, labels, nullptr, w, 0);
  const TeacherTargets tt = teacher_targets(*teacher, inputs);
  return backprop_grads(model, inputs, labels, &tt, w, 0);
}

// ---------------------------------------------------------------------------
// Synthetic data

SyntheticDataset synth_dataset(std::size_t classes, std::size_t per_class, const Shape& patch_shape,
                               std::uint64_t seed, const SynthDomain& domain) {
  if (classes < 2) throw DomainError("synth_dataset: need at least 2 classes");
  if (patch_shape.size() != 3 || patch_shape[2] != 1 || patch_shape[0] < 4 || patch_shape[1] < 4) {
    throw DomainError("synth_dataset: patch shape must be H x W x 1 with H, W >= 4");
  }
  if (per_class == 0) throw DomainError("synth_dataset: empty classes");
  const std::size_t h = patch_shape[0], w = patch_shape[1];
  const std::size_t positions = (classes + 1) / 2;
  const double band = static_cast<double>(w) / static_cast<double>(positions + 1);

  SyntheticDataset d;
  d.patch_shape = patch_shape;
  d.classes = classes;
  d.seed = seed;
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(per_class)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(per_class)));
  for (std::size_t c = 0; c < classes; ++c) {
    std::mt19937_64 rng(mix(seed, c));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, domain.noise);
    const double center = band * static_cast<double>(c / 2 + 1) + domain.freq_offset;
    // Even classes hold a steady band, odd classes sweep upward.
    const double slope = c % 2 == 0 ? 0.0 : 2.5 * band / static_cast<double>(h);
    for (std::size_t k = 0; k < per_class; ++k) {
      TensorF x(patch_shape, 0.0);
      const double amp = domain.gain * (0.7 + 0.6 * u(rng));
      const double f0 = center + (u(rng) - 0.5) * 0.8 * band - (slope > 0 ? 0.4 * band : 0.0);
      const auto t0 = static_cast<std::size_t>(u(rng) * static_cast<double>(h) / 3.0);
      const auto len = static_cast<std::size_t>((0.5 + 0.5 * u(rng)) * static_cast<double>(h));
      const double width = 0.5 + 0.5 * u(rng);
      for (std::size_t t = t0; t < std::min(h, t0 + len); ++t) {
        const double fc = f0 + slope * static_cast<double>(t - t0);
        for (std::size_t f = 0; f < w; ++f) {
          const double df = (static_cast<double>(f) - fc) / width;
          x[t * w + f] += amp * std::exp(-0.5 * df * df);
        }
      }
      for (auto& v : x.values()) v += noise(rng);
      Split& s = k < n_train ? d.train : k < n_train + n_val ? d.val : d.test;
      s.x.push_back(std::move(x));
      s.y.push_back(c);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw DomainError("learning rate must be a finite nonnegative number");
  }
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (epochs == 0) throw DomainError("epochs must be positive");
  if (!(clip_norm >= 0.0)) throw DomainError("clip norm must be nonnegative");
}

double accuracy(const Model& m, const Split& s) {
  return evaluate(m, s, nullptr, {1.0, 0.0, 0.0}).accuracy;
}

TrainResult sgd_train(const Model& init, const SyntheticDataset& data, const Model* teacher,
                      const LossWeights& w, const TrainConfig& cfg) {
  cfg.validate();
  w.validate();
  check_trainable(init.arch);
  if (data.train.size() == 0) throw DomainError("sgd_train: empty training set");
  if (w.needs_teacher() && teacher == nullptr) throw DomainError("sgd_train: teacher required");
  std::optional<TeacherTargets> tt_train, tt_val;
  if (teacher) {
    tt_train = teacher_targets(*teacher, data.train.x);
    tt_val = teacher_targets(*teacher, data.val.x);
  }
  const auto keys = trainable_keys(init.arch);

  TrainResult best{init, {}};
  best.report.weights = w;
  Model m = init;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<TensorF> bx;
      std::vector<std::size_t> by;
      TeacherTargets bt;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        bx.push_back(data.train.x[i]);
        by.push_back(data.train.y[i]);
        if (tt_train) {
          bt.probs.push_back(tt_train->probs[i]);
          bt.embedding.push_back(tt_train->embedding[i]);
        }
      }
      const GradResult g = backprop_grads(m, bx, by, tt_train ? &bt : nullptr, w, cfg.train_from);
      train_loss += g.loss;
      const double inv_n = 1.0 / static_cast<double>(end - start);
      double norm2 = 0.0;
      for (const auto& [key, grad] : g.grads.tensors) {
        for (double v : grad.values()) norm2 += v * v;
      }
      const double norm = std::sqrt(norm2) * inv_n;
      const double clip = cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      const double scale = cfg.learning_rate * inv_n * clip;
      for (const auto& [key, grad] : g.grads.tensors) {
        TensorF& p = m.weights.at(key);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= scale * grad[j];
      }
    }
    CurvePoint pt;
    pt.epoch = epoch;
    pt.train_loss = train_loss / static_cast<double>(order.size());
    const EvalResult ev = data.val.size() > 0 ? evaluate(m, data.val, tt_val ? &*tt_val : nullptr, w)
                                              : EvalResult{pt.train_loss, 0.0};
    pt.val_loss = ev.loss;
    pt.val_accuracy = ev.accuracy;
    best.report.curve.push_back(pt);
    if (!std::isfinite(pt.train_loss)) throw DomainError("sgd_train: loss diverged");
    if (pt.val_loss < best_val) {
      best_val = pt.val_loss;
      best.model = m;
      best.report.best_epoch = epoch;
      best.report.final_train_loss = pt.train_loss;
      best.report.final_val_loss = pt.val_loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return best;
}

DistillResult distill(const Model& teacher, const ModelArch& student_arch, const LossWeights& w,
                      const SyntheticDataset& data, const TrainConfig& cfg,
                      bool embedding_then_head) {
  w.validate();
  const auto s_tap = student_arch.embedding_index();
  if (w.alpha_e > 0.0) {
    const auto t_tap = teacher.arch.embedding_index();
    if (!s_tap || !t_tap) throw DomainError("distill: embedding loss needs taps on both models");
    const auto ts = shape_trace(teacher.arch)[*t_tap].output_elements;
    const auto ss = shape_trace(student_arch)[*s_tap].output_elements;
    if (ts != ss) {
      throw DomainError("distill: embedding sizes differ (" + std::to_string(ts) + " vs " +
                        std::to_string(ss) + ")");
    }
  }
  DistillResult r;
  const Model init = init_model(student_arch, cfg.seed);
  TrainResult s1 = sgd_train(init, data, &teacher, w, cfg);
  s1.report.stage = embedding_then_head ? "embedding" : "distill";
  r.stages.push_back(s1.report);
  r.student = std::move(s1.model);
  if (embedding_then_head) {
    if (!s_tap) throw DomainError("distill: two-stage Te needs an embedding tap");
    TrainConfig head = cfg;
    head.train_from = *s_tap + 1;
    TrainResult s2 = sgd_train(r.student, data, nullptr, {1.0, 0.0, 0.0}, head);
    s2.report.stage = "head";
    r.stages.push_back(s2.report);
    r.student = std::move(s2.model);
  }
  return r;
}

DistillResult distill(const Model& teacher, const ModelArch& student_arch, Strategy s,
                      const SyntheticDataset& data, const TrainConfig& cfg) {
  return distill(teacher, student_arch, strategy_weights(s), data, cfg, s == Strategy::Te);
}

TwoStageResult two_stage_distill(const Model& teacher, const ModelArch& intermediate_arch,
                                 const ModelArch& student_arch, const LossWeights& w,
                                 const SyntheticDataset& data, const TrainConfig& cfg) {
  TwoStageResult r;
  DistillResult a = distill(teacher, intermediate_arch, w, data, cfg);
  r.intermediate = std::move(a.student);
  r.stage1 = std::move(a.stages);
  TrainConfig c2 = cfg;
  c2.seed = cfg.seed + 1;
  DistillResult b = distill(r.intermediate, student_arch, w, data, c2);
  r.student = std::move(b.student);
  r.stage2 = std::move(b.stages);
  return r;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const TrainReport> reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  out << "stage,epoch,train_loss,val_loss,val_accuracy\n";
  out.precision(10);
  for (const auto& r : reports) {
    for (const auto& p : r.curve) {
      out << r.stage << ',' << p.epoch << ',' << p.train_loss << ',' << p.val_loss << ','
          << p.val_accuracy << '\n';
    }
  }
}

void save_dataset(const std::filesystem::path& path, const SyntheticDataset& d) {
  std::vector<NamedTensor> tensors;
  const std::pair<const char*, const Split*> splits[] = {
      {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
  for (const auto& [name, split] : splits) {
    if (split->x.size() != split->y.size()) throw DomainError("save_dataset: label count mismatch");
    TensorF y({split->y.size()});
    for (std::size_t i = 0; i < split->y.size(); ++i) y[i] = static_cast<double>(split->y[i]);
    tensors.push_back({std::string(name) + "/x", stack_tensors(split->x, d.patch_shape), DType::F32});
    tensors.push_back({std::string(name) + "/y", std::move(y)});
  }
  tensors.push_back({"classes", TensorF({1}, static_cast<double>(d.classes))});
  tensors.push_back({"seed", TensorF(Shape{2}, std::vector<double>{
                                                   static_cast<double>(d.seed >> 32),
                                                   static_cast<double>(d.seed & 0xffffffffu)})});
  write_blob(path, tensors);
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  std::map<std::string, TensorF> t;
  for (NamedTensor& nt : read_blob(path)) {
    if (auto* f = std::get_if<TensorF>(&nt.tensor)) t.emplace(nt.name, std::move(*f));
  }
  auto need = [&](const std::string& k) -> const TensorF& {
    auto it = t.find(k);
    if (it == t.end()) throw FormatError("dataset '" + path.string() + "' lacks '" + k + "'");
    return it->second;
  };
  SyntheticDataset d;
  d.classes = static_cast<std::size_t>(need("classes")[0]);
  const TensorF& seed = need("seed");
  if (seed.size() != 2) throw FormatError("dataset seed must hold two values");
  d.seed = (static_cast<std::uint64_t>(seed[0]) << 32) | static_cast<std::uint64_t>(seed[1]);
  const std::pair<const char*, Split*> splits[] = {
      {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
  for (const auto& [name, split] : splits) {
    const TensorF& x = need(std::string(name) + "/x");
    const TensorF& y = need(std::string(name) + "/y");
    if (x.rank() < 2 || y.rank() != 1 || x.shape()[0] != y.size()) {
      throw FormatError("dataset split '" + std::string(name) + "' is malformed");
    }
    d.patch_shape.assign(x.shape().begin() + 1, x.shape().end());
    split->x = unstack_tensors(x);
    for (double v : y.values()) {
      if (v < 0 || v >= static_cast<double>(d.classes) || v != std::floor(v)) {
        throw FormatError("dataset label out of range");
      }
      split->y.push_back(static_cast<std::size_t>(v));
    }
  }
  return d;
}

}  // namespace tinysed
