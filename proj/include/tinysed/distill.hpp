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

#ifndef TINYSED_DISTILL_HPP_
#define TINYSED_DISTILL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinysed/model.hpp"
#include "tinysed/ref_exec.hpp"

namespace tinysed {

constexpr double kLogFloor = 1e-12;

struct LossWeights {
  double alpha_h = 1.0;
  double alpha_s = 0.0;
  double alpha_e = 0.0;

  void validate() const;  // nonnegative, at least one positive
  bool needs_teacher() const { return alpha_s > 0.0 || alpha_e > 0.0; }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

enum class Strategy { Th, Ths, Thse, Te };
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
// Th (1,0,0), Ths (0.5,1,0), Thse (1,1,1), Te (0,0,1) followed by a
// hard-label head stage.
LossWeights strategy_weights(Strategy s);

struct LossTerms {
  double hard = 0.0;   // -sum_n sum_c y log p
  double soft = 0.0;   // -sum_n sum_c pbar log p
  double embed = 0.0;  // sum_n ||v_t - v_s||^2
};

double compound_loss(const LossTerms& t, const LossWeights& w);

// What the frozen teacher contributes per sample.
struct TeacherTargets {
  std::vector<TensorF> probs;
  std::vector<TensorF> embedding;
};

TeacherTargets teacher_targets(const Model& teacher, std::span<const TensorF> inputs);

// Sums over the batch. `teacher` may be null when only L_h is wanted.
LossTerms loss_terms(std::span<const ForwardTrace> student, const TeacherTargets* teacher,
                     std::span<const std::size_t> labels);

// Tensors updated by training: conv/dense kernels and biases, batch-norm
// gamma and beta. Batch-norm mean and variance stay fixed.
std::vector<std::string> trainable_keys(const ModelArch& arch);

struct GradResult {
  LossTerms terms;
  double loss = 0.0;
  ModelWeights grads;  // keyed like the weights, trainable tensors only
};

// Exact gradients of compound_loss over the batch. Layers before
// `train_from` are treated as frozen (no gradients). Recurrent layers are
// rejected.
GradResult backprop_grads(const Model& model, std::span<const TensorF> inputs,
                          std::span<const std::size_t> labels, const TeacherTargets* teacher,
                          const LossWeights& w, std::size_t train_from = 0);
GradResult backprop_grads(const Model& model, std::span<const TensorF> inputs,
                          std::span<const std::size_t> labels, const Model* teacher,
                          const LossWeights& w);

struct Split {
  std::vector<TensorF> x;
  std::vector<std::size_t> y;
  std::size_t size() const { return x.size(); }
};

struct SyntheticDataset {
  Shape patch_shape;
  std::size_t classes = 0;
  Split train, val, test;
  std::uint64_t seed = 0;
};

// Recording conditions; two domains differ by a frequency offset, a gain
// and the noise level.
struct SynthDomain {
  double freq_offset = 0.0;  // in frequency bins
  double gain = 1.0;
  double noise = 0.35;
};

// Class c draws a band-limited stripe whose frequency position and
// orientation depend on c, with random time shift, jitter and noise.
// Per class: round(0.8 n) train, round(0.1 n) validation, the rest test.
SyntheticDataset synth_dataset(std::size_t classes, std::size_t per_class, const Shape& patch_shape,
                               std::uint64_t seed, const SynthDomain& domain = {});

// Dataset file: a blob with "<split>/x" [N, H, W, C] (f32) and "<split>/y"
// [N] (f64 labels) for train, val and test, plus "classes" [1] and "seed"
// [2] (high and low 32 bits).
void save_dataset(const std::filesystem::path& path, const SyntheticDataset& d);
SyntheticDataset load_dataset(const std::filesystem::path& path);

struct TrainConfig {
  double learning_rate = 0.02;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t patience = 20;  // epochs without validation improvement
  std::size_t train_from = 0;
  // Rescales the mean batch gradient to this global L2 norm when larger;
  // 0 disables. Keeps the large embedding term from blowing up early steps.
  double clip_norm = 20.0;

  void validate() const;
};

struct CurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per sample
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::string stage;
  LossWeights weights;
  std::vector<CurvePoint> curve;
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
};

struct TrainResult {
  Model model;  // weights of the best validation epoch
  TrainReport report;
};

// Mini-batch SGD on the mean per-sample compound loss, seeded shuffling,
// optional gradient-norm clipping, early stop on validation loss.
TrainResult sgd_train(const Model& init, const SyntheticDataset& data, const Model* teacher,
                      const LossWeights& w, const TrainConfig& cfg);

double accuracy(const Model& m, const Split& s);

struct DistillResult {
  Model student;
  std::vector<TrainReport> stages;
};

// Trains `student_arch` (initialised from cfg.seed) against the frozen
// teacher. Te runs an embedding-only stage then a hard-label stage on the
// layers after the embedding tap.
DistillResult distill(const Model& teacher, const ModelArch& student_arch, const LossWeights& w,
                      const SyntheticDataset& data, const TrainConfig& cfg,
                      bool embedding_then_head = false);
DistillResult distill(const Model& teacher, const ModelArch& student_arch, Strategy s,
                      const SyntheticDataset& data, const TrainConfig& cfg);

struct TwoStageResult {
  Model intermediate;
  Model student;
  std::vector<TrainReport> stage1, stage2;
};

// teacher -> intermediate with the compound loss, then the frozen
// intermediate -> student.
TwoStageResult two_stage_distill(const Model& teacher, const ModelArch& intermediate_arch,
                                 const ModelArch& student_arch, const LossWeights& w,
                                 const SyntheticDataset& data, const TrainConfig& cfg);

void write_curve_csv(const std::filesystem::path& path, std::span<const TrainReport> reports);

}  // namespace tinysed

#endif  // TINYSED_DISTILL_HPP_
