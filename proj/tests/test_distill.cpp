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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tinysed/distill.hpp"

using namespace tinysed;

namespace {

ModelArch tiny_arch(std::size_t classes = 3) {
  ModelArch a;
  a.name = "tiny";
  a.input_shape = {6, 5, 1};
  a.layers = {LayerSpec::conv("conv1", 4, Padding::Same),
              LayerSpec::pool("pool1"),
              LayerSpec::conv("conv2", 4, Padding::Valid),
              LayerSpec::flatten(),
              LayerSpec::dense("fc1", 6, Activation::None, true),
              LayerSpec::batchnorm("bn", Activation::Relu),
              LayerSpec::dense("fc2", static_cast<int>(classes)),
              LayerSpec::softmax()};
  return a;
}

std::vector<TensorF> random_inputs(const Shape& s, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<TensorF> out;
  for (std::size_t k = 0; k < n; ++k) {
    TensorF t(s);
    for (auto& v : t.values()) v = d(rng);
    out.push_back(std::move(t));
  }
  return out;
}

Model perturbed(const Model& m, std::uint64_t seed) {
  Model r = m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.2);
  for (auto& [k, t] : r.weights.tensors) {
    if (k.ends_with("/var") || k.ends_with("/mean")) continue;
    for (auto& v : t.values()) v += d(rng);
  }
  r.weights.at("bn/mean").values().assign(6, 0.1);
  r.weights.at("bn/var").values().assign(6, 1.7);
  return r;
}

double batch_loss(const Model& m, const std::vector<TensorF>& xs, const std::vector<std::size_t>& ys,
                  const TeacherTargets& tt, const LossWeights& w) {
  std::vector<ForwardTrace> traces;
  for (const auto& x : xs) traces.push_back(forward(m, x, false));
  return compound_loss(loss_terms(traces, &tt, ys), w);
}

}  // namespace

TEST_CASE("strategy table") {
  CHECK(strategy_weights(Strategy::Th) == LossWeights{1, 0, 0});
  CHECK(strategy_weights(Strategy::Ths) == LossWeights{0.5, 1, 0});
  CHECK(strategy_weights(Strategy::Thse) == LossWeights{1, 1, 1});
  CHECK(strategy_weights(Strategy::Te) == LossWeights{0, 0, 1});
  CHECK(strategy_from_string("Thse") == Strategy::Thse);
  CHECK_THROWS_AS(strategy_from_string("T"), DomainError);
  CHECK_THROWS_AS(LossWeights({0, 0, 0}).validate(), DomainError);
  CHECK_THROWS_AS(LossWeights({-1, 1, 0}).validate(), DomainError);
}

TEST_CASE("compound loss is the weighted sum and linear in each weight") {
  const LossTerms t{1.5, 2.25, 0.75};
  CHECK(compound_loss(t, {1, 0, 0}) == t.hard);
  CHECK(compound_loss(t, {1, 1, 1}) == doctest::Approx(t.hard + t.soft + t.embed));
  CHECK(compound_loss(t, {0.5, 1, 0}) == doctest::Approx(0.5 * t.hard + t.soft));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 3; ++k) {
      LossWeights a{u(rng), u(rng), u(rng)}, b = a;
      const double s = u(rng);
      (axis == 0 ? b.alpha_h : axis == 1 ? b.alpha_s : b.alpha_e) *= s;
      const double base = compound_loss(t, {axis == 0 ? 0 : a.alpha_h, axis == 1 ? 0 : a.alpha_s,
                                            axis == 2 ? 0 : a.alpha_e});
      CHECK(compound_loss(t, b) - base == doctest::Approx(s * (compound_loss(t, a) - base)));
    }
  }
}

TEST_CASE("loss terms") {
  Model m = init_model(tiny_arch(10), 1);
  m.weights.at("fc2/kernel").values().assign(m.weights.at("fc2/kernel").size(), 0.0);
  const auto xs = random_inputs(m.arch.input_shape, 4, 2);
  std::vector<ForwardTrace> tr;
  for (const auto& x : xs) tr.push_back(forward(m, x));
  const std::vector<std::size_t> y{0, 3, 9, 5};
  CHECK(loss_terms(tr, nullptr, y).hard == doctest::Approx(4 * std::log(10.0)).epsilon(1e-12));

  // Student == teacher.
  const TeacherTargets self = teacher_targets(m, xs);
  const LossTerms st = loss_terms(tr, &self, y);
  CHECK(st.embed == 0.0);
  const GradResult g = backprop_grads(m, xs, y, &self, {0, 1, 0});
  for (const auto& [k, t] : g.grads.tensors) {
    for (double v : t.values()) CHECK(std::abs(v) < 1e-12);
  }

  // Scalar-loop oracle on a random 3-class batch.
  const Model m3 = perturbed(init_model(tiny_arch(3), 3), 4);
  const auto x3 = random_inputs(m3.arch.input_shape, 7, 5);
  std::vector<std::size_t> y3{0, 1, 2, 2, 1, 0, 1};
  std::vector<ForwardTrace> t3;
  double oracle = 0.0;
  for (std::size_t n = 0; n < x3.size(); ++n) {
    t3.push_back(forward(m3, x3[n]));
    const TensorF& z = t3.back().logits;
    const double lse = std::log(std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]));
    for (std::size_t c = 0; c < 3; ++c) oracle -= (c == y3[n] ? 1.0 : 0.0) * (z[c] - lse);
  }
  CHECK(std::abs(loss_terms(t3, nullptr, y3).hard - oracle) < 1e-12);
}

TEST_CASE("soft loss is bounded below by the teacher entropy") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    TensorF p({5}), q({5});
    double sp = 0, sq = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      p[k] = u(rng);
      q[k] = u(rng);
      sp += p[k];
      sq += q[k];
    }
    for (std::size_t k = 0; k < 5; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    ForwardTrace st;
    st.class_probs = p;
    TeacherTargets tt{{q}, {TensorF()}};
    const std::vector<std::size_t> y{0};
    const double ls = loss_terms(std::span<const ForwardTrace>(&st, 1), &tt, y).soft;
    double h = 0;
    for (double v : q.values()) h -= v * std::log(v);
    CHECK(ls >= h - 1e-12);
    st.class_probs = q;
    CHECK(loss_terms(std::span<const ForwardTrace>(&st, 1), &tt, y).soft == doctest::Approx(h));
  }
}

TEST_CASE("gradients match central differences") {
  const Model m = perturbed(init_model(tiny_arch(3), 7), 8);
  const Model teacher = perturbed(init_model(tiny_arch(3), 9), 10);
  const auto xs = random_inputs(m.arch.input_shape, 3, 11);
  const std::vector<std::size_t> ys{2, 0, 1};
  const TeacherTargets tt = teacher_targets(teacher, xs);
  for (Strategy s : {Strategy::Th, Strategy::Ths, Strategy::Thse, Strategy::Te}) {
    const LossWeights w = strategy_weights(s);
    const GradResult g = backprop_grads(m, xs, ys, &tt, w);
    CHECK(g.loss == doctest::Approx(batch_loss(m, xs, ys, tt, w)));
    double worst = 0.0;
    for (const auto& key : trainable_keys(m.arch)) {
      for (std::size_t j = 0; j < m.weights.at(key).size(); ++j) {
        Model a = m, b = m;
        a.weights.at(key)[j] += 1e-4;
        b.weights.at(key)[j] -= 1e-4;
        const double fd = (batch_loss(a, xs, ys, tt, w) - batch_loss(b, xs, ys, tt, w)) / 2e-4;
        const double an = g.grads.at(key)[j];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-7});
        worst = std::max(worst, rel);
      }
    }
    CHECK_MESSAGE(worst < 1e-4, to_string(s), " worst ", worst);
  }
}

TEST_CASE("embedding gradient is 2 (v_s - v_t)") {
  // Only the tap layer's bias sees the embedding gradient directly.
  const Model m = perturbed(init_model(tiny_arch(3), 12), 13);
  const auto xs = random_inputs(m.arch.input_shape, 1, 14);
  const std::vector<std::size_t> ys{1};
  TeacherTargets tt = teacher_targets(m, xs);
  for (auto& v : tt.embedding[0].values()) v += 0.3;
  const GradResult g = backprop_grads(m, xs, ys, &tt, {0, 0, 1});
  const TensorF vs = forward(m, xs[0]).embedding;
  for (std::size_t k = 0; k < vs.size(); ++k) {
    CHECK(g.grads.at("fc1/bias")[k] == doctest::Approx(2 * (vs[k] - tt.embedding[0][k])));
  }
  for (double v : g.grads.at("fc2/kernel").values()) CHECK(v == 0.0);
}

TEST_CASE("unsupported layers are rejected") {
  const Model m = init_model(preset("M20k"), 1);
  const auto xs = random_inputs(m.arch.input_shape, 1, 1);
  const std::vector<std::size_t> ys{0};
  CHECK_THROWS_AS(backprop_grads(m, xs, ys, static_cast<const Model*>(nullptr), {1, 0, 0}), DomainError);
}

TEST_CASE("synthetic dataset") {
  const auto a = synth_dataset(10, 20, {24, 16, 1}, 5);
  const auto b = synth_dataset(10, 20, {24, 16, 1}, 5);
  CHECK(a.train.x == b.train.x);
  CHECK(a.test.y == b.test.y);
  CHECK(a.train.size() == 160);
  CHECK(a.val.size() == 20);
  CHECK(a.test.size() == 20);
  for (const Split* s : {&a.train, &a.val, &a.test}) {
    std::vector<std::size_t> hist(10, 0);
    for (auto y : s->y) ++hist[y];
    for (auto c : hist) CHECK(c == s->size() / 10);
  }
  CHECK_THROWS_AS(synth_dataset(1, 20, {24, 16, 1}, 1), DomainError);
  CHECK_THROWS_AS(synth_dataset(3, 20, {24, 16, 2}, 1), DomainError);

  // Nearest class mean on raw pixels beats chance by a wide margin.
  const auto d = synth_dataset(10, 100, {24, 16, 1}, 9);
  std::vector<TensorF> mean(10, TensorF({24, 16, 1}, 0.0));
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    for (std::size_t k = 0; k < 384; ++k) mean[d.train.y[i]][k] += d.train.x[i][k] / 80.0;
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t c = 0; c < 10; ++c) {
      double dd = 0;
      for (std::size_t k = 0; k < 384; ++k) dd += std::pow(d.test.x[i][k] - mean[c][k], 2);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    hit += best == d.test.y[i];
  }
  CHECK(hit > d.test.size() * 2 / 10);
}

TEST_CASE("dataset file round trip") {
  SyntheticDataset d = synth_dataset(4, 10, {6, 5, 1}, (std::uint64_t{7} << 40) + 3);
  const auto path = std::filesystem::temp_directory_path() / "tinysed_dataset_rt.bin";
  save_dataset(path, d);
  const SyntheticDataset r = load_dataset(path);
  CHECK(r.classes == 4);
  CHECK(r.seed == d.seed);
  CHECK(r.patch_shape == d.patch_shape);
  CHECK(r.train.y == d.train.y);
  CHECK(r.test.y == d.test.y);
  REQUIRE(r.val.size() == d.val.size());
  for (std::size_t i = 0; i < r.val.size(); ++i) {
    for (std::size_t k = 0; k < r.val.x[i].size(); ++k) {
      CHECK(r.val.x[i][k] == static_cast<double>(static_cast<float>(d.val.x[i][k])));
    }
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset(path), DomainError);
}

TEST_CASE("sgd_train contracts") {
  const auto data = synth_dataset(3, 20, {6, 5, 1}, 3);
  const Model init = init_model(tiny_arch(3), 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  cfg.learning_rate = 0.0;
  CHECK(sgd_train(init, data, nullptr, {1, 0, 0}, cfg).model.weights == init.weights);

  cfg.learning_rate = 0.05;
  const TrainResult r1 = sgd_train(init, data, nullptr, {1, 0, 0}, cfg);
  const TrainResult r2 = sgd_train(init, data, nullptr, {1, 0, 0}, cfg);
  CHECK(r1.model.weights == r2.model.weights);
  CHECK_FALSE(r1.model.weights == init.weights);

  SyntheticDataset empty;
  CHECK_THROWS_AS(sgd_train(init, empty, nullptr, {1, 0, 0}, cfg), DomainError);
  CHECK_THROWS_AS(sgd_train(init, data, nullptr, {1, 1, 0}, cfg), DomainError);
}

TEST_CASE("full-batch loss decreases on a separable problem") {
  ModelArch a;
  a.name = "lin2";
  a.input_shape = {2, 2, 1};
  a.layers = {LayerSpec::flatten(), LayerSpec::dense("fc", 2), LayerSpec::softmax()};
  SyntheticDataset d;
  d.classes = 2;
  d.patch_shape = a.input_shape;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 40; ++i) {
    const double s = i % 2 == 0 ? 1.0 : -1.0;
    d.train.x.push_back(TensorF(a.input_shape, std::vector<double>{s + n(rng), n(rng), -s + n(rng), n(rng)}));
    d.train.y.push_back(static_cast<std::size_t>(i % 2));
  }
  d.val = d.train;
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 40;
  cfg.learning_rate = 0.1;
  cfg.patience = 100;
  const TrainResult r = sgd_train(init_model(a, 1), d, nullptr, {1, 0, 0}, cfg);
  REQUIRE(r.report.curve.size() == 40);
  for (std::size_t e = 1; e < r.report.curve.size(); ++e) {
    CHECK(r.report.curve[e].val_loss <= r.report.curve[e - 1].val_loss + 1e-12);
  }
  CHECK(accuracy(r.model, d.train) == 1.0);
}

TEST_CASE("distill runs every strategy on the toy presets") {
  const auto data = synth_dataset(10, 10, {24, 16, 1}, 1);
  const Model teacher = init_model(preset("toy_teacher"), 2);
  const Model teacher_copy = teacher;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.learning_rate = 0.01;
  for (Strategy s : {Strategy::Th, Strategy::Ths, Strategy::Thse, Strategy::Te}) {
    const DistillResult r = distill(teacher, preset("toy_student"), s, data, cfg);
    CHECK(r.stages.size() == (s == Strategy::Te ? 2u : 1u));
    CHECK(std::isfinite(r.stages.back().final_val_loss));
  }
  CHECK(teacher.weights == teacher_copy.weights);

  // Th is plain training without a teacher.
  const DistillResult th = distill(teacher, preset("toy_student"), Strategy::Th, data, cfg);
  const TrainResult plain = sgd_train(init_model(preset("toy_student"), 3), data, nullptr, {1, 0, 0}, cfg);
  CHECK(th.student.weights == plain.model.weights);

  // Te head stage leaves the backbone untouched.
  const DistillResult te = distill(teacher, preset("toy_student"), Strategy::Te, data, cfg);
  const TrainResult emb = sgd_train(init_model(preset("toy_student"), 3), data, &teacher, {0, 0, 1}, cfg);
  CHECK(te.student.weights.at("conv1/kernel") == emb.model.weights.at("conv1/kernel"));

  const TwoStageResult ts = two_stage_distill(teacher, preset("toy_teacher"), preset("toy_student"),
                                              strategy_weights(Strategy::Thse), data, cfg);
  CHECK_FALSE(ts.stage1.empty());
  CHECK_FALSE(ts.stage2.empty());
  CHECK(std::isfinite(ts.stage2.back().final_train_loss));

  const auto csv = std::filesystem::temp_directory_path() / "tinysed_curve.csv";
  write_curve_csv(csv, ts.stage1);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "stage,epoch,train_loss,val_loss,val_accuracy");
  std::filesystem::remove(csv);
}
