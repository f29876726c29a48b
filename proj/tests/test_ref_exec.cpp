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
#include <random>

#include "doctest.h"
#include "tinysed/kernels.hpp"
#include "tinysed/ref_exec.hpp"

using namespace tinysed;

namespace {

TensorF random_tensor(const Shape& s, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  TensorF t(s);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

double max_abs_diff(const TensorF& a, const TensorF& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d") {
  std::mt19937_64 rng(1);
  SUBCASE("centre-one kernel crops the border") {
    const TensorF x = random_tensor({6, 5, 1}, rng);
    TensorF k({3, 3, 1, 1}, 0.0);
    k[4] = 1.0;
    const TensorF y = conv2d(x, k, TensorF({1}, 0.0), Padding::Valid, Activation::None);
    REQUIRE(y.shape() == Shape{4, 3, 1});
    for (std::size_t h = 0; h < 4; ++h) {
      for (std::size_t w = 0; w < 3; ++w) CHECK(y.at(h, w, 0) == x.at(h + 1, w + 1, 0));
    }
  }
  SUBCASE("all ones") {
    const TensorF y = conv2d(TensorF({5, 5, 1}, 1.0), TensorF({3, 3, 1, 1}, 1.0), TensorF({1}, 0.0),
                             Padding::Valid, Activation::None);
    for (double v : y.values()) CHECK(v == 9.0);
  }
  SUBCASE("same-padding interior equals valid output") {
    const TensorF x = random_tensor({9, 7, 3}, rng);
    const TensorF k = random_tensor({3, 3, 3, 4}, rng);
    const TensorF b = random_tensor({4}, rng);
    const TensorF same = conv2d(x, k, b, Padding::Same, Activation::None);
    const TensorF valid = conv2d(x, k, b, Padding::Valid, Activation::None);
    for (std::size_t h = 0; h < valid.dim(0); ++h) {
      for (std::size_t w = 0; w < valid.dim(1); ++w) {
        for (std::size_t c = 0; c < 4; ++c) CHECK(same.at(h + 1, w + 1, c) == valid.at(h, w, c));
      }
    }
  }
  SUBCASE("parallel kernel matches the serial reference") {
    for (Padding p : {Padding::Valid, Padding::Same}) {
      const TensorF x = random_tensor({13, 11, 5}, rng);
      const TensorF k = random_tensor({3, 3, 5, 8}, rng);
      const TensorF b = random_tensor({8}, rng);
      CHECK(max_abs_diff(conv2d(x, k, b, p, Activation::Relu),
                         kernels::serial::conv2d(x, k, b, p, Activation::Relu)) < 1e-12);
      const TensorF dy = random_tensor(conv2d(x, k, b, p, Activation::None).shape(), rng);
      const auto g = kernels::conv2d_backward(x, k, dy, p);
      const auto r = kernels::serial::conv2d_backward(x, k, dy, p);
      CHECK(max_abs_diff(g.dx, r.dx) < 1e-12);
      CHECK(max_abs_diff(g.dkernel, r.dkernel) < 1e-11);
      CHECK(max_abs_diff(g.dbias, r.dbias) < 1e-12);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(conv2d(TensorF({5, 5, 2}), TensorF({3, 3, 1, 1}), TensorF({1}), Padding::Valid,
                           Activation::None),
                    DomainError);
  }
}

TEST_CASE("maxpool2") {
  std::mt19937_64 rng(2);
  const TensorF c = maxpool2(TensorF({5, 3, 2}, 0.25));
  CHECK(c.shape() == Shape{3, 2, 2});
  for (double v : c.values()) CHECK(v == 0.25);
  CHECK(maxpool2(TensorF({45, 29, 1})).shape() == Shape{23, 15, 1});

  const TensorF x = random_tensor({8, 8, 3}, rng);
  const TensorF y = maxpool2(x);
  for (std::size_t h = 0; h < 4; ++h) {
    for (std::size_t w = 0; w < 4; ++w) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double m = std::max({x.at(2 * h, 2 * w, ch), x.at(2 * h + 1, 2 * w, ch),
                                   x.at(2 * h, 2 * w + 1, ch), x.at(2 * h + 1, 2 * w + 1, ch)});
        CHECK(y.at(h, w, ch) == m);
      }
    }
  }
  const TensorF odd = random_tensor({7, 9, 2}, rng);
  CHECK(maxpool2(odd) == kernels::serial::maxpool2(odd));
}

TEST_CASE("dense and recurrent cells") {
  std::mt19937_64 rng(3);
  SUBCASE("identity dense") {
    const TensorF x = random_tensor({6}, rng);
    TensorF w({6, 6}, 0.0);
    for (std::size_t i = 0; i < 6; ++i) w[i * 6 + i] = 1.0;
    CHECK(dense(x, w, TensorF({6}, 0.0), Activation::None) == x);
  }
  SUBCASE("parallel dense matches serial") {
    const TensorF x = random_tensor({70}, rng);
    const TensorF w = random_tensor({70, 45}, rng);
    const TensorF b = random_tensor({45}, rng);
    CHECK(max_abs_diff(dense(x, w, b, Activation::Relu),
                       kernels::serial::dense(x, w, b, Activation::Relu)) < 1e-12);
  }
  SUBCASE("gru with zero parameters halves the state") {
    const TensorF wi({4, 9}, 0.0), wr({3, 9}, 0.0), b({9}, 0.0);
    const TensorF h = random_tensor({3}, rng);
    const TensorF out = recurrent_cell(random_tensor({4}, rng), h, {wi, wr, b}, RecurrentMode::Gru);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out[j] == doctest::Approx(0.5 * h[j]));
  }
  SUBCASE("vanilla cell matches a scalar-loop oracle exactly") {
    const TensorF x = random_tensor({4}, rng), h = random_tensor({4}, rng);
    const TensorF wi = random_tensor({4, 4}, rng), wr = random_tensor({4, 4}, rng),
                  b = random_tensor({4}, rng);
    const TensorF out = recurrent_cell(x, h, {wi, wr, b}, RecurrentMode::VanillaTanh);
    for (std::size_t j = 0; j < 4; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < 4; ++k) s += x[k] * wi[k * 4 + j];
      for (std::size_t k = 0; k < 4; ++k) s += h[k] * wr[k * 4 + j];
      CHECK(out[j] == std::tanh(s));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(recurrent_cell(TensorF({4}), TensorF({3}),
                                   {TensorF({5, 3}), TensorF({3, 3}), TensorF({3})},
                                   RecurrentMode::VanillaTanh),
                    DomainError);
  }
}

TEST_CASE("forward") {
  std::mt19937_64 rng(4);
  SUBCASE("toy feedforward: probabilities sum to one and are positive") {
    const Model m = init_model(preset("toy_teacher"), 1);
    const auto t = forward(m, random_tensor({24, 16, 1}, rng));
    double s = 0.0;
    for (double p : t.class_probs.values()) {
      CHECK(p > 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(t.embedding.shape() == Shape{32});
  }
  SUBCASE("zero recurrent weights: logits come from the bias path only") {
    Model m = init_model(preset("M20k_int8"), 2);
    for (auto key : {"rnn/w_input", "rnn/w_recurrent", "rnn/bias"}) {
      auto& t = m.weights.at(key);
      std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    const TensorF p = random_tensor({96, 64, 1}, rng);
    const std::vector<TensorF> clip(4, p);
    const auto t = forward(m, clip);
    const TensorF& b = m.weights.at("fc3/bias");
    for (std::size_t k = 0; k < 10; ++k) CHECK(t.logits[k] == b[k]);
  }
  SUBCASE("activation shapes follow the shape trace") {
    for (const char* name : {"M2M", "M200k", "M20k", "M20k_int8", "toy_teacher", "toy_student"}) {
      const Model m = init_model(preset(name), 3);
      const auto trace = shape_trace(m.arch);
      std::vector<TensorF> clip;
      for (std::size_t i = 0; i < (m.arch.recurrent_index() ? 4u : 1u); ++i) {
        clip.push_back(random_tensor(m.arch.input_shape, rng));
      }
      const auto t = forward(m, clip);
      for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
        REQUIRE_FALSE(t.activations[i].empty());
        for (const auto& a : t.activations[i]) CHECK(a.shape() == trace[i].output);
      }
    }
  }
  SUBCASE("deterministic") {
    const Model m = init_model(preset("M20k"), 5);
    const std::vector<TensorF> clip = {random_tensor({96, 64, 1}, rng), random_tensor({96, 64, 1}, rng)};
    const auto a = forward(m, clip, false);
    const auto b = forward(m, clip, false);
    CHECK(a.logits == b.logits);
    CHECK(a.class_probs == b.class_probs);
  }
  SUBCASE("shape mismatch") {
    const Model m = init_model(preset("toy_student"), 1);
    CHECK_THROWS_AS(forward(m, TensorF({96, 64, 1})), DomainError);
  }
}
