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

// OpenMP kernels against their serial references, and the int8 im2col
// convolution against direct loops.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tinysed/kernels.hpp"
#include "tinysed/qexec.hpp"
#include "tinysed/quant.hpp"
#include "tinysed/ref_exec.hpp"

using namespace tinysed;

namespace {

TensorF random_tensor(const Shape& s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  TensorF t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

TensorI8 random_codes(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-40, 40);
  TensorI8 t(s);
  for (auto& v : t.values()) v = static_cast<std::int8_t>(d(rng));
  return t;
}

// Conv layer of size range(0) x range(0)/1.5 with range(1) -> 2*range(1) channels.
struct ConvCase {
  TensorF x, k, b;
  explicit ConvCase(const benchmark::State& st) {
    const auto h = static_cast<std::size_t>(st.range(0));
    const auto c = static_cast<std::size_t>(st.range(1));
    x = random_tensor({h, h * 2 / 3, c}, 1);
    k = random_tensor({3, 3, c, 2 * c}, 2, 0.1);
    b = random_tensor({2 * c}, 3, 0.1);
  }
  double ops() const { return 2.0 * 9 * static_cast<double>(x.size() * k.shape()[3]); }
};

void BM_Conv2dParallel(benchmark::State& st) {
  const ConvCase c(st);
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::conv2d(c.x, c.k, c.b, Padding::Same, Activation::Relu));
  }
  st.counters["ops/s"] = benchmark::Counter(c.ops(), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_Conv2dSerial(benchmark::State& st) {
  const ConvCase c(st);
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::serial::conv2d(c.x, c.k, c.b, Padding::Same, Activation::Relu));
  }
  st.counters["ops/s"] = benchmark::Counter(c.ops(), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_Conv2dBackwardParallel(benchmark::State& st) {
  const ConvCase c(st);
  const TensorF dy = random_tensor({c.x.shape()[0], c.x.shape()[1], c.k.shape()[3]}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d_backward(c.x, c.k, dy, Padding::Same));
}

void BM_Conv2dBackwardSerial(benchmark::State& st) {
  const ConvCase c(st);
  const TensorF dy = random_tensor({c.x.shape()[0], c.x.shape()[1], c.k.shape()[3]}, 4);
  for (auto _ : st) {
    benchmark::DoNotOptimize(kernels::serial::conv2d_backward(c.x, c.k, dy, Padding::Same));
  }
}

void BM_DenseParallel(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const TensorF x = random_tensor({n}, 5), k = random_tensor({n, n}, 6), b = random_tensor({n}, 7);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::dense(x, k, b, Activation::Relu));
}

void BM_DenseSerial(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const TensorF x = random_tensor({n}, 5), k = random_tensor({n, n}, 6), b = random_tensor({n}, 7);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::dense(x, k, b, Activation::Relu));
}

void BM_MaxPoolParallel(benchmark::State& st) {
  const TensorF x = random_tensor({96, 64, static_cast<std::size_t>(st.range(0))}, 8);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::maxpool2(x));
}

void BM_MaxPoolSerial(benchmark::State& st) {
  const TensorF x = random_tensor({96, 64, static_cast<std::size_t>(st.range(0))}, 8);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::maxpool2(x));
}

struct QConvCase {
  Shape in;
  TensorI8 x, k, b;
  std::vector<std::int8_t> y;
  std::vector<std::int16_t> scratch;
  explicit QConvCase(const benchmark::State& st) {
    const auto h = static_cast<std::size_t>(st.range(0));
    const auto c = static_cast<std::size_t>(st.range(1));
    in = {h, h * 2 / 3, c};
    x = random_codes(in, 9);
    k = random_codes({3, 3, c, 2 * c}, 10);
    b = random_codes({2 * c}, 11);
    y.resize(h * (h * 2 / 3) * 2 * c);
    scratch.resize(2 * 9 * c);
  }
};

void BM_QConvIm2col(benchmark::State& st) {
  QConvCase c(st);
  for (auto _ : st) {
    qkernels::qconv2d(c.x.values().data(), c.in, c.k, c.b, Padding::Valid, {3, 8}, true, c.y.data(),
                      c.scratch.data());
    benchmark::ClobberMemory();
  }
}

void BM_QConvDirect(benchmark::State& st) {
  QConvCase c(st);
  for (auto _ : st) {
    qkernels::qconv2d_direct(c.x.values().data(), c.in, c.k, c.b, Padding::Valid, {3, 8}, true,
                             c.y.data());
    benchmark::ClobberMemory();
  }
}

// One 4-patch clip through M20k_int8, float and int8.
struct M20kCase {
  Model m;
  std::vector<TensorF> clip;
  QuantizedModel qm;
  std::vector<TensorI8> codes;
  M20kCase() {
    m = init_model(preset("M20k_int8"), 12);
    for (std::uint64_t k = 0; k < 4; ++k) clip.push_back(random_tensor(m.arch.input_shape, 13 + k));
    const std::vector<std::vector<TensorF>> clips{clip};
    qm = quantize_model(m, collect_stats(m, clips));
    codes = quantize_patches(qm, clip);
  }
};

void BM_M20kFloat(benchmark::State& st) {
  const M20kCase c;
  for (auto _ : st) benchmark::DoNotOptimize(forward(c.m, c.clip, false));
}

void BM_M20kInt8(benchmark::State& st) {
  const M20kCase c;
  InferenceContext ctx(c.qm.buffers);
  for (auto _ : st) benchmark::DoNotOptimize(qforward(c.qm, c.codes, ctx));
}

}  // namespace

BENCHMARK(BM_Conv2dParallel)->Args({96, 16})->Args({48, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dSerial)->Args({96, 16})->Args({48, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackwardParallel)->Args({48, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackwardSerial)->Args({48, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseParallel)->Arg(512)->Arg(2048)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseSerial)->Arg(512)->Arg(2048)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxPoolParallel)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxPoolSerial)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_QConvIm2col)->Args({96, 4})->Args({24, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_QConvDirect)->Args({96, 4})->Args({24, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_M20kFloat)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_M20kInt8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
