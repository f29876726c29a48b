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
#include <numbers>
#include <random>

#include "doctest.h"
#include "tinysed/fxp.hpp"
#include "tinysed/mel.hpp"

using namespace tinysed;

namespace {

std::vector<double> tone(double hz, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0);
  return x;
}

// Band centers from the mel formula directly.
std::vector<double> oracle_centers() {
  const double lo = 1127.0 * std::log(1.0 + 125.0 / 700.0);
  const double hi = 1127.0 * std::log(1.0 + 7500.0 / 700.0);
  std::vector<double> c;
  for (int i = 1; i <= 64; ++i) c.push_back(lo + (hi - lo) * i / 65.0);
  return c;  // mel units
}

}  // namespace

TEST_CASE("patch shapes") {
  for (std::size_t n : {61440u, 100u, 16000u, 90000u}) {
    const auto p = log_mel_patches(std::vector<double>(n, 0.1), 16000);
    REQUIRE(p.size() == 4);
    for (const auto& t : p) CHECK(t.shape() == Shape{96, 64, 1});
  }
  CHECK(MelConfig{}.frames_per_segment() == 96);
}

TEST_CASE("silence maps to log offset") {
  const auto p = log_mel_patches(std::vector<double>(61440, 0.0), 16000);
  for (const auto& t : p) {
    for (double v : t.values()) CHECK(v == doctest::Approx(std::log(0.01)).epsilon(1e-12));
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(log_mel_patches(std::vector<double>{}, 16000), DomainError);
  CHECK_THROWS_AS(log_mel_patches(std::vector<double>(100, 0.0), 44100), DomainError);
  CHECK_NOTHROW(log_mel_patches(std::vector<double>(100, 0.0), 44100, {}, true));
  MelConfig bad;
  bad.f_max = 9000.0;
  CHECK_THROWS_AS(mel_filterbank(bad), DomainError);
  bad = {};
  bad.f_min = 8000.0;
  CHECK_THROWS_AS(mel_filterbank(bad), DomainError);
}

TEST_CASE("filterbank structure") {
  const TensorF w = mel_filterbank();
  REQUIRE(w.shape() == Shape{257, 64});
  std::vector<std::pair<std::size_t, std::size_t>> support;
  for (std::size_t i = 0; i < 64; ++i) {
    std::size_t first = 257, last = 0, runs = 0;
    bool inside = false;
    for (std::size_t k = 0; k < 257; ++k) {
      const double v = w[k * 64 + i];
      CHECK(v >= 0.0);
      if (v > 0.0) {
        if (!inside) ++runs;
        inside = true;
        first = std::min(first, k);
        last = k;
      } else {
        inside = false;
      }
    }
    CHECK(runs == 1);
    support.emplace_back(first, last);
  }
  for (std::size_t i = 0; i + 1 < 64; ++i) {
    CHECK(support[i + 1].first <= support[i].second);
  }
  for (std::size_t k = 0; k < 257; ++k) {
    const double hz = k * 16000.0 / 512.0;
    if (hz > 125.0 && hz < 7500.0) continue;
    for (std::size_t i = 0; i < 64; ++i) CHECK(w[k * 64 + i] == 0.0);
  }
  const auto centers = mel_centers();
  const auto oc = oracle_centers();
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(hz_to_mel(centers[i]) == doctest::Approx(oc[i]).epsilon(1e-12));
  }
}

TEST_CASE("1 kHz tone peaks in the nearest band") {
  const auto oc = oracle_centers();
  const double m1k = 1127.0 * std::log(1.0 + 1000.0 / 700.0);
  std::size_t want = 0;
  for (std::size_t i = 1; i < 64; ++i) {
    if (std::abs(oc[i] - m1k) < std::abs(oc[want] - m1k)) want = i;
  }
  const auto p = log_mel_patches(tone(1000.0, 61440), 16000);
  for (const auto& t : p) {
    for (std::size_t f = 0; f < 96; ++f) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < 64; ++i) {
        if (t[f * 64 + i] > t[f * 64 + best]) best = i;
      }
      CHECK(best == want);
    }
  }
}

TEST_CASE("one-hop shift moves frames by one row") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 0.2);
  std::vector<double> x(61440);
  for (auto& v : x) v = n(rng);
  std::vector<double> shifted(160, 0.0);
  shifted.insert(shifted.end(), x.begin(), x.end() - 160);
  const auto a = log_mel_patches(x, 16000);
  const auto b = log_mel_patches(shifted, 16000);
  // Frames t whose windows stay inside the segment: 160 t + 400 <= 15360.
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t t = 1; t <= 93; ++t) {
      for (std::size_t i = 0; i < 64; ++i) {
        CHECK(std::abs(b[s][t * 64 + i] - a[s][(t - 1) * 64 + i]) < 1e-6);
      }
    }
  }
}

TEST_CASE("wav round trip and resampling") {
  const auto path = std::filesystem::temp_directory_path() / "tinysed_test_mel.wav";
  const auto x = tone(440.0, 8000, 0.25);
  write_wav(path.string(), x, 8000);
  const PcmClip c = read_wav(path.string());
  CHECK(c.sample_rate == 8000);
  REQUIRE(c.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(c.samples[i] - x[i]) < 1.0 / 16384);
  const auto up = resample_linear(c.samples, 8000, 16000);
  CHECK(up.size() == 16000);
  CHECK(up[2] == doctest::Approx(c.samples[1]));
  std::filesystem::remove(path);
}
