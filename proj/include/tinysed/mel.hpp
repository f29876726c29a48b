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

#ifndef TINYSED_MEL_HPP_
#define TINYSED_MEL_HPP_

#include <span>
#include <string>
#include <vector>

#include "tinysed/tensor.hpp"

namespace tinysed {

struct MelConfig {
  int sample_rate = 16000;
  std::size_t window = 400;  // Hann
  std::size_t hop = 160;
  std::size_t fft_size = 512;
  std::size_t n_mels = 64;
  double f_min = 125.0;
  double f_max = 7500.0;
  std::size_t segment = 15360;  // 960 ms
  std::size_t segments = 4;
  std::size_t end_pad = 240;    // reflection, so (15360 + 240 - 400) / 160 + 1 = 96
  double log_offset = 0.01;

  std::size_t frames_per_segment() const { return (segment + end_pad - window) / hop + 1; }
  std::size_t clip_samples() const { return segment * segments; }
  std::size_t spectrum_bins() const { return fft_size / 2 + 1; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Center frequency (Hz) of each band.
std::vector<double> mel_centers(const MelConfig& cfg = {});

// [spectrum_bins, n_mels] triangular weights.
TensorF mel_filterbank(const MelConfig& cfg = {});

// Linear interpolation.
std::vector<double> resample_linear(std::span<const double> pcm, int from_rate, int to_rate);

struct PcmClip {
  std::vector<double> samples;  // [-1, 1], mono
  int sample_rate = 0;
};

// 16-bit PCM RIFF/WAVE; multi-channel input is averaged to mono.
PcmClip read_wav(const std::string& path);
void write_wav(const std::string& path, std::span<const double> samples, int sample_rate);

// Pads or crops to cfg.clip_samples() and returns cfg.segments patches of
// [frames_per_segment, n_mels, 1]. A rate other than cfg.sample_rate is an
// error unless `resample` is set.
std::vector<TensorF> log_mel_patches(std::span<const double> pcm, int sample_rate,
                                     const MelConfig& cfg = {}, bool resample = false);

}  // namespace tinysed

#endif  // TINYSED_MEL_HPP_
