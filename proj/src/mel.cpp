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

#include "tinysed/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "tinysed/fxp.hpp"
#include "tinysed/model_io.hpp"

namespace tinysed {
namespace {

constexpr double kMelBreak = 700.0;
constexpr double kMelScale = 1127.0;

// FFTW planning is not thread-safe; plans are created once per size and
// executed with the new-array interface from any thread.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, p);
  return p;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

void validate(const MelConfig& cfg) {
  if (cfg.sample_rate <= 0 || cfg.window == 0 || cfg.hop == 0 || cfg.n_mels == 0) {
    throw DomainError("mel: invalid configuration");
  }
  if (cfg.fft_size < cfg.window) throw DomainError("mel: fft size smaller than window");
  if (!(cfg.f_min >= 0.0 && cfg.f_min < cfg.f_max && cfg.f_max <= cfg.sample_rate / 2.0)) {
    throw DomainError("mel: invalid band edges");
  }
  if (cfg.end_pad >= cfg.segment || cfg.segment + cfg.end_pad < cfg.window) {
    throw DomainError("mel: invalid segment padding");
  }
}

std::vector<double> band_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.f_max);
  std::vector<double> e(cfg.n_mels + 2);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
  }
  return e;
}

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

double hz_to_mel(double hz) { return kMelScale * std::log1p(hz / kMelBreak); }
double mel_to_hz(double mel) { return kMelBreak * std::expm1(mel / kMelScale); }

std::vector<double> mel_centers(const MelConfig& cfg) {
  validate(cfg);
  const auto e = band_edges(cfg);
  std::vector<double> c(cfg.n_mels);
  for (std::size_t i = 0; i < cfg.n_mels; ++i) c[i] = mel_to_hz(e[i + 1]);
  return c;
}

TensorF mel_filterbank(const MelConfig& cfg) {
  validate(cfg);
  const auto e = band_edges(cfg);
  const std::size_t bins = cfg.spectrum_bins();
  TensorF w({bins, cfg.n_mels}, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    const double hz = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
    const double m = hz_to_mel(hz);
    for (std::size_t i = 0; i < cfg.n_mels; ++i) {
      const double up = (m - e[i]) / (e[i + 1] - e[i]);
      const double down = (e[i + 2] - m) / (e[i + 2] - e[i + 1]);
      w[k * cfg.n_mels + i] = std::max(0.0, std::min(up, down));
    }
  }
  return w;
}

std::vector<double> resample_linear(std::span<const double> pcm, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw DomainError("resample: invalid sample rate");
  if (pcm.empty() || from_rate == to_rate) return {pcm.begin(), pcm.end()};
  const double ratio = static_cast<double>(from_rate) / to_rate;
  const auto n = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(pcm.size()) / ratio)));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= pcm.size()) {
      out[i] = pcm.back();
    } else {
      const double f = pos - static_cast<double>(j);
      out[i] = pcm[j] * (1.0 - f) + pcm[j + 1] * f;
    }
  }
  return out;
}

PcmClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = le32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    if (pos + 8 + len > buf.size()) throw FormatError(path + ": truncated chunk");
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(path + ": short fmt chunk");
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(path + ": data before fmt");
      if (format != 1 || bits != 16 || channels == 0) {
        throw FormatError(path + ": only 16-bit PCM is supported");
      }
      const std::size_t frames = len / (2u * channels);
      PcmClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(le16(body + 2 * (i * channels + c))) / 32768.0;
        }
        clip.samples[i] = acc / channels;
      }
      return clip;
    }
    pos += 8 + len + (len & 1u);
  }
  throw FormatError(path + ": no data chunk");
}

void write_wav(const std::string& path, std::span<const double> samples, int sample_rate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path + "'");
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
  };
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put32(36 + data_len);
  f.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  f.write("data", 4);
  put32(data_len);
  for (double s : samples) {
    const long v = std::lround(std::clamp(s, -1.0, 1.0) * 32767.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!f) throw FormatError("write failed for '" + path + "'");
}

std::vector<TensorF> log_mel_patches(std::span<const double> pcm, int sample_rate,
                                     const MelConfig& cfg, bool resample) {
  validate(cfg);
  if (pcm.empty()) throw DomainError("log_mel_patches: empty input");
  std::vector<double> clip;
  if (sample_rate != cfg.sample_rate) {
    if (!resample) {
      throw DomainError("log_mel_patches: sample rate " + std::to_string(sample_rate) +
                        " Hz unsupported (expected " + std::to_string(cfg.sample_rate) +
                        "; enable resampling)");
    }
    clip = resample_linear(pcm, sample_rate, cfg.sample_rate);
  } else {
    clip.assign(pcm.begin(), pcm.end());
  }
  clip.resize(cfg.clip_samples(), 0.0);

  const TensorF fb = mel_filterbank(cfg);
  const std::size_t bins = cfg.spectrum_bins();
  const std::size_t frames = cfg.frames_per_segment();
  std::vector<double> hann(cfg.window);
  for (std::size_t n = 0; n < cfg.window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                   static_cast<double>(cfg.window));
  }
  const fftw_plan plan = r2c_plan(cfg.fft_size);

  std::vector<TensorF> patches(cfg.segments);
#pragma omp parallel for schedule(static)
  for (std::size_t s = 0; s < cfg.segments; ++s) {
    const double* seg = clip.data() + s * cfg.segment;
    std::vector<double> padded(seg, seg + cfg.segment);
    for (std::size_t k = 0; k < cfg.end_pad; ++k) padded.push_back(seg[cfg.segment - 2 - k]);

    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(cfg.fft_size));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins));
    std::vector<double> mag(bins);
    TensorF patch({frames, cfg.n_mels, 1});
    for (std::size_t t = 0; t < frames; ++t) {
      double* x = in.get();
      std::fill(x, x + cfg.fft_size, 0.0);
      for (std::size_t n = 0; n < cfg.window; ++n) x[n] = padded[t * cfg.hop + n] * hann[n];
      fftw_execute_dft_r2c(plan, x, out.get());
      for (std::size_t k = 0; k < bins; ++k) mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
      for (std::size_t i = 0; i < cfg.n_mels; ++i) {
        double e = 0.0;
        for (std::size_t k = 0; k < bins; ++k) e += mag[k] * fb[k * cfg.n_mels + i];
        patch[t * cfg.n_mels + i] = std::log(e + cfg.log_offset);
      }
    }
    patches[s] = std::move(patch);
  }
  return patches;
}

}  // namespace tinysed
