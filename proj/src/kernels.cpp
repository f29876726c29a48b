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

#include "tinysed/kernels.hpp"

#include <algorithm>
#include <vector>

namespace tinysed::kernels {
namespace {

struct ConvGeometry {
  long in_h, in_w, in_c, out_h, out_w, out_c, pad;
};

ConvGeometry conv_geometry(const TensorF& x, const TensorF& kernel, Padding padding) {
  if (x.rank() != 3 || kernel.rank() != 4 || kernel.dim(0) != 3 || kernel.dim(1) != 3 ||
      kernel.dim(2) != x.dim(2)) {
    throw DomainError("conv2d: shape mismatch between input " + shape_to_string(x.shape()) +
                      " and kernel " + shape_to_string(kernel.shape()));
  }
  ConvGeometry g{};
  g.in_h = static_cast<long>(x.dim(0));
  g.in_w = static_cast<long>(x.dim(1));
  g.in_c = static_cast<long>(x.dim(2));
  g.out_c = static_cast<long>(kernel.dim(3));
  g.pad = padding == Padding::Same ? 1 : 0;
  g.out_h = g.in_h - 2 + 2 * g.pad;
  g.out_w = g.in_w - 2 + 2 * g.pad;
  if (g.out_h <= 0 || g.out_w <= 0) throw DomainError("conv2d: input smaller than kernel");
  return g;
}

void check_bias(const TensorF& bias, std::size_t units, const char* who) {
  if (bias.size() != units) throw DomainError(std::string(who) + ": bias length mismatch");
}

}  // namespace

void relu_inplace(TensorF& x) {
  for (auto& v : x.values()) v = std::max(v, 0.0);
}

TensorF conv2d(const TensorF& x, const TensorF& kernel, const TensorF& bias,
               Padding padding, Activation act) {
  const ConvGeometry g = conv_geometry(x, kernel, padding);
  check_bias(bias, static_cast<std::size_t>(g.out_c), "conv2d");
  TensorF y({static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
             static_cast<std::size_t>(g.out_c)});
  const double* xp = x.data();
  const double* kp = kernel.data();
  double* yp = y.data();
  const bool relu = act == Activation::Relu;

#pragma omp parallel for schedule(static)
  for (long oh = 0; oh < g.out_h; ++oh) {
    for (long ow = 0; ow < g.out_w; ++ow) {
      double* acc = yp + (oh * g.out_w + ow) * g.out_c;
      std::copy(bias.data(), bias.data() + g.out_c, acc);
      for (long kh = 0; kh < 3; ++kh) {
        const long ih = oh + kh - g.pad;
        if (ih < 0 || ih >= g.in_h) continue;
        for (long kw = 0; kw < 3; ++kw) {
          const long iw = ow + kw - g.pad;
          if (iw < 0 || iw >= g.in_w) continue;
          const double* xpix = xp + (ih * g.in_w + iw) * g.in_c;
          const double* krow = kp + (kh * 3 + kw) * g.in_c * g.out_c;
          for (long c = 0; c < g.in_c; ++c) {
            const double xv = xpix[c];
            const double* kf = krow + c * g.out_c;
            for (long f = 0; f < g.out_c; ++f) acc[f] += xv * kf[f];
          }
        }
      }
      if (relu) {
        for (long f = 0; f < g.out_c; ++f) acc[f] = std::max(acc[f], 0.0);
      }
    }
  }
  return y;
}

TensorF maxpool2(const TensorF& x) {
  if (x.rank() != 3) throw DomainError("maxpool2: expected an H,W,C tensor");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh_n = (h + 1) / 2, ow_n = (w + 1) / 2;
  TensorF y({oh_n, ow_n, c});
#pragma omp parallel for schedule(static)
  for (long oh = 0; oh < static_cast<long>(oh_n); ++oh) {
    const std::size_t h0 = 2 * static_cast<std::size_t>(oh);
    const std::size_t h1 = std::min(h0 + 2, h);
    for (std::size_t ow = 0; ow < ow_n; ++ow) {
      const std::size_t w0 = 2 * ow, w1 = std::min(w0 + 2, w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double m = x.at(h0, w0, ch);
        for (std::size_t ih = h0; ih < h1; ++ih) {
          for (std::size_t iw = w0; iw < w1; ++iw) m = std::max(m, x.at(ih, iw, ch));
        }
        y.at(static_cast<std::size_t>(oh), ow, ch) = m;
      }
    }
  }
  return y;
}

TensorF dense(const TensorF& x, const TensorF& kernel, const TensorF& bias, Activation act) {
  if (kernel.rank() != 2 || kernel.dim(0) != x.size()) {
    throw DomainError("dense: input length " + std::to_string(x.size()) +
                      " does not match kernel " + shape_to_string(kernel.shape()));
  }
  const long in = static_cast<long>(kernel.dim(0));
  const long out = static_cast<long>(kernel.dim(1));
  check_bias(bias, static_cast<std::size_t>(out), "dense");
  TensorF y({static_cast<std::size_t>(out)});
  constexpr long kBlock = 32;
  const long blocks = (out + kBlock - 1) / kBlock;
  const bool relu = act == Activation::Relu;
#pragma omp parallel for schedule(static)
  for (long b = 0; b < blocks; ++b) {
    const long u0 = b * kBlock, u1 = std::min(out, u0 + kBlock);
    double* acc = y.data() + u0;
    std::copy(bias.data() + u0, bias.data() + u1, acc);
    for (long k = 0; k < in; ++k) {
      const double xv = x[static_cast<std::size_t>(k)];
      const double* row = kernel.data() + k * out;
      for (long u = u0; u < u1; ++u) acc[u - u0] += xv * row[u];
    }
    if (relu) {
      for (long u = u0; u < u1; ++u) acc[u - u0] = std::max(acc[u - u0], 0.0);
    }
  }
  return y;
}

ConvGrads conv2d_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          Padding padding, bool need_dx) {
  const ConvGeometry g = conv_geometry(x, kernel, padding);
  if (dy.shape() != Shape{static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
                          static_cast<std::size_t>(g.out_c)}) {
    throw DomainError("conv2d_backward: dy shape mismatch");
  }
  ConvGrads gr{TensorF(x.shape()), TensorF(kernel.shape()), TensorF({kernel.dim(3)})};
  const double* dyp = dy.data();

  for (long oh = 0; oh < g.out_h; ++oh) {
    for (long ow = 0; ow < g.out_w; ++ow) {
      const double* d = dyp + (oh * g.out_w + ow) * g.out_c;
      for (long f = 0; f < g.out_c; ++f) gr.dbias[static_cast<std::size_t>(f)] += d[f];
    }
  }

  // One (kh, kw, c) kernel row per iteration.
  const long rows = 9 * g.in_c;
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const long kh = r / (3 * g.in_c);
    const long kw = (r / g.in_c) % 3;
    const long c = r % g.in_c;
    double* dk = gr.dkernel.data() + r * g.out_c;
    for (long oh = 0; oh < g.out_h; ++oh) {
      const long ih = oh + kh - g.pad;
      if (ih < 0 || ih >= g.in_h) continue;
      for (long ow = 0; ow < g.out_w; ++ow) {
        const long iw = ow + kw - g.pad;
        if (iw < 0 || iw >= g.in_w) continue;
        const double xv = x.data()[(ih * g.in_w + iw) * g.in_c + c];
        const double* d = dyp + (oh * g.out_w + ow) * g.out_c;
        for (long f = 0; f < g.out_c; ++f) dk[f] += xv * d[f];
      }
    }
  }

  if (need_dx) {
#pragma omp parallel for schedule(static)
    for (long ih = 0; ih < g.in_h; ++ih) {
      for (long iw = 0; iw < g.in_w; ++iw) {
        double* dxp = gr.dx.data() + (ih * g.in_w + iw) * g.in_c;
        for (long kh = 0; kh < 3; ++kh) {
          const long oh = ih - kh + g.pad;
          if (oh < 0 || oh >= g.out_h) continue;
          for (long kw = 0; kw < 3; ++kw) {
            const long ow = iw - kw + g.pad;
            if (ow < 0 || ow >= g.out_w) continue;
            const double* d = dyp + (oh * g.out_w + ow) * g.out_c;
            const double* krow = kernel.data() + (kh * 3 + kw) * g.in_c * g.out_c;
            for (long c = 0; c < g.in_c; ++c) {
              const double* kf = krow + c * g.out_c;
              double s = 0.0;
              for (long f = 0; f < g.out_c; ++f) s += kf[f] * d[f];
              dxp[c] += s;
            }
          }
        }
      }
    }
  }
  return gr;
}

TensorF maxpool2_backward(const TensorF& x, const TensorF& dy) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  TensorF dx(x.shape());
  for (std::size_t oh = 0; oh < dy.dim(0); ++oh) {
    const std::size_t h0 = 2 * oh, h1 = std::min(h0 + 2, h);
    for (std::size_t ow = 0; ow < dy.dim(1); ++ow) {
      const std::size_t w0 = 2 * ow, w1 = std::min(w0 + 2, w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t bh = h0, bw = w0;
        for (std::size_t ih = h0; ih < h1; ++ih) {
          for (std::size_t iw = w0; iw < w1; ++iw) {
            if (x.at(ih, iw, ch) > x.at(bh, bw, ch)) {
              bh = ih;
              bw = iw;
            }
          }
        }
        dx.at(bh, bw, ch) += dy.at(oh, ow, ch);
      }
    }
  }
  return dx;
}

DenseGrads dense_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          bool need_dx) {
  const long in = static_cast<long>(kernel.dim(0));
  const long out = static_cast<long>(kernel.dim(1));
  DenseGrads gr{TensorF(x.shape()), TensorF(kernel.shape()), dy};
  gr.dbias.reshape({static_cast<std::size_t>(out)});
#pragma omp parallel for schedule(static)
  for (long k = 0; k < in; ++k) {
    const double xv = x[static_cast<std::size_t>(k)];
    const double* row = kernel.data() + k * out;
    double* drow = gr.dkernel.data() + k * out;
    double s = 0.0;
    for (long u = 0; u < out; ++u) {
      drow[u] = xv * dy[static_cast<std::size_t>(u)];
      s += row[u] * dy[static_cast<std::size_t>(u)];
    }
    if (need_dx) gr.dx[static_cast<std::size_t>(k)] = s;
  }
  return gr;
}

namespace serial {

TensorF conv2d(const TensorF& x, const TensorF& kernel, const TensorF& bias,
               Padding padding, Activation act) {
  const ConvGeometry g = conv_geometry(x, kernel, padding);
  check_bias(bias, static_cast<std::size_t>(g.out_c), "conv2d");
  TensorF y({static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
             static_cast<std::size_t>(g.out_c)});
  for (long f = 0; f < g.out_c; ++f) {
    for (long oh = 0; oh < g.out_h; ++oh) {
      for (long ow = 0; ow < g.out_w; ++ow) {
        double s = bias[static_cast<std::size_t>(f)];
        for (long kh = 0; kh < 3; ++kh) {
          for (long kw = 0; kw < 3; ++kw) {
            const long ih = oh + kh - g.pad, iw = ow + kw - g.pad;
            if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
            for (long c = 0; c < g.in_c; ++c) {
              s += x.data()[(ih * g.in_w + iw) * g.in_c + c] *
                   kernel.data()[((kh * 3 + kw) * g.in_c + c) * g.out_c + f];
            }
          }
        }
        if (act == Activation::Relu && s < 0.0) s = 0.0;
        y.data()[(oh * g.out_w + ow) * g.out_c + f] = s;
      }
    }
  }
  return y;
}

TensorF maxpool2(const TensorF& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  TensorF y({(h + 1) / 2, (w + 1) / 2, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oh = 0; oh < y.dim(0); ++oh) {
      for (std::size_t ow = 0; ow < y.dim(1); ++ow) {
        double m = x.at(2 * oh, 2 * ow, ch);
        if (2 * oh + 1 < h) m = std::max(m, x.at(2 * oh + 1, 2 * ow, ch));
        if (2 * ow + 1 < w) m = std::max(m, x.at(2 * oh, 2 * ow + 1, ch));
        if (2 * oh + 1 < h && 2 * ow + 1 < w) m = std::max(m, x.at(2 * oh + 1, 2 * ow + 1, ch));
        y.at(oh, ow, ch) = m;
      }
    }
  }
  return y;
}

TensorF dense(const TensorF& x, const TensorF& kernel, const TensorF& bias, Activation act) {
  const std::size_t in = kernel.dim(0), out = kernel.dim(1);
  if (x.size() != in) throw DomainError("dense: input length mismatch");
  TensorF y({out});
  for (std::size_t u = 0; u < out; ++u) {
    double s = bias[u];
    for (std::size_t k = 0; k < in; ++k) s += x[k] * kernel[k * out + u];
    y[u] = (act == Activation::Relu && s < 0.0) ? 0.0 : s;
  }
  return y;
}

ConvGrads conv2d_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          Padding padding) {
  const ConvGeometry g = conv_geometry(x, kernel, padding);
  ConvGrads gr{TensorF(x.shape()), TensorF(kernel.shape()), TensorF({kernel.dim(3)})};
  for (long oh = 0; oh < g.out_h; ++oh) {
    for (long ow = 0; ow < g.out_w; ++ow) {
      for (long f = 0; f < g.out_c; ++f) {
        const double d = dy.data()[(oh * g.out_w + ow) * g.out_c + f];
        gr.dbias[static_cast<std::size_t>(f)] += d;
        for (long kh = 0; kh < 3; ++kh) {
          for (long kw = 0; kw < 3; ++kw) {
            const long ih = oh + kh - g.pad, iw = ow + kw - g.pad;
            if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
            for (long c = 0; c < g.in_c; ++c) {
              const long xi = (ih * g.in_w + iw) * g.in_c + c;
              const long ki = ((kh * 3 + kw) * g.in_c + c) * g.out_c + f;
              gr.dkernel.data()[ki] += x.data()[xi] * d;
              gr.dx.data()[xi] += kernel.data()[ki] * d;
            }
          }
        }
      }
    }
  }
  return gr;
}

}  // namespace serial
}  // namespace tinysed::kernels
