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

#ifndef TINYSED_KERNELS_HPP_
#define TINYSED_KERNELS_HPP_

#include "tinysed/model.hpp"
#include "tinysed/tensor.hpp"

// Float layer kernels. The functions in `tinysed::kernels` are the
// OpenMP-parallel versions used by the executors and the trainer; every
// output element is produced by exactly one thread with a fixed summation
// order, so results do not depend on the thread count.
// `tinysed::kernels::serial` holds straightforward loop-nest references used
// by the tests and the benchmark.
namespace tinysed::kernels {

// x: H,W,C; kernel: 3,3,C,F; bias: F. Cross-correlation, no kernel flip.
TensorF conv2d(const TensorF& x, const TensorF& kernel, const TensorF& bias,
               Padding padding, Activation act);
// 2x2 stride-2 max, ceil-mode (partial trailing windows).
TensorF maxpool2(const TensorF& x);
// x: any shape, treated as a flat vector of length kernel.dim(0).
TensorF dense(const TensorF& x, const TensorF& kernel, const TensorF& bias, Activation act);

void relu_inplace(TensorF& x);

struct ConvGrads {
  TensorF dx;
  TensorF dkernel;
  TensorF dbias;
};

// Gradients of a pre-activation conv given dL/dy (activation handled by the caller).
ConvGrads conv2d_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          Padding padding, bool need_dx = true);
TensorF maxpool2_backward(const TensorF& x, const TensorF& dy);

struct DenseGrads {
  TensorF dx;
  TensorF dkernel;
  TensorF dbias;
};
DenseGrads dense_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          bool need_dx = true);

namespace serial {
TensorF conv2d(const TensorF& x, const TensorF& kernel, const TensorF& bias,
               Padding padding, Activation act);
TensorF maxpool2(const TensorF& x);
TensorF dense(const TensorF& x, const TensorF& kernel, const TensorF& bias, Activation act);
ConvGrads conv2d_backward(const TensorF& x, const TensorF& kernel, const TensorF& dy,
                          Padding padding);
}  // namespace serial

}  // namespace tinysed::kernels

#endif  // TINYSED_KERNELS_HPP_
