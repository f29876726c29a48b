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

#ifndef TINYSED_REF_EXEC_HPP_
#define TINYSED_REF_EXEC_HPP_

#include <span>
#include <vector>

#include "tinysed/kernels.hpp"
#include "tinysed/model.hpp"

namespace tinysed {

using kernels::conv2d;
using kernels::dense;
using kernels::maxpool2;

struct RecurrentParams {
  const TensorF& w_input;      // [in, gates*h]
  const TensorF& w_recurrent;  // [h, gates*h]
  const TensorF& bias;         // [gates*h]
};

// vanilla: h' = tanh(x Wx + h Wh + b)
// gru (gate blocks z, r, n): z = sig(.), r = sig(.),
//   n = tanh(x Wxn + (r*h) Whn + bn), h' = (1 - z) * n + z * h
TensorF recurrent_cell(const TensorF& x, const TensorF& h, const RecurrentParams& p,
                       RecurrentMode mode);

TensorF batchnorm(const TensorF& x, const TensorF& gamma, const TensorF& beta,
                  const TensorF& mean, const TensorF& var, Activation act);

TensorF softmax(const TensorF& logits);

struct ForwardTrace {
  TensorF logits;
  TensorF class_probs;
  // activations[layer][k]: output of `layer` for patch k (layers before the
  // recurrent one), for step k (the recurrent layer), or the single clip-level
  // output (layers after it). Empty when activations were not requested.
  std::vector<std::vector<TensorF>> activations;
  // Embedding-tap output, averaged over patches.
  TensorF embedding;
};

// Layers before the recurrent layer run per patch; the recurrent layer
// consumes the per-patch vectors in order and the head reads its final
// state. Models without a recurrent layer average per-patch logits.
ForwardTrace forward(const Model& m, std::span<const TensorF> patches,
                     bool keep_activations = true);
ForwardTrace forward(const Model& m, const TensorF& patch, bool keep_activations = true);

std::size_t argmax(const TensorF& v);

}  // namespace tinysed

#endif  // TINYSED_REF_EXEC_HPP_
