// Copyright (c) 2026 The kwshand Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Layer hyperparameters, parameter storage and the per-layer forward and
// backward kernels. The kernels are free functions so each one can be checked
// against finite differences in isolation.

#ifndef KWS_LAYERS_H_
#define KWS_LAYERS_H_

#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "kws/tensor.h"

namespace kws {

// Spans whose element type does not take part in template deduction, so
// vectors and spans of T both bind.
template <typename T>
using ConstSpan = std::span<const std::type_identity_t<T>>;
template <typename T>
using MutSpan = std::span<std::type_identity_t<T>>;

enum class Activation { kNone, kRelu, kSoftmax };
enum class Mode { kTrain, kInfer };

struct ConvSpec {
  std::size_t filters = 0;
  std::size_t filter_h = 0;
  std::size_t filter_w = 0;
  Activation activation = Activation::kRelu;
  bool operator==(const ConvSpec&) const = default;
};

// Non-overlapping: stride equals the pool size.
struct PoolSpec {
  std::size_t pool_h = 0;
  std::size_t pool_w = 0;
  bool operator==(const PoolSpec&) const = default;
};

struct BatchNormSpec {
  double epsilon = 1e-3;
  double momentum = 0.99;
  bool operator==(const BatchNormSpec&) const = default;
};

struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};

struct DenseSpec {
  std::size_t units = 0;
  Activation activation = Activation::kNone;
  bool operator==(const DenseSpec&) const = default;
};

struct DropoutSpec {
  double rate = 0.5;
  bool operator==(const DropoutSpec&) const = default;
};

// Weights are (filter_h, filter_w, in_channels, out_channels), last fastest.
template <typename T>
struct ConvLayer {
  ConvSpec spec;
  std::size_t in_channels = 0;
  std::vector<T> weights;
  std::vector<T> biases;

  std::size_t weight_index(std::size_t a, std::size_t b, std::size_t c,
                           std::size_t o) const {
    return ((a * spec.filter_w + b) * in_channels + c) * spec.filters + o;
  }
};

template <typename T>
struct BatchNormLayer {
  BatchNormSpec spec;
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> moving_mean;
  std::vector<T> moving_var;

  std::size_t channels() const { return gamma.size(); }
};

// Weights are (in_dim, out_dim), out fastest; out = W^T x + b.
template <typename T>
struct DenseLayer {
  DenseSpec spec;
  std::size_t in_dim = 0;
  std::vector<T> weights;
  std::vector<T> biases;
};

// ---- convolution ----------------------------------------------------------

// Valid cross-correlation, stride 1, no activation.
template <typename T>
Tensor3<T> Conv2dPreActivation(const Tensor3<T>& input, const ConvLayer<T>& layer);

// Pre-activation followed by the layer's activation (ReLU or none).
template <typename T>
Tensor3<T> Conv2dForward(const Tensor3<T>& input, const ConvLayer<T>& layer);

// grad_pre is the gradient w.r.t. the pre-activation. Weight and bias
// gradients are accumulated into the given buffers; grad_input may be null.
template <typename T>
void Conv2dBackward(const Tensor3<T>& input, const ConvLayer<T>& layer,
                    const Tensor3<T>& grad_pre, std::span<T> grad_weights,
                    std::span<T> grad_biases, Tensor3<T>* grad_input);

// ---- max pooling ----------------------------------------------------------

template <typename T>
struct PoolResult {
  Tensor3<T> output;
  // Flat input offset of the winning element, one per output element.
  std::vector<std::size_t> argmax;
};

// Trailing rows/columns that do not fill a window are dropped. Ties go to the
// first element in row-major window order.
template <typename T>
PoolResult<T> MaxPoolForward(const Tensor3<T>& input, const PoolSpec& spec);

template <typename T>
Tensor3<T> MaxPoolBackward(const Tensor3<T>& grad_output,
                           std::span<const std::size_t> argmax,
                           const Shape3& input_shape);

// ---- batch normalization --------------------------------------------------

template <typename T>
struct BatchNormCache {
  Batch<T> normalized;      // x_hat
  std::vector<T> inv_std;   // per channel, 1/sqrt(var + eps)
  std::vector<T> batch_mean;
  std::vector<T> batch_var;  // biased
};

template <typename T>
Batch<T> BatchNormInfer(const Batch<T>& input, const BatchNormLayer<T>& layer);

// Normalizes with batch statistics. When update_moving_stats is set the
// layer's moving statistics move toward the batch statistics.
template <typename T>
Batch<T> BatchNormTrain(const Batch<T>& input, BatchNormLayer<T>& layer,
                        BatchNormCache<T>* cache, bool update_moving_stats = true);

template <typename T>
Batch<T> BatchNormForward(const Batch<T>& input, BatchNormLayer<T>& layer,
                          Mode mode);

template <typename T>
Batch<T> BatchNormBackward(const Batch<T>& grad_output,
                           const BatchNormLayer<T>& layer,
                           const BatchNormCache<T>& cache,
                           std::span<T> grad_gamma, std::span<T> grad_beta);

// ---- dense, softmax, dropout ---------------------------------------------

template <typename T>
std::vector<T> DensePreActivation(ConstSpan<T> input,
                                  const DenseLayer<T>& layer);

template <typename T>
std::vector<T> DenseForward(ConstSpan<T> input, const DenseLayer<T>& layer,
                            Activation activation);

template <typename T>
void DenseBackward(ConstSpan<T> input, const DenseLayer<T>& layer,
                   ConstSpan<T> grad_pre, MutSpan<T> grad_weights,
                   MutSpan<T> grad_biases, MutSpan<T> grad_input);

template <typename T>
std::vector<T> Softmax(std::span<const T> logits);

template <typename T>
void ReluInPlace(std::span<T> values);

template <typename T>
struct DropoutResult {
  std::vector<T> output;
  std::vector<std::uint8_t> mask;  // 1 = kept
};

// Inverted dropout; infer mode is the identity with an all-ones mask.
template <typename T>
DropoutResult<T> DropoutForward(std::span<const T> input, double rate, Mode mode,
                                std::uint64_t seed);

template <typename T>
std::vector<T> DropoutBackward(std::span<const T> grad_output,
                               std::span<const std::uint8_t> mask, double rate);

}  // namespace kws

#endif  // KWS_LAYERS_H_
