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

#ifndef KWS_NETWORK_H_
#define KWS_NETWORK_H_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "kws/features.h"
#include "kws/layers.h"

namespace kws {

using LayerSpec =
    std::variant<ConvSpec, PoolSpec, BatchNormSpec, FlattenSpec, DenseSpec, DropoutSpec>;

std::string LayerTypeName(const LayerSpec& layer);

struct NetworkSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
  std::vector<std::string> class_names;

  // The ten-layer speech-command network: conv 8@10x7, pool 7x5, BN,
  // conv 32@7x5, pool 5x3, BN, flatten, dense 64, dropout 0.5, dense 9.
  static NetworkSpec KeywordNet();

  bool operator==(const NetworkSpec&) const = default;
};

struct ParamCounts {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  std::vector<std::size_t> per_layer;

  std::size_t total() const { return trainable + non_trainable; }
};

// A named view of one parameter tensor in canonical order.
template <typename T>
struct ParamView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<T> values;
  bool trainable = true;
};

// Gradients for every trainable tensor, in the order of
// Network::Parameters() with non-trainable tensors skipped.
template <typename T>
struct Gradients {
  std::vector<std::string> names;
  std::vector<std::vector<T>> groups;
};

template <typename T>
struct LayerCache {
  Shape3 input_shape;
  Batch<T> input;
  Batch<T> pre_activation;
  std::vector<std::vector<std::size_t>> argmax;
  BatchNormCache<T> batch_norm;
  std::vector<std::vector<std::uint8_t>> dropout_mask;
};

template <typename T>
struct ForwardTrace {
  std::uint64_t network_version = 0;
  std::vector<LayerCache<T>> layers;
  std::vector<std::vector<T>> probabilities;
};

template <typename T>
struct TrainForwardResult {
  std::vector<std::vector<T>> probabilities;
  ForwardTrace<T> trace;
};

template <typename T>
using Layer = std::variant<ConvLayer<T>, PoolSpec, BatchNormLayer<T>, FlattenSpec,
                           DenseLayer<T>, DropoutSpec>;

// Sequential network over the layer kinds above. The final layer must be a
// dense softmax layer; the loss is cross-entropy on its output.
template <typename T>
class Network {
 public:
  // Zero weights and biases, gamma 1, beta 0, moving mean 0, moving var 1.
  explicit Network(NetworkSpec spec);

  // KeywordNet with Glorot-uniform weights drawn from the init substream.
  static Network KeywordNet(std::uint64_t seed);

  void InitializeGlorot(std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  // Output shape of each layer; dense and flatten outputs are (1, 1, n).
  const std::vector<Shape3>& output_shapes() const { return output_shapes_; }

  ParamCounts CountParams() const;

  // Canonical order: per layer, conv kernel, conv bias, bn gamma, beta,
  // moving mean, moving var, dense kernel, dense bias. The mutable overload
  // invalidates outstanding forward traces.
  std::vector<ParamView<T>> Parameters();
  std::vector<ParamView<const T>> Parameters() const;
  std::size_t TrainableGroupCount() const;

  // Deterministic inference: dropout is the identity and batch norm uses the
  // moving statistics. Returns one probability vector per input.
  std::vector<std::vector<T>> Infer(const Batch<T>& inputs) const;
  std::vector<T> Logits(const Tensor3<T>& input) const;

  // Batch statistics, dropout masks drawn from dropout_seed (per example).
  TrainForwardResult<T> ForwardTrain(const Batch<T>& inputs,
                                     std::uint64_t dropout_seed,
                                     bool update_moving_stats = true);

  // Train-mode pass over layers [first, end) from x, the input of layer
  // `first`. Moving statistics are left untouched. Dropout masks match
  // ForwardTrain for the same seed.
  std::vector<std::vector<T>> ForwardTrainFrom(std::size_t first, Batch<T> x,
                                               std::uint64_t dropout_seed);

  // Inputs of every layer of a train-mode pass (index l), followed by the
  // network output. Moving statistics are left untouched.
  std::vector<Batch<T>> TrainLayerInputs(const Batch<T>& inputs,
                                         std::uint64_t dropout_seed);

  // Mean cross-entropy gradients. targets holds one probability vector per
  // example (one-hot for training). Throws kStaleTrace when parameters were
  // handed out for mutation after the trace was recorded.
  Gradients<T> Backward(const ForwardTrace<T>& trace,
                        const std::vector<std::vector<T>>& targets) const;

  std::uint64_t version() const { return version_; }

 private:
  Batch<T> InferLayers(const Batch<T>& inputs, bool final_softmax) const;
  Batch<T> TrainLayers(std::size_t first, Batch<T> x, std::uint64_t dropout_seed,
                       bool update_moving_stats, ForwardTrace<T>* trace,
                       std::vector<Batch<T>>* layer_inputs);
  void CheckInputs(const Batch<T>& inputs) const;

  NetworkSpec spec_;
  std::vector<Layer<T>> layers_;
  std::vector<Shape3> output_shapes_;
  std::uint64_t version_ = 0;
};

template <typename T>
Tensor3<T> ToInputTensor(const SpectrogramGrid& grid) {
  Tensor3<T> t(grid.bins, grid.frames, 1);
  for (std::size_t k = 0; k < grid.values.size(); ++k) {
    t[k] = static_cast<T>(grid.values[k]);
  }
  return t;
}

// Copies every parameter (including moving statistics) across precisions.
template <typename To, typename From>
Network<To> ConvertNetwork(const Network<From>& source) {
  Network<To> out(source.spec());
  auto dst = out.Parameters();
  const auto src = source.Parameters();
  for (std::size_t g = 0; g < src.size(); ++g) {
    for (std::size_t k = 0; k < src[g].values.size(); ++k) {
      dst[g].values[k] = static_cast<To>(src[g].values[k]);
    }
  }
  return out;
}

}  // namespace kws

#endif  // KWS_NETWORK_H_
