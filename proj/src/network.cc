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

#include "kws/network.h"

#include <cmath>

#include "kws/random.h"

namespace kws {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void ShapeError(const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, what);
}

template <typename T>
std::vector<std::vector<T>> Flatten(const Batch<T>& batch) {
  std::vector<std::vector<T>> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(t.storage());
  return out;
}

template <typename T>
Tensor3<T> Vec(std::vector<T> v) {
  const Shape3 s{1, 1, v.size()};
  return Tensor3<T>(s, std::move(v));
}

}  // namespace

std::string LayerTypeName(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const ConvSpec&) { return std::string("Convolution 2D"); },
                        [](const PoolSpec&) { return std::string("Pooling 2D"); },
                        [](const BatchNormSpec&) {
                          return std::string("Batch normalization");
                        },
                        [](const FlattenSpec&) { return std::string("Flatten"); },
                        [](const DenseSpec&) { return std::string("Dense"); },
                        [](const DropoutSpec&) { return std::string("Drop out"); },
                    },
                    layer);
}

NetworkSpec NetworkSpec::KeywordNet() {
  NetworkSpec s;
  s.input = {kFeatureBins, kFeatureFrames, 1};
  s.layers = {
      ConvSpec{8, 10, 7, Activation::kRelu},
      PoolSpec{7, 5},
      BatchNormSpec{},
      ConvSpec{32, 7, 5, Activation::kRelu},
      PoolSpec{5, 3},
      BatchNormSpec{},
      FlattenSpec{},
      DenseSpec{64, Activation::kRelu},
      DropoutSpec{0.5},
      DenseSpec{kNumClasses, Activation::kSoftmax},
  };
  for (auto name : kClassNames) s.class_names.emplace_back(name);
  return s;
}

template <typename T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.layers.empty()) ShapeError("network has no layers");
  Shape3 shape = spec_.input;
  if (shape.size() == 0) ShapeError("empty input shape");
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const bool last = l + 1 == spec_.layers.size();
    std::visit(
        Overloaded{
            [&](const ConvSpec& c) {
              if (c.filters == 0 || c.filter_h == 0 || c.filter_w == 0 ||
                  shape.height < c.filter_h || shape.width < c.filter_w ||
                  c.activation == Activation::kSoftmax) {
                ShapeError("conv layer does not fit input " + shape.ToString());
              }
              ConvLayer<T> layer{c, shape.channels, {}, {}};
              layer.weights.assign(c.filter_h * c.filter_w * shape.channels * c.filters, T(0));
              layer.biases.assign(c.filters, T(0));
              layers_.emplace_back(std::move(layer));
              shape = {shape.height - c.filter_h + 1, shape.width - c.filter_w + 1,
                       c.filters};
            },
            [&](const PoolSpec& p) {
              if (p.pool_h == 0 || p.pool_w == 0 || shape.height < p.pool_h ||
                  shape.width < p.pool_w) {
                ShapeError("pool layer does not fit input " + shape.ToString());
              }
              layers_.emplace_back(p);
              shape = {shape.height / p.pool_h, shape.width / p.pool_w, shape.channels};
            },
            [&](const BatchNormSpec& b) {
              const std::size_t ch = shape.channels;
              layers_.emplace_back(BatchNormLayer<T>{b, std::vector<T>(ch, T(1)),
                                                     std::vector<T>(ch, T(0)),
                                                     std::vector<T>(ch, T(0)),
                                                     std::vector<T>(ch, T(1))});
            },
            [&](const FlattenSpec& f) {
              layers_.emplace_back(f);
              shape = {1, 1, shape.size()};
            },
            [&](const DenseSpec& d) {
              if (shape.height != 1 || shape.width != 1) {
                ShapeError("dense layer needs a flat input, got " + shape.ToString());
              }
              if (d.units == 0) ShapeError("dense layer with zero units");
              if ((d.activation == Activation::kSoftmax) != last) {
                ShapeError("softmax must be the activation of the last layer only");
              }
              DenseLayer<T> layer{d, shape.channels, {}, {}};
              layer.weights.assign(shape.channels * d.units, T(0));
              layer.biases.assign(d.units, T(0));
              layers_.emplace_back(std::move(layer));
              shape = {1, 1, d.units};
            },
            [&](const DropoutSpec& d) {
              if (!(d.rate >= 0.0 && d.rate < 1.0)) ShapeError("dropout rate outside [0, 1)");
              layers_.emplace_back(d);
            },
        },
        spec_.layers[l]);
    output_shapes_.push_back(shape);
  }
  if (!std::holds_alternative<DenseLayer<T>>(layers_.back())) {
    ShapeError("the last layer must be a dense softmax layer");
  }
}

template <typename T>
Network<T> Network<T>::KeywordNet(std::uint64_t seed) {
  Network net(NetworkSpec::KeywordNet());
  net.InitializeGlorot(seed);
  return net;
}

template <typename T>
void Network<T>::InitializeGlorot(std::uint64_t seed) {
  ++version_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Rng rng(DeriveSeed(seed, Stream::kInit, {l}));
    auto fill = [&rng](std::vector<T>& w, std::size_t fan_in, std::size_t fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (T& v : w) v = static_cast<T>(rng.Uniform(-limit, limit));
    };
    std::visit(Overloaded{
                   [&](ConvLayer<T>& c) {
                     const std::size_t area = c.spec.filter_h * c.spec.filter_w;
                     fill(c.weights, area * c.in_channels, area * c.spec.filters);
                     std::fill(c.biases.begin(), c.biases.end(), T(0));
                   },
                   [&](DenseLayer<T>& d) {
                     fill(d.weights, d.in_dim, d.spec.units);
                     std::fill(d.biases.begin(), d.biases.end(), T(0));
                   },
                   [](BatchNormLayer<T>& b) {
                     std::fill(b.gamma.begin(), b.gamma.end(), T(1));
                     std::fill(b.beta.begin(), b.beta.end(), T(0));
                     std::fill(b.moving_mean.begin(), b.moving_mean.end(), T(0));
                     std::fill(b.moving_var.begin(), b.moving_var.end(), T(1));
                   },
                   [](auto&) {},
               },
               layers_[l]);
  }
}

template <typename T>
ParamCounts Network<T>::CountParams() const {
  ParamCounts counts;
  for (const auto& layer : layers_) {
    std::size_t n = 0;
    std::visit(Overloaded{
                   [&](const ConvLayer<T>& c) {
                     n = c.weights.size() + c.biases.size();
                     counts.trainable += n;
                   },
                   [&](const DenseLayer<T>& d) {
                     n = d.weights.size() + d.biases.size();
                     counts.trainable += n;
                   },
                   [&](const BatchNormLayer<T>& b) {
                     n = 4 * b.channels();
                     counts.trainable += 2 * b.channels();
                     counts.non_trainable += 2 * b.channels();
                   },
                   [](const auto&) {},
               },
               layer);
    counts.per_layer.push_back(n);
  }
  return counts;
}

namespace {

template <typename T, typename NetLayers>
auto CollectParameters(NetLayers& layers) {
  using Value = std::conditional_t<std::is_const_v<NetLayers>, const T, T>;
  std::vector<ParamView<Value>> views;
  std::size_t conv = 0, bn = 0, dense = 0;
  for (auto& layer : layers) {
    std::visit(
        Overloaded{
            [&](auto& c) requires std::is_same_v<std::remove_const_t<
                                                     std::remove_reference_t<decltype(c)>>,
                                                 ConvLayer<T>> {
              const std::string p = "conv" + std::to_string(++conv);
              views.push_back({p + "/kernel",
                               {c.spec.filter_h, c.spec.filter_w, c.in_channels,
                                c.spec.filters},
                               std::span<Value>(c.weights), true});
              views.push_back({p + "/bias", {c.spec.filters}, std::span<Value>(c.biases), true});
            },
            [&](auto& b) requires std::is_same_v<std::remove_const_t<
                                                     std::remove_reference_t<decltype(b)>>,
                                                 BatchNormLayer<T>> {
              const std::string p = "batch_norm" + std::to_string(++bn);
              const std::vector<std::size_t> shape{b.channels()};
              views.push_back({p + "/gamma", shape, std::span<Value>(b.gamma), true});
              views.push_back({p + "/beta", shape, std::span<Value>(b.beta), true});
              views.push_back(
                  {p + "/moving_mean", shape, std::span<Value>(b.moving_mean), false});
              views.push_back(
                  {p + "/moving_variance", shape, std::span<Value>(b.moving_var), false});
            },
            [&](auto& d) requires std::is_same_v<std::remove_const_t<
                                                     std::remove_reference_t<decltype(d)>>,
                                                 DenseLayer<T>> {
              const std::string p = "dense" + std::to_string(++dense);
              views.push_back(
                  {p + "/kernel", {d.in_dim, d.spec.units}, std::span<Value>(d.weights), true});
              views.push_back({p + "/bias", {d.spec.units}, std::span<Value>(d.biases), true});
            },
            [](const PoolSpec&) {},
            [](const FlattenSpec&) {},
            [](const DropoutSpec&) {},
        },
        layer);
  }
  return views;
}

}  // namespace

template <typename T>
std::vector<ParamView<T>> Network<T>::Parameters() {
  ++version_;
  return CollectParameters<T>(layers_);
}

template <typename T>
std::vector<ParamView<const T>> Network<T>::Parameters() const {
  return CollectParameters<T>(layers_);
}

template <typename T>
std::size_t Network<T>::TrainableGroupCount() const {
  std::size_t n = 0;
  for (const auto& v : Parameters()) n += v.trainable ? 1 : 0;
  return n;
}

template <typename T>
Batch<T> Network<T>::InferLayers(const Batch<T>& inputs, bool final_softmax) const {
  if (inputs.empty()) return {};
  CheckInputs(inputs);
  Batch<T> x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const bool last = l + 1 == layers_.size();
    std::visit(
        Overloaded{
            [&](const ConvLayer<T>& c) {
              for (auto& t : x) t = Conv2dForward(t, c);
            },
            [&](const PoolSpec& p) {
              for (auto& t : x) t = MaxPoolForward(t, p).output;
            },
            [&](const BatchNormLayer<T>& b) { x = BatchNormInfer(x, b); },
            [&](const FlattenSpec&) {
              for (auto& t : x) t.Reshape({1, 1, t.size()});
            },
            [&](const DenseLayer<T>& d) {
              const Activation act = (last && !final_softmax) ? Activation::kNone
                                                              : d.spec.activation;
              for (auto& t : x) t = Vec(DenseForward<T>(t.data(), d, act));
            },
            [](const DropoutSpec&) {},
        },
        layers_[l]);
  }
  return x;
}

template <typename T>
std::vector<std::vector<T>> Network<T>::Infer(const Batch<T>& inputs) const {
  return Flatten(InferLayers(inputs, true));
}

template <typename T>
std::vector<T> Network<T>::Logits(const Tensor3<T>& input) const {
  return InferLayers(Batch<T>{input}, false).front().storage();
}

template <typename T>
void Network<T>::CheckInputs(const Batch<T>& inputs) const {
  if (inputs.empty()) throw Error(ErrorCode::kEmptyBatch, "train forward");
  for (const auto& in : inputs) {
    if (in.shape() != spec_.input) {
      ShapeError("input " + in.shape().ToString() + ", expected " +
                 spec_.input.ToString());
    }
  }
}

template <typename T>
Batch<T> Network<T>::TrainLayers(std::size_t first, Batch<T> x,
                                 std::uint64_t dropout_seed, bool update_moving_stats,
                                 ForwardTrace<T>* trace,
                                 std::vector<Batch<T>>* layer_inputs) {
  if (x.empty()) throw Error(ErrorCode::kEmptyBatch, "train forward");
  if (trace) trace->layers.resize(layers_.size());
  LayerCache<T> scratch;
  for (std::size_t l = first; l < layers_.size(); ++l) {
    if (layer_inputs) layer_inputs->push_back(x);
    LayerCache<T>& cache = trace ? trace->layers[l] : scratch;
    cache.input_shape = x.front().shape();
    std::visit(
        Overloaded{
            [&](ConvLayer<T>& c) {
              if (trace) cache.input = x;
              for (auto& t : x) {
                Tensor3<T> pre = Conv2dPreActivation(t, c);
                t = pre;
                if (c.spec.activation == Activation::kRelu) ReluInPlace(t.data());
                if (trace) cache.pre_activation.push_back(std::move(pre));
              }
            },
            [&](PoolSpec& p) {
              for (auto& t : x) {
                PoolResult<T> r = MaxPoolForward(t, p);
                t = std::move(r.output);
                if (trace) cache.argmax.push_back(std::move(r.argmax));
              }
            },
            [&](BatchNormLayer<T>& b) {
              x = BatchNormTrain(x, b, trace ? &cache.batch_norm : nullptr,
                                 update_moving_stats);
            },
            [&](FlattenSpec&) {
              for (auto& t : x) t.Reshape({1, 1, t.size()});
            },
            [&](DenseLayer<T>& d) {
              if (trace) cache.input = x;
              for (auto& t : x) {
                std::vector<T> pre = DensePreActivation<T>(t.data(), d);
                std::vector<T> out = pre;
                if (d.spec.activation == Activation::kRelu) {
                  ReluInPlace(std::span<T>(out));
                } else if (d.spec.activation == Activation::kSoftmax) {
                  out = Softmax<T>(std::span<const T>(pre));
                }
                if (trace) cache.pre_activation.push_back(Vec(std::move(pre)));
                t = Vec(std::move(out));
              }
            },
            [&](DropoutSpec& d) {
              for (std::size_t e = 0; e < x.size(); ++e) {
                DropoutResult<T> r =
                    DropoutForward<T>(x[e].data(), d.rate, Mode::kTrain,
                                      DeriveSeed(dropout_seed, {l, e}));
                x[e] = Vec(std::move(r.output));
                if (trace) cache.dropout_mask.push_back(std::move(r.mask));
              }
            },
        },
        layers_[l]);
  }
  if (layer_inputs) layer_inputs->push_back(x);
  return x;
}

template <typename T>
TrainForwardResult<T> Network<T>::ForwardTrain(const Batch<T>& inputs,
                                               std::uint64_t dropout_seed,
                                               bool update_moving_stats) {
  CheckInputs(inputs);
  TrainForwardResult<T> result;
  result.probabilities = Flatten(
      TrainLayers(0, inputs, dropout_seed, update_moving_stats, &result.trace, nullptr));
  result.trace.probabilities = result.probabilities;
  result.trace.network_version = version_;
  return result;
}

template <typename T>
std::vector<std::vector<T>> Network<T>::ForwardTrainFrom(std::size_t first, Batch<T> x,
                                                         std::uint64_t dropout_seed) {
  if (first >= layers_.size()) ShapeError("first layer out of range");
  return Flatten(TrainLayers(first, std::move(x), dropout_seed, false, nullptr, nullptr));
}

template <typename T>
std::vector<Batch<T>> Network<T>::TrainLayerInputs(const Batch<T>& inputs,
                                                   std::uint64_t dropout_seed) {
  CheckInputs(inputs);
  std::vector<Batch<T>> out;
  TrainLayers(0, inputs, dropout_seed, false, nullptr, &out);
  return out;
}

template <typename T>
Gradients<T> Network<T>::Backward(const ForwardTrace<T>& trace,
                                  const std::vector<std::vector<T>>& targets) const {
  if (trace.network_version != version_) {
    throw Error(ErrorCode::kStaleTrace, "network parameters changed since forward");
  }
  if (trace.layers.size() != layers_.size()) ShapeError("trace does not match network");
  const std::size_t batch = trace.probabilities.size();
  if (targets.size() != batch) ShapeError("targets batch size");

  Gradients<T> grads;
  std::vector<std::size_t> first_group(layers_.size(), 0);
  for (const auto& v : Parameters()) {
    if (!v.trainable) continue;
    grads.names.push_back(v.name);
    grads.groups.emplace_back(v.values.size(), T(0));
  }
  {
    std::size_t g = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      first_group[l] = g;
      if (!std::holds_alternative<PoolSpec>(layers_[l]) &&
          !std::holds_alternative<FlattenSpec>(layers_[l]) &&
          !std::holds_alternative<DropoutSpec>(layers_[l])) {
        g += 2;
      }
    }
  }

  // d(mean cross-entropy)/d(logits) = (p - t) / B.
  Batch<T> g;
  g.reserve(batch);
  for (std::size_t e = 0; e < batch; ++e) {
    const auto& p = trace.probabilities[e];
    if (targets[e].size() != p.size()) ShapeError("target width");
    std::vector<T> d(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      d[k] = (p[k] - targets[e][k]) / static_cast<T>(batch);
    }
    g.push_back(Vec(std::move(d)));
  }

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LayerCache<T>& cache = trace.layers[l];
    const bool need_input_grad = l > 0;
    std::visit(
        Overloaded{
            [&](const ConvLayer<T>& c) {
              auto& gw = grads.groups[first_group[l]];
              auto& gb = grads.groups[first_group[l] + 1];
              for (std::size_t e = 0; e < batch; ++e) {
                Tensor3<T>& ge = g[e];
                if (c.spec.activation == Activation::kRelu) {
                  const auto& pre = cache.pre_activation[e];
                  for (std::size_t k = 0; k < ge.size(); ++k) {
                    if (!(pre[k] > T(0))) ge[k] = T(0);
                  }
                }
                Tensor3<T> gin;
                Conv2dBackward(cache.input[e], c, ge, std::span<T>(gw), std::span<T>(gb),
                               need_input_grad ? &gin : nullptr);
                ge = std::move(gin);
              }
            },
            [&](const PoolSpec&) {
              for (std::size_t e = 0; e < batch; ++e) {
                g[e] = MaxPoolBackward(g[e], std::span<const std::size_t>(cache.argmax[e]),
                                       cache.input_shape);
              }
            },
            [&](const BatchNormLayer<T>& b) {
              g = BatchNormBackward(g, b, cache.batch_norm,
                                    std::span<T>(grads.groups[first_group[l]]),
                                    std::span<T>(grads.groups[first_group[l] + 1]));
            },
            [&](const FlattenSpec&) {
              for (auto& t : g) t.Reshape(cache.input_shape);
            },
            [&](const DenseLayer<T>& d) {
              auto& gw = grads.groups[first_group[l]];
              auto& gb = grads.groups[first_group[l] + 1];
              for (std::size_t e = 0; e < batch; ++e) {
                Tensor3<T>& ge = g[e];
                if (d.spec.activation == Activation::kRelu) {
                  const auto& pre = cache.pre_activation[e];
                  for (std::size_t k = 0; k < ge.size(); ++k) {
                    if (!(pre[k] > T(0))) ge[k] = T(0);
                  }
                }
                std::vector<T> gin(need_input_grad ? d.in_dim : 0);
                DenseBackward<T>(cache.input[e].data(), d, ge.data(), std::span<T>(gw),
                              std::span<T>(gb), std::span<T>(gin));
                ge = need_input_grad ? Vec(std::move(gin)) : Tensor3<T>();
              }
            },
            [&](const DropoutSpec& d) {
              for (std::size_t e = 0; e < batch; ++e) {
                g[e] = Vec(DropoutBackward<T>(g[e].data(),
                                           std::span<const std::uint8_t>(cache.dropout_mask[e]),
                                           d.rate));
              }
            },
        },
        layers_[l]);
  }
  return grads;
}

template class Network<float>;
template class Network<double>;

}  // namespace kws
