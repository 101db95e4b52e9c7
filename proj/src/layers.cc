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

#include "kws/layers.h"

#include <algorithm>
#include <cmath>

#include "kws/random.h"

namespace kws {
namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

}  // namespace

template <typename T>
Tensor3<T> Conv2dPreActivation(const Tensor3<T>& input, const ConvLayer<T>& layer) {
  const auto& s = layer.spec;
  Require(input.channels() == layer.in_channels,
          "conv input has " + std::to_string(input.channels()) +
              " channels, layer expects " + std::to_string(layer.in_channels));
  Require(input.height() >= s.filter_h && input.width() >= s.filter_w,
          "conv input " + input.shape().ToString() + " smaller than filter");
  Require(layer.weights.size() == s.filter_h * s.filter_w * layer.in_channels * s.filters &&
              layer.biases.size() == s.filters,
          "conv parameter sizes");

  const std::size_t oh = input.height() - s.filter_h + 1;
  const std::size_t ow = input.width() - s.filter_w + 1;
  const std::size_t cin = layer.in_channels;
  const std::size_t cout = s.filters;
  Tensor3<T> out(oh, ow, cout);
  const T* in = input.data().data();
  const T* w = layer.weights.data();
  T* dst = out.data().data();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      T* o = dst + (i * ow + j) * cout;
      std::copy(layer.biases.begin(), layer.biases.end(), o);
      for (std::size_t a = 0; a < s.filter_h; ++a) {
        for (std::size_t b = 0; b < s.filter_w; ++b) {
          const T* x = in + ((i + a) * input.width() + (j + b)) * cin;
          const T* wk = w + (a * s.filter_w + b) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const T xv = x[c];
            const T* wc = wk + c * cout;
            for (std::size_t k = 0; k < cout; ++k) o[k] += xv * wc[k];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> Conv2dForward(const Tensor3<T>& input, const ConvLayer<T>& layer) {
  Tensor3<T> out = Conv2dPreActivation(input, layer);
  if (layer.spec.activation == Activation::kRelu) ReluInPlace(out.data());
  return out;
}

template <typename T>
void Conv2dBackward(const Tensor3<T>& input, const ConvLayer<T>& layer,
                    const Tensor3<T>& grad_pre, std::span<T> grad_weights,
                    std::span<T> grad_biases, Tensor3<T>* grad_input) {
  const auto& s = layer.spec;
  const std::size_t oh = input.height() - s.filter_h + 1;
  const std::size_t ow = input.width() - s.filter_w + 1;
  const std::size_t cin = layer.in_channels;
  const std::size_t cout = s.filters;
  Require(grad_pre.shape() == Shape3{oh, ow, cout}, "conv gradient shape");
  Require(grad_weights.size() == layer.weights.size() &&
              grad_biases.size() == layer.biases.size(),
          "conv gradient buffer sizes");
  if (grad_input) *grad_input = Tensor3<T>(input.shape());

  const T* in = input.data().data();
  const T* w = layer.weights.data();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const T* g = grad_pre.data().data() + (i * ow + j) * cout;
      // After ReLU and max pooling most positions carry no gradient.
      if (std::all_of(g, g + cout, [](T v) { return v == T(0); })) continue;
      for (std::size_t k = 0; k < cout; ++k) grad_biases[k] += g[k];
      for (std::size_t a = 0; a < s.filter_h; ++a) {
        for (std::size_t b = 0; b < s.filter_w; ++b) {
          const std::size_t in_off = ((i + a) * input.width() + (j + b)) * cin;
          const std::size_t w_off = (a * s.filter_w + b) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const T xv = in[in_off + c];
            T* gw = grad_weights.data() + w_off + c * cout;
            const T* wc = w + w_off + c * cout;
            T acc = 0;
            for (std::size_t k = 0; k < cout; ++k) {
              gw[k] += xv * g[k];
              acc += wc[k] * g[k];
            }
            if (grad_input) (*grad_input)[in_off + c] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
PoolResult<T> MaxPoolForward(const Tensor3<T>& input, const PoolSpec& spec) {
  Require(spec.pool_h > 0 && spec.pool_w > 0, "pool size must be positive");
  Require(input.height() >= spec.pool_h && input.width() >= spec.pool_w,
          "pool input " + input.shape().ToString() + " smaller than pool");
  const std::size_t oh = input.height() / spec.pool_h;
  const std::size_t ow = input.width() / spec.pool_w;
  const std::size_t ch = input.channels();
  PoolResult<T> r{Tensor3<T>(oh, ow, ch), std::vector<std::size_t>(oh * ow * ch)};
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = input.offset(i * spec.pool_h, j * spec.pool_w, c);
        for (std::size_t a = 0; a < spec.pool_h; ++a) {
          for (std::size_t b = 0; b < spec.pool_w; ++b) {
            const std::size_t k =
                input.offset(i * spec.pool_h + a, j * spec.pool_w + b, c);
            if (input[k] > input[best]) best = k;
          }
        }
        const std::size_t o = r.output.offset(i, j, c);
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor3<T> MaxPoolBackward(const Tensor3<T>& grad_output,
                           std::span<const std::size_t> argmax,
                           const Shape3& input_shape) {
  Require(argmax.size() == grad_output.size(), "pool argmax size");
  Tensor3<T> grad_input(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    grad_input[argmax[o]] += grad_output[o];
  }
  return grad_input;
}

template <typename T>
Batch<T> BatchNormInfer(const Batch<T>& input, const BatchNormLayer<T>& layer) {
  const std::size_t ch = layer.channels();
  std::vector<T> scale(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    scale[c] = layer.gamma[c] / std::sqrt(layer.moving_var[c] + T(layer.spec.epsilon));
  }
  Batch<T> out;
  out.reserve(input.size());
  for (const auto& x : input) {
    Require(x.channels() == ch, "batch norm channel count");
    Tensor3<T> y(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const std::size_t c = k % ch;
      y[k] = (x[k] - layer.moving_mean[c]) * scale[c] + layer.beta[c];
    }
    out.push_back(std::move(y));
  }
  return out;
}

template <typename T>
Batch<T> BatchNormTrain(const Batch<T>& input, BatchNormLayer<T>& layer,
                        BatchNormCache<T>* cache, bool update_moving_stats) {
  if (input.empty()) throw Error(ErrorCode::kEmptyBatch, "batch norm in train mode");
  const std::size_t ch = layer.channels();
  const Shape3 shape = input.front().shape();
  for (const auto& x : input) {
    Require(x.channels() == ch && x.shape() == shape, "batch norm input shape");
  }
  const double n = static_cast<double>(input.size() * shape.height * shape.width);
  std::vector<double> sum(ch, 0.0), sq(ch, 0.0);
  for (const auto& x : input) {
    for (std::size_t k = 0; k < x.size(); ++k) sum[k % ch] += x[k];
  }
  std::vector<T> mean(ch), var(ch), inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) mean[c] = static_cast<T>(sum[c] / n);
  for (const auto& x : input) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = static_cast<double>(x[k]) - static_cast<double>(mean[k % ch]);
      sq[k % ch] += d * d;
    }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    var[c] = static_cast<T>(sq[c] / n);
    inv_std[c] = T(1) / std::sqrt(var[c] + T(layer.spec.epsilon));
  }

  Batch<T> out;
  Batch<T> normalized;
  out.reserve(input.size());
  for (const auto& x : input) {
    Tensor3<T> xhat(x.shape()), y(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const std::size_t c = k % ch;
      xhat[k] = (x[k] - mean[c]) * inv_std[c];
      y[k] = layer.gamma[c] * xhat[k] + layer.beta[c];
    }
    if (cache) normalized.push_back(std::move(xhat));
    out.push_back(std::move(y));
  }
  if (update_moving_stats) {
    const T m = T(layer.spec.momentum);
    for (std::size_t c = 0; c < ch; ++c) {
      layer.moving_mean[c] = m * layer.moving_mean[c] + (T(1) - m) * mean[c];
      layer.moving_var[c] = m * layer.moving_var[c] + (T(1) - m) * var[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return out;
}

template <typename T>
Batch<T> BatchNormForward(const Batch<T>& input, BatchNormLayer<T>& layer,
                          Mode mode) {
  if (mode == Mode::kInfer) return BatchNormInfer(input, layer);
  return BatchNormTrain(input, layer, static_cast<BatchNormCache<T>*>(nullptr));
}

template <typename T>
Batch<T> BatchNormBackward(const Batch<T>& grad_output,
                           const BatchNormLayer<T>& layer,
                           const BatchNormCache<T>& cache,
                           std::span<T> grad_gamma, std::span<T> grad_beta) {
  const std::size_t ch = layer.channels();
  Require(grad_output.size() == cache.normalized.size(), "batch norm grad batch");
  std::vector<T> dgamma(ch, T(0)), dbeta(ch, T(0));
  std::size_t per_channel = 0;
  for (std::size_t e = 0; e < grad_output.size(); ++e) {
    const auto& g = grad_output[e];
    const auto& xhat = cache.normalized[e];
    Require(g.shape() == xhat.shape(), "batch norm grad shape");
    for (std::size_t k = 0; k < g.size(); ++k) {
      dgamma[k % ch] += g[k] * xhat[k];
      dbeta[k % ch] += g[k];
    }
    per_channel += g.height() * g.width();
  }
  const T n = static_cast<T>(per_channel);
  Batch<T> grad_input;
  grad_input.reserve(grad_output.size());
  for (std::size_t e = 0; e < grad_output.size(); ++e) {
    const auto& g = grad_output[e];
    const auto& xhat = cache.normalized[e];
    Tensor3<T> dx(g.shape());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t c = k % ch;
      dx[k] = layer.gamma[c] * cache.inv_std[c] / n *
              (n * g[k] - dbeta[c] - xhat[k] * dgamma[c]);
    }
    grad_input.push_back(std::move(dx));
  }
  for (std::size_t c = 0; c < ch; ++c) {
    grad_gamma[c] += dgamma[c];
    grad_beta[c] += dbeta[c];
  }
  return grad_input;
}

template <typename T>
std::vector<T> DensePreActivation(ConstSpan<T> input,
                                  const DenseLayer<T>& layer) {
  const std::size_t out_dim = layer.spec.units;
  Require(input.size() == layer.in_dim,
          "dense input length " + std::to_string(input.size()) + ", expected " +
              std::to_string(layer.in_dim));
  Require(layer.weights.size() == layer.in_dim * out_dim &&
              layer.biases.size() == out_dim,
          "dense parameter sizes");
  std::vector<T> out(layer.biases);
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    const T x = input[i];
    const T* w = layer.weights.data() + i * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) out[o] += x * w[o];
  }
  return out;
}

template <typename T>
std::vector<T> DenseForward(ConstSpan<T> input, const DenseLayer<T>& layer,
                            Activation activation) {
  std::vector<T> out = DensePreActivation(input, layer);
  switch (activation) {
    case Activation::kRelu: ReluInPlace(std::span<T>(out)); break;
    case Activation::kSoftmax: return Softmax(std::span<const T>(out));
    case Activation::kNone: break;
  }
  return out;
}

template <typename T>
void DenseBackward(ConstSpan<T> input, const DenseLayer<T>& layer,
                   ConstSpan<T> grad_pre, MutSpan<T> grad_weights,
                   MutSpan<T> grad_biases, MutSpan<T> grad_input) {
  const std::size_t out_dim = layer.spec.units;
  Require(input.size() == layer.in_dim && grad_pre.size() == out_dim,
          "dense backward sizes");
  for (std::size_t o = 0; o < out_dim; ++o) grad_biases[o] += grad_pre[o];
  for (std::size_t i = 0; i < layer.in_dim; ++i) {
    const T x = input[i];
    const T* w = layer.weights.data() + i * out_dim;
    T* gw = grad_weights.data() + i * out_dim;
    T acc = 0;
    for (std::size_t o = 0; o < out_dim; ++o) {
      gw[o] += x * grad_pre[o];
      acc += w[o] * grad_pre[o];
    }
    if (!grad_input.empty()) grad_input[i] = acc;
  }
}

template <typename T>
std::vector<T> Softmax(std::span<const T> logits) {
  std::vector<T> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const T top = *std::max_element(p.begin(), p.end());
  T sum = 0;
  for (T& v : p) {
    v = std::exp(v - top);
    sum += v;
  }
  for (T& v : p) v /= sum;
  return p;
}

template <typename T>
void ReluInPlace(std::span<T> values) {
  for (T& v : values) v = v > T(0) ? v : T(0);
}

template <typename T>
DropoutResult<T> DropoutForward(std::span<const T> input, double rate, Mode mode,
                                std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout rate outside [0, 1)");
  }
  DropoutResult<T> r{std::vector<T>(input.begin(), input.end()),
                     std::vector<std::uint8_t>(input.size(), 1)};
  if (mode == Mode::kInfer || rate == 0.0) return r;
  Rng rng(seed);
  const T scale = T(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.Bernoulli(rate) ? 0 : 1;
    r.output[i] = r.mask[i] ? input[i] * scale : T(0);
  }
  return r;
}

template <typename T>
std::vector<T> DropoutBackward(std::span<const T> grad_output,
                               std::span<const std::uint8_t> mask, double rate) {
  Require(grad_output.size() == mask.size(), "dropout mask size");
  const T scale = T(1.0 / (1.0 - rate));
  std::vector<T> g(grad_output.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = mask[i] ? grad_output[i] * scale : T(0);
  }
  return g;
}

#define KWS_INSTANTIATE_LAYERS(T)                                                  \
  template Tensor3<T> Conv2dPreActivation(const Tensor3<T>&, const ConvLayer<T>&); \
  template Tensor3<T> Conv2dForward(const Tensor3<T>&, const ConvLayer<T>&);       \
  template void Conv2dBackward(const Tensor3<T>&, const ConvLayer<T>&,             \
                               const Tensor3<T>&, std::span<T>, std::span<T>,      \
                               Tensor3<T>*);                                       \
  template PoolResult<T> MaxPoolForward(const Tensor3<T>&, const PoolSpec&);       \
  template Tensor3<T> MaxPoolBackward(const Tensor3<T>&,                           \
                                      std::span<const std::size_t>, const Shape3&); \
  template Batch<T> BatchNormInfer(const Batch<T>&, const BatchNormLayer<T>&);     \
  template Batch<T> BatchNormTrain(const Batch<T>&, BatchNormLayer<T>&,            \
                                   BatchNormCache<T>*, bool);                      \
  template Batch<T> BatchNormForward(const Batch<T>&, BatchNormLayer<T>&, Mode);   \
  template Batch<T> BatchNormBackward(const Batch<T>&, const BatchNormLayer<T>&,   \
                                      const BatchNormCache<T>&, std::span<T>,      \
                                      std::span<T>);                               \
  template std::vector<T> DensePreActivation(ConstSpan<T>,                   \
                                             const DenseLayer<T>&);                \
  template std::vector<T> DenseForward(ConstSpan<T>, const DenseLayer<T>&,   \
                                       Activation);                                \
  template void DenseBackward(ConstSpan<T>, const DenseLayer<T>&,            \
                              ConstSpan<T>, MutSpan<T>, MutSpan<T>,      \
                              MutSpan<T>);                                       \
  template std::vector<T> Softmax(std::span<const T>);                             \
  template void ReluInPlace(std::span<T>);                                         \
  template DropoutResult<T> DropoutForward(std::span<const T>, double, Mode,       \
                                           std::uint64_t);                         \
  template std::vector<T> DropoutBackward(std::span<const T>,                      \
                                          std::span<const std::uint8_t>, double);

KWS_INSTANTIATE_LAYERS(float)
KWS_INSTANTIATE_LAYERS(double)

#undef KWS_INSTANTIATE_LAYERS

}  // namespace kws
