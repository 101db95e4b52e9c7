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

#include "kws/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "kws/features.h"
#include "kws/random.h"

namespace kws {

template <typename T>
double CrossEntropy(const std::vector<std::vector<T>>& probs,
                    const std::vector<std::vector<T>>& targets) {
  if (probs.size() != targets.size() || probs.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "probability and target batch sizes");
  }
  double total = 0.0;
  for (std::size_t e = 0; e < probs.size(); ++e) {
    const auto& p = probs[e];
    const auto& t = targets[e];
    if (p.size() != t.size()) throw Error(ErrorCode::kShapeMismatch, "row widths");
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-5) {
      throw Error(ErrorCode::kInvalidArgument, "probability row does not sum to 1");
    }
    std::size_t hot = t.size();
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t[k] == T(1)) {
        if (hot != t.size()) hot = t.size() + 1;
        else hot = k;
      } else if (t[k] != T(0)) {
        hot = t.size() + 1;
      }
    }
    if (hot >= t.size()) throw Error(ErrorCode::kInvalidArgument, "target is not one-hot");
    total -= std::log(std::max(static_cast<double>(p[hot]), 1e-12));
  }
  return total / static_cast<double>(probs.size());
}

template <typename T>
std::vector<std::vector<T>> OneHot(std::span<const GestureClass> labels) {
  std::vector<std::vector<T>> out(labels.size(), std::vector<T>(kNumClasses, T(0)));
  for (std::size_t e = 0; e < labels.size(); ++e) out[e][ClassIndex(labels[e])] = T(1);
  return out;
}

template <typename T>
AdamState<T> AdamState<T>::ForShapes(const std::vector<std::size_t>& sizes,
                                     AdamConfig config) {
  AdamState s;
  s.config = config;
  for (std::size_t n : sizes) {
    s.m.emplace_back(n, T(0));
    s.v.emplace_back(n, T(0));
  }
  return s;
}

template <typename T>
AdamState<T> AdamState<T>::For(const Network<T>& network, AdamConfig config) {
  std::vector<std::size_t> sizes;
  for (const auto& p : network.Parameters()) {
    if (p.trainable) sizes.push_back(p.values.size());
  }
  return ForShapes(sizes, config);
}

template <typename T>
void AdamStep(const std::vector<std::span<T>>& params,
              const std::vector<std::vector<T>>& grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam group count");
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].size() != grads[g].size() || params[g].size() != state.m[g].size()) {
      throw Error(ErrorCode::kShapeMismatch, "adam group size");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.learning_rate);
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto& m = state.m[g];
    auto& v = state.v[g];
    for (std::size_t k = 0; k < params[g].size(); ++k) {
      const T grad = grads[g][k];
      m[k] = b1 * m[k] + (T(1) - b1) * grad;
      v[k] = b2 * v[k] + (T(1) - b2) * grad * grad;
      const T m_hat = m[k] / correction1;
      const T v_hat = v[k] / correction2;
      params[g][k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void AdamStep(Network<T>& network, const Gradients<T>& grads, AdamState<T>& state) {
  std::vector<std::span<T>> params;
  for (auto& p : network.Parameters()) {
    if (p.trainable) params.push_back(p.values);
  }
  AdamStep(params, grads.groups, state);
}

InMemorySource::InMemorySource(std::vector<SampleWindow> windows,
                               std::vector<GestureClass> labels)
    : windows_(std::move(windows)), labels_(std::move(labels)) {
  if (windows_.size() != labels_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "windows and labels differ in length");
  }
}

void InMemorySource::Add(SampleWindow window, GestureClass label) {
  windows_.push_back(std::move(window));
  labels_.push_back(label);
}

DatasetSource::DatasetSource(const DatasetIndex& index, Split split)
    : root_(index.root), entries_(index.EntriesFor(split)) {}

SampleWindow DatasetSource::window(std::size_t i) const {
  return ToWindow(ReadWavFile(root_ / entries_[i].relative_path));
}

template <typename T>
std::size_t ArgMax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

namespace {

SampleWindow Augment(const SampleWindow& window, const NoisePool& noise,
                     const TrainConfig& config, int epoch, std::size_t example) {
  if (!config.augment || noise.empty()) return window;
  Rng rng(DeriveSeed(config.seed, Stream::kAugment,
                     {static_cast<std::uint64_t>(epoch), example}));
  if (!rng.Bernoulli(config.noise_probability)) return window;
  const double gain = rng.Uniform(config.noise_gain_min, config.noise_gain_max);
  return MixNoise(window, noise, gain, rng.NextU64());
}

}  // namespace

EpochReport TrainEpoch(Network<float>& network, const ExampleSource& train,
                       const ExampleSource* val, const NoisePool& noise,
                       AdamState<float>& state, const TrainConfig& config,
                       int epoch) {
  if (train.empty()) throw Error(ErrorCode::kEmptyTrainingSplit, "no training examples");
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size 0");
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(DeriveSeed(config.seed, Stream::kShuffle,
                         {static_cast<std::uint64_t>(epoch)}));
  shuffle.Shuffle(order);

  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    Batch<float> inputs;
    std::vector<GestureClass> labels;
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t idx = order[p];
      SampleWindow w = Augment(train.window(idx), noise, config, epoch, idx);
      inputs.push_back(ToInputTensor<float>(ComputeFeatures(w)));
      labels.push_back(train.label(idx));
    }
    const auto targets = OneHot<float>(labels);
    auto fwd = network.ForwardTrain(
        inputs, DeriveSeed(config.seed, Stream::kDropout,
                           {static_cast<std::uint64_t>(epoch), batch_index}));
    const double loss = CrossEntropy(fwd.probabilities, targets);
    loss_sum += loss * static_cast<double>(labels.size());
    for (std::size_t e = 0; e < labels.size(); ++e) {
      if (ArgMax<float>(fwd.probabilities[e]) == ClassIndex(labels[e])) ++correct;
    }
    const Gradients<float> grads = network.Backward(fwd.trace, targets);
    AdamStep(network, grads, state);
    ++batch_index;
  }

  EpochReport report;
  report.epoch = epoch;
  report.train_loss = loss_sum / static_cast<double>(train.size());
  report.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  if (val && !val->empty()) report.val_accuracy = Evaluate(network, *val).accuracy;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<EpochReport> Train(
    Network<float>& network, const ExampleSource& train, const ExampleSource* val,
    const NoisePool& noise, AdamState<float>& state, const TrainConfig& config,
    const std::function<void(const EpochReport&, const Network<float>&)>& on_epoch) {
  if (config.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  std::vector<EpochReport> reports;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    reports.push_back(TrainEpoch(network, train, val, noise, state, config, epoch));
    if (on_epoch) on_epoch(reports.back(), network);
  }
  return reports;
}

template <typename T>
EvalResult Evaluate(const Network<T>& network, const ExampleSource& source) {
  if (source.empty()) throw Error(ErrorCode::kEmptySplit, "nothing to evaluate");
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto input = ToInputTensor<T>(ComputeFeatures(source.window(i)));
    const auto probs = network.Infer(Batch<T>{input}).front();
    const std::size_t predicted = ArgMax<T>(probs);
    const std::size_t truth = ClassIndex(source.label(i));
    ++r.confusion[truth][predicted];
    if (predicted == truth) ++correct;
  }
  r.total = source.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

EvalResult Evaluate(const Network<float>& network, const DatasetIndex& index,
                    Split split) {
  return Evaluate(network, DatasetSource(index, split));
}

void WriteEpochCsvHeader(std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_acc,seconds\n";
}

void WriteEpochCsvRow(std::ostream& out, const EpochReport& r, bool record_wall_time) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,", r.epoch, r.train_loss,
                r.train_accuracy);
  out << buf;
  if (r.val_accuracy) {
    std::snprintf(buf, sizeof(buf), "%.9g", *r.val_accuracy);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), ",%.3f\n", record_wall_time ? r.seconds : 0.0);
  out << buf;
}

template <typename T>
Network<T> WithoutDropout(const Network<T>& network) {
  NetworkSpec spec = network.spec();
  for (auto& layer : spec.layers) {
    if (auto* d = std::get_if<DropoutSpec>(&layer)) d->rate = 0.0;
  }
  Network<T> out(spec);
  auto dst = out.Parameters();
  const auto src = network.Parameters();
  for (std::size_t g = 0; g < src.size(); ++g) {
    std::copy(src[g].values.begin(), src[g].values.end(), dst[g].values.begin());
  }
  return out;
}

double GradientRelativeError(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport GradientCheck(const Network<double>& source,
                              const Batch<double>& inputs,
                              std::span<const GestureClass> labels, double tolerance,
                              double h) {
  if (inputs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "inputs and labels differ in length");
  }
  Network<double> net = WithoutDropout(source);
  const auto targets = OneHot<double>(labels);
  constexpr std::uint64_t kSeed = 0;

  auto fwd = net.ForwardTrain(inputs, kSeed, /*update_moving_stats=*/false);
  const Gradients<double> analytic = net.Backward(fwd.trace, targets);
  const std::vector<Batch<double>> layer_inputs = net.TrainLayerInputs(inputs, kSeed);

  // Trainable group -> owning layer, so each perturbation only reruns the
  // layers from its owner onward.
  std::vector<std::size_t> owner;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    if (std::holds_alternative<ConvLayer<double>>(layer) ||
        std::holds_alternative<BatchNormLayer<double>>(layer) ||
        std::holds_alternative<DenseLayer<double>>(layer)) {
      owner.push_back(l);
      owner.push_back(l);
    }
  }

  GradCheckReport report;
  std::vector<ParamView<double>> params;
  for (auto& p : net.Parameters()) {
    if (p.trainable) params.push_back(p);
  }
  report.per_group_max.assign(params.size(), 0.0);
  for (std::size_t g = 0; g < params.size(); ++g) {
    const std::size_t first = owner[g];
    auto loss_at = [&] {
      return CrossEntropy(net.ForwardTrainFrom(first, layer_inputs[first], kSeed), targets);
    };
    for (std::size_t k = 0; k < params[g].values.size(); ++k) {
      double& theta = params[g].values[k];
      const double saved = theta;
      theta = saved + h;
      const double up = loss_at();
      theta = saved - h;
      const double down = loss_at();
      theta = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = GradientRelativeError(analytic.groups[g][k], numeric);
      report.per_group_max[g] = std::max(report.per_group_max[g], err);
      if (err > report.max_relative_error || report.parameters_checked == 0) {
        report.max_relative_error = err;
        report.worst_parameter = params[g].name;
        report.worst_index = k;
        report.worst_analytic = analytic.groups[g][k];
        report.worst_numeric = numeric;
      }
      ++report.parameters_checked;
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

double KinkMargin(const Network<double>& source, const Batch<double>& inputs) {
  Network<double> net = WithoutDropout(source);
  const auto layer_inputs = net.TrainLayerInputs(inputs, 0);
  const auto& layers = net.layers();
  double margin = std::numeric_limits<double>::infinity();

  auto window_margin = [&](const Tensor3<double>& pre, const PoolSpec& p, bool relu) {
    const std::size_t oh = pre.height() / p.pool_h;
    const std::size_t ow = pre.width() / p.pool_w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t c = 0; c < pre.channels(); ++c) {
          double m1 = -std::numeric_limits<double>::infinity();
          double m2 = m1;
          for (std::size_t a = 0; a < p.pool_h; ++a) {
            for (std::size_t b = 0; b < p.pool_w; ++b) {
              const double v = pre.at(i * p.pool_h + a, j * p.pool_w + b, c);
              if (v > m1) {
                m2 = m1;
                m1 = v;
              } else if (v > m2) {
                m2 = v;
              }
            }
          }
          if (relu) {
            if (m1 <= 0) {
              margin = std::min(margin, -m1);
            } else {
              margin = std::min({margin, m1, m1 - m2});
            }
          } else {
            margin = std::min(margin, m1 - m2);
          }
        }
      }
    }
  };

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool pool_next = l + 1 < layers.size() &&
                           std::holds_alternative<PoolSpec>(layers[l + 1]);
    if (const auto* c = std::get_if<ConvLayer<double>>(&layers[l])) {
      const bool relu = c->spec.activation == Activation::kRelu;
      for (const auto& x : layer_inputs[l]) {
        const Tensor3<double> pre = Conv2dPreActivation(x, *c);
        if (pool_next) {
          window_margin(pre, std::get<PoolSpec>(layers[l + 1]), relu);
        } else if (relu) {
          for (double v : pre.data()) margin = std::min(margin, std::abs(v));
        }
      }
    } else if (const auto* p = std::get_if<PoolSpec>(&layers[l])) {
      const bool after_conv = l > 0 && std::holds_alternative<ConvLayer<double>>(layers[l - 1]);
      if (!after_conv) {
        for (const auto& x : layer_inputs[l]) window_margin(x, *p, false);
      }
    } else if (const auto* d = std::get_if<DenseLayer<double>>(&layers[l])) {
      if (d->spec.activation != Activation::kRelu) continue;
      for (const auto& x : layer_inputs[l]) {
        for (double v : DensePreActivation<double>(x.data(), *d)) {
          margin = std::min(margin, std::abs(v));
        }
      }
    }
  }
  return margin;
}

template double CrossEntropy(const std::vector<std::vector<float>>&,
                             const std::vector<std::vector<float>>&);
template double CrossEntropy(const std::vector<std::vector<double>>&,
                             const std::vector<std::vector<double>>&);
template std::vector<std::vector<float>> OneHot(std::span<const GestureClass>);
template std::vector<std::vector<double>> OneHot(std::span<const GestureClass>);
template struct AdamState<float>;
template struct AdamState<double>;
template void AdamStep(const std::vector<std::span<float>>&,
                       const std::vector<std::vector<float>>&, AdamState<float>&);
template void AdamStep(const std::vector<std::span<double>>&,
                       const std::vector<std::vector<double>>&, AdamState<double>&);
template void AdamStep(Network<float>&, const Gradients<float>&, AdamState<float>&);
template void AdamStep(Network<double>&, const Gradients<double>&, AdamState<double>&);
template std::size_t ArgMax(std::span<const float>);
template std::size_t ArgMax(std::span<const double>);
template EvalResult Evaluate(const Network<float>&, const ExampleSource&);
template EvalResult Evaluate(const Network<double>&, const ExampleSource&);
template Network<float> WithoutDropout(const Network<float>&);
template Network<double> WithoutDropout(const Network<double>&);

}  // namespace kws
