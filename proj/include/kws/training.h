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

// Loss, Adam, the epoch loop, evaluation and the finite-difference gradient
// check.

#ifndef KWS_TRAINING_H_
#define KWS_TRAINING_H_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/audio.h"
#include "kws/network.h"

namespace kws {

// Mean of -ln(max(p_target, 1e-12)). Rows of probs must sum to 1 within
// 1e-5 and targets must be one-hot.
template <typename T>
double CrossEntropy(const std::vector<std::vector<T>>& probs,
                    const std::vector<std::vector<T>>& targets);

template <typename T>
std::vector<std::vector<T>> OneHot(std::span<const GestureClass> labels);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  // Zero moments shaped like the given parameter groups.
  static AdamState ForShapes(const std::vector<std::size_t>& sizes,
                             AdamConfig config = {});
  static AdamState For(const Network<T>& network, AdamConfig config = {});
};

// One bias-corrected Adam update of every group.
template <typename T>
void AdamStep(const std::vector<std::span<T>>& params,
              const std::vector<std::vector<T>>& grads, AdamState<T>& state);

// Updates the trainable parameters of the network in canonical order.
template <typename T>
void AdamStep(Network<T>& network, const Gradients<T>& grads, AdamState<T>& state);

// Random-access labelled one-second examples.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual GestureClass label(std::size_t i) const = 0;
  virtual SampleWindow window(std::size_t i) const = 0;
  bool empty() const { return size() == 0; }
};

class InMemorySource : public ExampleSource {
 public:
  InMemorySource() = default;
  InMemorySource(std::vector<SampleWindow> windows, std::vector<GestureClass> labels);

  void Add(SampleWindow window, GestureClass label);
  std::size_t size() const override { return windows_.size(); }
  GestureClass label(std::size_t i) const override { return labels_[i]; }
  SampleWindow window(std::size_t i) const override { return windows_[i]; }

 private:
  std::vector<SampleWindow> windows_;
  std::vector<GestureClass> labels_;
};

// One split of a dataset index; WAV files are decoded on access.
class DatasetSource : public ExampleSource {
 public:
  DatasetSource(const DatasetIndex& index, Split split);

  std::size_t size() const override { return entries_.size(); }
  GestureClass label(std::size_t i) const override { return entries_[i].label; }
  SampleWindow window(std::size_t i) const override;

 private:
  std::filesystem::path root_;
  std::vector<DatasetEntry> entries_;
};

struct TrainConfig {
  int epochs = 90;
  std::size_t batch_size = 64;
  std::uint64_t seed = 17;
  AdamConfig adam;
  bool augment = true;
  double noise_probability = 0.8;
  double noise_gain_min = 0.0;
  double noise_gain_max = 0.1;
  bool subsample_unknown = true;
  // When false the epoch CSV carries 0 in the seconds column, which makes
  // two runs with the same seed byte-identical.
  bool record_wall_time = true;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  double seconds = 0.0;
};

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion{};
  std::size_t total = 0;
};

// Trains one epoch: seeded shuffle, sample-space augmentation, features,
// train-mode forward/backward and one Adam step per batch. Validation (when
// val is non-null and non-empty) runs in infer mode without augmentation.
EpochReport TrainEpoch(Network<float>& network, const ExampleSource& train,
                       const ExampleSource* val, const NoisePool& noise,
                       AdamState<float>& state, const TrainConfig& config,
                       int epoch);

// Full loop; on_epoch sees every report as it is produced.
std::vector<EpochReport> Train(
    Network<float>& network, const ExampleSource& train, const ExampleSource* val,
    const NoisePool& noise, AdamState<float>& state, const TrainConfig& config,
    const std::function<void(const EpochReport&, const Network<float>&)>& on_epoch = {});

template <typename T>
EvalResult Evaluate(const Network<T>& network, const ExampleSource& source);

EvalResult Evaluate(const Network<float>& network, const DatasetIndex& index,
                    Split split);

void WriteEpochCsvHeader(std::ostream& out);
void WriteEpochCsvRow(std::ostream& out, const EpochReport& report,
                      bool record_wall_time = true);

// Prediction with the lowest index on ties.
template <typename T>
std::size_t ArgMax(std::span<const T> values);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t parameters_checked = 0;
  std::vector<double> per_group_max;  // one per trainable group
  bool passed = false;
};

// Relative error used by the check: |a - n| / max(|a|, |n|, floor). With
// h = 1e-5 and an O(1) loss, central differences carry ~1e-10 of rounding
// noise, so gradients under the floor are compared on an absolute scale.
double GradientRelativeError(double analytic, double numeric, double floor = 1e-5);

// Central differences (step h) against Backward() for every trainable
// parameter, with dropout disabled and moving statistics untouched.
GradCheckReport GradientCheck(const Network<double>& network,
                              const Batch<double>& inputs,
                              std::span<const GestureClass> labels,
                              double tolerance, double h = 1e-5);

// Smallest distance of any loss-relevant kink from its switching point:
// ReLU inputs that win a pooling window (or feed a dense ReLU) against 0,
// and the gap between the two largest values of every pooling window.
double KinkMargin(const Network<double>& network, const Batch<double>& inputs);

// Same network with every dropout rate set to 0.
template <typename T>
Network<T> WithoutDropout(const Network<T>& network);

}  // namespace kws

#endif  // KWS_TRAINING_H_
