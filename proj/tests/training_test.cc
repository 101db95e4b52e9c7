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


#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "kws/error.h"
#include "kws/features.h"
#include "kws/training.h"
#include "test_support.h"

namespace kws {
namespace {

std::vector<std::string> ClassNameList() {
  return {kClassNames.begin(), kClassNames.end()};
}

// All six layer kinds at a size where a full finite-difference sweep is cheap.
NetworkSpec MiniSpec() {
  NetworkSpec spec;
  spec.input = {20, 16, 1};
  spec.layers = {ConvSpec{4, 3, 3, Activation::kRelu}, PoolSpec{2, 2}, BatchNormSpec{},
                 ConvSpec{6, 3, 3, Activation::kRelu}, PoolSpec{2, 2}, BatchNormSpec{},
                 FlattenSpec{}, DenseSpec{10, Activation::kRelu}, DropoutSpec{0.5},
                 DenseSpec{9, Activation::kSoftmax}};
  spec.class_names = ClassNameList();
  return spec;
}

Tensor3<double> RandomTensor(Shape3 s, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  Tensor3<double> t(s);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = rng.Uniform(lo, hi);
  return t;
}

Error CaughtError(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no kws::Error thrown";
  return Error(ErrorCode::kIoError, "none");
}

TEST(CrossEntropyTest, KnownValues) {
  std::vector<std::vector<double>> t = {{0, 0, 1}};
  EXPECT_EQ(CrossEntropy<double>({{0, 0, 1}}, t), 0.0);
  std::vector<std::vector<double>> uniform(1, std::vector<double>(9, 1.0 / 9.0));
  std::vector<std::vector<double>> t9(1, std::vector<double>(9, 0.0));
  t9[0][4] = 1.0;
  EXPECT_NEAR(CrossEntropy(uniform, t9), std::log(9.0), 1e-15);
  // Batch mean of -ln p_target.
  std::vector<std::vector<double>> p = {{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}};
  std::vector<std::vector<double>> tt = {{0, 1, 0}, {0, 0, 1}};
  EXPECT_NEAR(CrossEntropy(p, tt), -(std::log(0.5) + std::log(0.3)) / 2.0, 1e-15);
  // A zero target probability is clamped, not infinite.
  EXPECT_NEAR(CrossEntropy<double>({{1, 0}}, {{0, 1}}), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropyTest, RejectsBadRows) {
  EXPECT_EQ(CaughtError([] { CrossEntropy<double>({{0.5, 0.4}}, {{1, 0}}); }).code(),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CaughtError([] { CrossEntropy<double>({{0.5, 0.5}}, {{1, 1}}); }).code(),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CaughtError([] { CrossEntropy<double>({{0.5, 0.5}}, {{0.5, 0.5}}); }).code(),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CaughtError([] { CrossEntropy<double>({{1.0}}, {{1}, {1}}); }).code(),
            ErrorCode::kShapeMismatch);
}

TEST(OneHotTest, Rows) {
  const std::vector<GestureClass> labels = {GestureClass::kOff, GestureClass::kZero};
  const auto t = OneHot<float>(labels);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0], (std::vector<float>{0, 0, 0, 0, 0, 0, 0, 1, 0}));
  EXPECT_EQ(t[1][0], 1.0f);
}

// Textbook bias-corrected Adam on a scalar, written out independently.
std::vector<double> AdamOracle(const std::vector<double>& grads, double theta) {
  long double m = 0, v = 0, th = theta;
  std::vector<double> out;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const long double g = grads[t - 1];
    m = 0.9L * m + 0.1L * g;
    v = 0.999L * v + 0.001L * g * g;
    const long double mh = m / (1.0L - std::pow(0.9L, static_cast<long double>(t)));
    const long double vh = v / (1.0L - std::pow(0.999L, static_cast<long double>(t)));
    th -= 1e-3L * mh / (std::sqrt(vh) + 1e-7L);
    out.push_back(static_cast<double>(th));
  }
  return out;
}

TEST(AdamTest, MatchesScalarRecurrence) {
  const std::vector<double> grads = {0.5, -1.2, 3.0, 0.01, -0.7, 2.2, 0.0, -4.0, 1e-3, 0.9};
  const auto want = AdamOracle(grads, 0.25);
  std::vector<double> theta = {0.25};
  auto state = AdamState<double>::ForShapes({1});
  for (std::size_t t = 0; t < grads.size(); ++t) {
    AdamStep<double>({std::span<double>(theta)}, {{grads[t]}}, state);
    ASSERT_NEAR(theta[0], want[t], 1e-12) << "step " << t + 1;
  }
  EXPECT_EQ(state.step, 10u);
}

TEST(AdamTest, FirstStepMagnitude) {
  for (double g : {1e-6, 1.0, 1e6, -1e-6, -1.0, -1e6}) {
    std::vector<double> theta = {0.0};
    auto state = AdamState<double>::ForShapes({1});
    AdamStep<double>({std::span<double>(theta)}, {{g}}, state);
    // After bias correction the first step is lr * |g| / (|g| + eps).
    const double expected = 1e-3 * std::abs(g) / (std::abs(g) + 1e-7);
    EXPECT_NEAR(std::abs(theta[0]), expected, 1e-15) << g;
    EXPECT_EQ(std::signbit(theta[0]), g > 0);
  }
  std::vector<double> theta = {0.0};
  auto state = AdamState<double>::ForShapes({1});
  AdamStep<double>({std::span<double>(theta)}, {{1.0}}, state);
  EXPECT_NEAR(theta[0], -1e-3, 1e-9);
}

TEST(AdamTest, ZeroGradientLeavesParametersBitwise) {
  std::vector<double> theta = {0.1, -3.5, 1e-300};
  const auto before = theta;
  auto state = AdamState<double>::ForShapes({3});
  for (int i = 0; i < 3; ++i) AdamStep<double>({std::span<double>(theta)}, {{0, 0, 0}}, state);
  EXPECT_EQ(theta, before);
}

TEST(AdamTest, GroupShapeChecks) {
  std::vector<double> theta = {0.0, 0.0};
  auto state = AdamState<double>::ForShapes({2});
  EXPECT_EQ(CaughtError([&] { AdamStep<double>({std::span<double>(theta)}, {{1.0}}, state); })
                .code(),
            ErrorCode::kShapeMismatch);
  const auto net = Network<float>::KeywordNet(1);
  const auto s = AdamState<float>::For(net);
  EXPECT_EQ(s.m.size(), 12u);
  std::size_t n = 0;
  for (const auto& m : s.m) n += m.size();
  EXPECT_EQ(n, 22577u);
}

TEST(ArgMaxTest, LowestIndexOnTies) {
  const std::vector<double> v = {0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(ArgMax<double>(v), 1u);
  const std::vector<float> u = {0.2f, 0.2f};
  EXPECT_EQ(ArgMax<float>(u), 0u);
}

TEST(GradientCheckTest, RelativeErrorFloor) {
  EXPECT_EQ(GradientRelativeError(0.0, 0.0), 0.0);
  EXPECT_NEAR(GradientRelativeError(1e-9, 0.0), 1e-4, 1e-15);
  EXPECT_NEAR(GradientRelativeError(1e-9, 0.0, 1e-6), 1e-3, 1e-15);
  EXPECT_NEAR(GradientRelativeError(2.0, 1.0), 0.5, 1e-15);
}

TEST(GradientCheckTest, DenseOnlyNetwork) {
  NetworkSpec spec;
  spec.input = {1, 1, 6};
  spec.layers = {FlattenSpec{}, DenseSpec{7, Activation::kRelu},
                 DenseSpec{9, Activation::kSoftmax}};
  spec.class_names = ClassNameList();
  Network<double> net(spec);
  net.InitializeGlorot(5);
  Batch<double> in;
  for (std::uint64_t s = 0; s < 3; ++s) in.push_back(RandomTensor({1, 1, 6}, 100 + s, -1, 1));
  ASSERT_GT(KinkMargin(net, in), 1e-3);
  const std::vector<GestureClass> labels = {GestureClass::kOne, GestureClass::kOn,
                                            GestureClass::kUnknown};
  const auto r = GradientCheck(net, in, labels, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst_parameter;
  EXPECT_EQ(r.parameters_checked, 6u * 7 + 7 + 7 * 9 + 9);
  EXPECT_EQ(r.per_group_max.size(), 4u);
}

TEST(GradientCheckTest, AllLayerKinds) {
  Network<double> net(MiniSpec());
  net.InitializeGlorot(9);
  const std::vector<GestureClass> labels = {GestureClass::kTwo, GestureClass::kFive,
                                            GestureClass::kOff};
  // Draw batches until no ReLU or pooling decision sits within the step of a
  // kink; the finite difference is meaningless across one.
  Batch<double> in;
  for (std::uint64_t attempt = 0;; ++attempt) {
    ASSERT_LT(attempt, 200u);
    in.clear();
    for (std::uint64_t e = 0; e < 3; ++e) {
      in.push_back(RandomTensor({20, 16, 1}, 1000 * attempt + e, -3, 3));
    }
    if (KinkMargin(WithoutDropout(net), in) >= 1e-3) break;
  }
  const auto r = GradientCheck(net, in, labels, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " at " << r.worst_parameter << "["
                        << r.worst_index << "]";
  EXPECT_EQ(r.per_group_max.size(), 12u);
  EXPECT_EQ(r.parameters_checked, net.CountParams().trainable);
  const auto again = GradientCheck(net, in, labels, 1e-4);
  EXPECT_EQ(again.max_relative_error, r.max_relative_error);
}

TEST(WithoutDropoutTest, KeepsParameters) {
  const auto net = Network<float>::KeywordNet(2);
  const auto plain = WithoutDropout(net);
  EXPECT_EQ(std::get<DropoutSpec>(plain.spec().layers[8]).rate, 0.0);
  const Batch<float> in = {ToInputTensor<float>(ComputeFeatures(testing::RandomWindow(3)))};
  EXPECT_EQ(plain.Infer(in), net.Infer(in));
}

InMemorySource ToneSource(std::size_t n, std::uint64_t seed) {
  InMemorySource src;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = ClassFromIndex(i % 3 == 0 ? 2 : (i % 3 == 1 ? 5 : 8));
    const double hz = label == GestureClass::kTwo ? 700.0 : 3000.0;
    std::vector<double> v = testing::Sine(hz, 0.3, kWindowSamples, rng.Uniform(0, 6.0));
    if (label == GestureClass::kUnknown) v = testing::RandomSamples(rng.NextU64(), kWindowSamples, 0.1);
    src.Add(SampleWindow(v), label);
  }
  return src;
}

TEST(TrainEpochTest, DeterministicForSeed) {
  const InMemorySource train = ToneSource(6, 1);
  const InMemorySource val = ToneSource(3, 2);
  const NoisePool noise({testing::RandomSamples(9, 20000, 0.5)});
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 2;
  config.record_wall_time = false;

  auto run = [&] {
    auto net = Network<float>::KeywordNet(config.seed);
    auto state = AdamState<float>::For(net);
    auto reports = Train(net, train, &val, noise, state, config);
    return std::make_pair(std::move(net), std::move(reports));
  };
  const auto [a, ra] = run();
  const auto [b, rb] = run();
  ASSERT_EQ(ra.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ra[i].epoch, static_cast<int>(i) + 1);
    EXPECT_EQ(ra[i].train_loss, rb[i].train_loss);
    EXPECT_EQ(ra[i].val_accuracy, rb[i].val_accuracy);
  }
  const auto pa = a.Parameters();
  const auto pb = b.Parameters();
  for (std::size_t g = 0; g < pa.size(); ++g) {
    ASSERT_TRUE(std::ranges::equal(pa[g].values, pb[g].values)) << pa[g].name;
  }
  // A different seed takes a different path.
  config.seed = 18;
  auto other = Network<float>::KeywordNet(18);
  auto state = AdamState<float>::For(other);
  const auto rc = Train(other, train, &val, noise, state, config);
  EXPECT_NE(rc[0].train_loss, ra[0].train_loss);
}

TEST(TrainEpochTest, CallbackAndErrors) {
  const InMemorySource train = ToneSource(3, 4);
  const NoisePool noise;
  TrainConfig config;
  config.augment = false;
  config.batch_size = 2;
  config.epochs = 2;
  auto net = Network<float>::KeywordNet(1);
  auto state = AdamState<float>::For(net);
  int calls = 0;
  Train(net, train, nullptr, noise, state, config,
        [&](const EpochReport& r, const Network<float>&) {
          ++calls;
          EXPECT_FALSE(r.val_accuracy.has_value());
          EXPECT_GE(r.seconds, 0.0);
        });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(state.step, 4u);  // two batches per epoch

  config.epochs = 0;
  EXPECT_EQ(CaughtError([&] { Train(net, train, nullptr, noise, state, config); }).code(),
            ErrorCode::kInvalidArgument);
  config.epochs = 1;
  const InMemorySource empty;
  EXPECT_EQ(CaughtError([&] { Train(net, empty, nullptr, noise, state, config); }).code(),
            ErrorCode::kEmptyTrainingSplit);
  EXPECT_EQ(CaughtError([&] { Evaluate(net, empty); }).code(), ErrorCode::kEmptySplit);
}

TEST(EvaluateTest, ConfusionCounts) {
  auto net = Network<float>::KeywordNet(3);
  // A huge output bias makes every prediction "two".
  net.Parameters().back().values[2] = 1000.0f;
  InMemorySource src;
  src.Add(SampleWindow{}, GestureClass::kTwo);
  src.Add(testing::RandomWindow(1, 0.2), GestureClass::kTwo);
  src.Add(testing::RandomWindow(2, 0.2), GestureClass::kFive);
  const EvalResult r = Evaluate(net, src);
  EXPECT_EQ(r.total, 3u);
  EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.confusion[2][2], 2u);
  EXPECT_EQ(r.confusion[5][2], 1u);
  std::size_t sum = 0;
  for (const auto& row : r.confusion) for (auto c : row) sum += c;
  EXPECT_EQ(sum, 3u);
}

TEST(EpochCsvTest, Format) {
  std::ostringstream out;
  WriteEpochCsvHeader(out);
  EpochReport r;
  r.epoch = 3;
  r.train_loss = 0.5;
  r.train_accuracy = 0.25;
  r.val_accuracy = 0.75;
  r.seconds = 1.23456;
  WriteEpochCsvRow(out, r);
  WriteEpochCsvRow(out, r, false);
  r.val_accuracy.reset();
  WriteEpochCsvRow(out, r, false);
  EXPECT_EQ(out.str(),
            "epoch,train_loss,train_acc,val_acc,seconds\n"
            "3,0.5,0.25,0.75,1.235\n"
            "3,0.5,0.25,0.75,0.000\n"
            "3,0.5,0.25,,0.000\n");
}

}  // namespace
}  // namespace kws
