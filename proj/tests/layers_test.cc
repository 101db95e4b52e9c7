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
#include <numeric>

#include "kws/error.h"
#include "kws/layers.h"
#include "kws/random.h"

namespace kws {
namespace {

Tensor3<double> RandomTensor(Shape3 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor3<double> t(s);
  for (double& v : t.storage()) v = rng.Uniform(lo, hi);
  return t;
}

std::vector<double> RandomVector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.Uniform(-1.0, 1.0);
  return v;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double RelErr(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

ConvLayer<double> RandomConv(std::size_t cin, std::size_t filters, std::size_t fh, std::size_t fw,
                             std::uint64_t seed) {
  ConvLayer<double> layer{{filters, fh, fw, Activation::kRelu}, cin, {}, {}};
  layer.weights = RandomVector(fh * fw * cin * filters, seed);
  layer.biases = RandomVector(filters, seed + 1);
  return layer;
}

// ---- convolution ---------------------------------------------------------

TEST(ConvTest, SumOfEntries) {
  ConvLayer<double> layer{{1, 2, 2, Activation::kRelu}, 1, {1, 1, 1, 1}, {0}};
  const Tensor3<double> in(Shape3{2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor3<double> out = Conv2dPreActivation(in, layer);
  ASSERT_EQ(out.shape(), (Shape3{1, 1, 1}));
  EXPECT_EQ(out[0], 10.0);
}

TEST(ConvTest, MatchesNestedLoopOracle) {
  const Tensor3<double> in = RandomTensor({9, 9, 3}, 1);
  const ConvLayer<double> layer = RandomConv(3, 4, 3, 3, 2);
  const Tensor3<double> out = Conv2dPreActivation(in, layer);
  ASSERT_EQ(out.shape(), (Shape3{7, 7, 4}));
  // w[a][b][c][o] stored with o fastest.
  auto w = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t o) {
    return layer.weights[((a * 3 + b) * 3 + c) * 4 + o];
  };
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      for (std::size_t o = 0; o < 4; ++o) {
        double want = layer.biases[o];
        for (std::size_t a = 0; a < 3; ++a) {
          for (std::size_t b = 0; b < 3; ++b) {
            for (std::size_t c = 0; c < 3; ++c) want += in.at(i + a, j + b, c) * w(a, b, c, o);
          }
        }
        EXPECT_LT(RelErr(out.at(i, j, o), want), 1e-6);
        const double relu = Conv2dForward(in, layer).at(i, j, o);
        EXPECT_EQ(relu, std::max(0.0, out.at(i, j, o)));
      }
    }
  }
}

TEST(ConvTest, FirstLayerShape) {
  const Tensor3<float> in(Shape3{129, 71, 1}, 0.5f);
  ConvLayer<float> layer{{8, 10, 7, Activation::kRelu}, 1, std::vector<float>(560, 0.01f),
                         std::vector<float>(8, 0.0f)};
  EXPECT_EQ(Conv2dForward(in, layer).shape(), (Shape3{120, 65, 8}));
}

TEST(ConvTest, ShapeMismatch) {
  const ConvLayer<double> layer = RandomConv(3, 2, 3, 3, 1);
  try {
    Conv2dPreActivation(Tensor3<double>(Shape3{5, 5, 2}), layer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  EXPECT_THROW(Conv2dPreActivation(Tensor3<double>(Shape3{2, 5, 3}), layer), Error);
}

TEST(ConvTest, BackwardMatchesFiniteDifferences) {
  Tensor3<double> in = RandomTensor({6, 5, 2}, 3);
  ConvLayer<double> layer = RandomConv(2, 3, 3, 2, 4);
  const Shape3 out_shape{4, 4, 3};
  const Tensor3<double> r = RandomTensor(out_shape, 5);
  auto loss = [&] { return Dot(Conv2dPreActivation(in, layer).data(), r.data()); };

  std::vector<double> gw(layer.weights.size(), 0.0), gb(layer.biases.size(), 0.0);
  Tensor3<double> gx(in.shape());
  Conv2dBackward(in, layer, r, std::span<double>(gw), std::span<double>(gb), &gx);

  const double h = 1e-5;
  auto fd = [&](double& theta) {
    const double saved = theta;
    theta = saved + h;
    const double up = loss();
    theta = saved - h;
    const double down = loss();
    theta = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t k = 0; k < gw.size(); ++k) EXPECT_LT(RelErr(gw[k], fd(layer.weights[k])), 1e-6);
  for (std::size_t k = 0; k < gb.size(); ++k) EXPECT_LT(RelErr(gb[k], fd(layer.biases[k])), 1e-6);
  for (std::size_t k = 0; k < in.size(); ++k) EXPECT_LT(RelErr(gx[k], fd(in[k])), 1e-6);
}

// ---- pooling -------------------------------------------------------------

TEST(PoolTest, TableShapes) {
  EXPECT_EQ(MaxPoolForward(Tensor3<float>(Shape3{120, 65, 8}), PoolSpec{7, 5}).output.shape(),
            (Shape3{17, 13, 8}));
  EXPECT_EQ(MaxPoolForward(Tensor3<float>(Shape3{11, 9, 32}), PoolSpec{5, 3}).output.shape(),
            (Shape3{2, 3, 32}));
}

TEST(PoolTest, TrailingRowIgnored) {
  Tensor3<double> in = RandomTensor({11, 9, 2}, 7);
  const auto before = MaxPoolForward(in, PoolSpec{5, 3}).output;
  for (std::size_t j = 0; j < 9; ++j) {
    for (std::size_t c = 0; c < 2; ++c) in.at(10, j, c) = 100.0;
  }
  EXPECT_EQ(MaxPoolForward(in, PoolSpec{5, 3}).output, before);
}

TEST(PoolTest, ConstantAndTieBreak) {
  const auto r = MaxPoolForward(Tensor3<double>(Shape3{4, 4, 1}, 2.5), PoolSpec{2, 2});
  for (double v : r.output.data()) EXPECT_EQ(v, 2.5);
  // First element in row-major window order wins.
  EXPECT_EQ(r.argmax[0], 0u);
  EXPECT_EQ(r.argmax[1], 2u);
}

TEST(PoolTest, MatchesDirectMaxAndConservesGradient) {
  const Tensor3<double> in = RandomTensor({10, 9, 3}, 8);
  const auto r = MaxPoolForward(in, PoolSpec{3, 2});
  ASSERT_EQ(r.output.shape(), (Shape3{3, 4, 3}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        double m = -1e9;
        for (std::size_t a = 0; a < 3; ++a) {
          for (std::size_t b = 0; b < 2; ++b) m = std::max(m, in.at(3 * i + a, 2 * j + b, c));
        }
        EXPECT_EQ(r.output.at(i, j, c), m);
      }
    }
  }
  const Tensor3<double> g = RandomTensor(r.output.shape(), 9);
  const Tensor3<double> gx = MaxPoolBackward(g, r.argmax, in.shape());
  const double in_mass = std::accumulate(gx.data().begin(), gx.data().end(), 0.0);
  const double out_mass = std::accumulate(g.data().begin(), g.data().end(), 0.0);
  EXPECT_NEAR(in_mass, out_mass, 1e-12);
  for (std::size_t k = 0; k < r.argmax.size(); ++k) EXPECT_EQ(gx[r.argmax[k]], g[k]);
}

// ---- batch normalization -------------------------------------------------

BatchNormLayer<double> UnitBatchNorm(std::size_t ch) {
  return {BatchNormSpec{}, std::vector<double>(ch, 1.0), std::vector<double>(ch, 0.0),
          std::vector<double>(ch, 0.0), std::vector<double>(ch, 1.0)};
}

TEST(BatchNormTest, InferWithUnitStatistics) {
  BatchNormLayer<double> layer = UnitBatchNorm(3);
  const Batch<double> in = {RandomTensor({4, 2, 3}, 10)};
  const Batch<double> out = BatchNormForward(in, layer, Mode::kInfer);
  for (std::size_t k = 0; k < in[0].size(); ++k) {
    EXPECT_NEAR(out[0][k], in[0][k] / std::sqrt(1.0 + 1e-3), 1e-15);
  }
  EXPECT_EQ(layer.moving_mean, std::vector<double>(3, 0.0));
}

TEST(BatchNormTest, TrainMomentsAndMovingUpdate) {
  BatchNormLayer<double> layer = UnitBatchNorm(2);
  layer.gamma = {1.0, 1.0};
  const Batch<double> in = {RandomTensor({3, 4, 2}, 11, 0.0, 3.0),
                            RandomTensor({3, 4, 2}, 12, -1.0, 2.0)};
  // Direct per-channel moments.
  std::vector<double> mean(2, 0.0), var(2, 0.0);
  const double n = 2 * 12;
  for (const auto& t : in) {
    for (std::size_t k = 0; k < t.size(); ++k) mean[k % 2] += t[k] / n;
  }
  for (const auto& t : in) {
    for (std::size_t k = 0; k < t.size(); ++k) var[k % 2] += (t[k] - mean[k % 2]) * (t[k] - mean[k % 2]) / n;
  }
  BatchNormCache<double> cache;
  const Batch<double> out = BatchNormTrain(in, layer, &cache);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (const auto& t : out) {
      for (std::size_t k = c; k < t.size(); k += 2) m += t[k] / n;
    }
    for (const auto& t : out) {
      for (std::size_t k = c; k < t.size(); k += 2) v += (t[k] - m) * (t[k] - m) / n;
    }
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, var[c] / (var[c] + 1e-3), 1e-12);
    EXPECT_NEAR(layer.moving_mean[c], 0.01 * mean[c], 1e-14);
    EXPECT_NEAR(layer.moving_var[c], 0.99 + 0.01 * var[c], 1e-14);
  }
  EXPECT_THROW(BatchNormTrain<double>(Batch<double>{}, layer, nullptr), Error);
  try {
    BatchNormTrain<double>(Batch<double>{}, layer, nullptr);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBatch);
  }
}

TEST(BatchNormTest, BackwardMatchesFiniteDifferences) {
  BatchNormLayer<double> layer = UnitBatchNorm(2);
  layer.gamma = {1.3, 0.7};
  layer.beta = {0.2, -0.4};
  Batch<double> in = {RandomTensor({2, 3, 2}, 13), RandomTensor({2, 3, 2}, 14)};
  const Batch<double> r = {RandomTensor({2, 3, 2}, 15), RandomTensor({2, 3, 2}, 16)};
  auto loss = [&] {
    const Batch<double> y = BatchNormTrain<double>(in, layer, nullptr, false);
    return Dot(y[0].data(), r[0].data()) + Dot(y[1].data(), r[1].data());
  };
  BatchNormCache<double> cache;
  BatchNormTrain(in, layer, &cache, false);
  std::vector<double> gg(2, 0.0), gb(2, 0.0);
  const Batch<double> gx = BatchNormBackward(r, layer, cache, std::span<double>(gg),
                                             std::span<double>(gb));
  const double h = 1e-5;
  auto fd = [&](double& theta) {
    const double saved = theta;
    theta = saved + h;
    const double up = loss();
    theta = saved - h;
    const double down = loss();
    theta = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_LT(RelErr(gg[c], fd(layer.gamma[c])), 1e-6);
    EXPECT_LT(RelErr(gb[c], fd(layer.beta[c])), 1e-6);
  }
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t k = 0; k < in[e].size(); ++k) EXPECT_LT(RelErr(gx[e][k], fd(in[e][k])), 1e-5);
  }
}

// ---- dense, softmax, dropout ---------------------------------------------

TEST(DenseTest, ParameterCountAndIdentity) {
  DenseLayer<float> big{{64, Activation::kRelu}, 192, std::vector<float>(192 * 64),
                        std::vector<float>(64)};
  EXPECT_EQ(big.weights.size() + big.biases.size(), 12352u);

  DenseLayer<double> id{{4, Activation::kNone}, 4, std::vector<double>(16, 0.0),
                        std::vector<double>(4, 0.0)};
  for (std::size_t i = 0; i < 4; ++i) id.weights[i * 4 + i] = 1.0;
  const std::vector<double> x = {0.5, -2.0, 3.0, 0.0};
  EXPECT_EQ(DenseForward<double>(x, id, Activation::kNone), x);
}

TEST(DenseTest, MatchesDotProducts) {
  DenseLayer<double> layer{{3, Activation::kNone}, 5, RandomVector(15, 20), RandomVector(3, 21)};
  const std::vector<double> x = RandomVector(5, 22);
  const auto out = DenseForward<double>(x, layer, Activation::kNone);
  for (std::size_t o = 0; o < 3; ++o) {
    double want = layer.biases[o];
    for (std::size_t i = 0; i < 5; ++i) want += x[i] * layer.weights[i * 3 + o];
    EXPECT_LT(RelErr(out[o], want), 1e-6);
  }
  const auto relu = DenseForward<double>(x, layer, Activation::kRelu);
  for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(relu[o], std::max(0.0, out[o]));
  EXPECT_THROW(DenseForward<double>(std::vector<double>(4, 0.0), layer, Activation::kNone), Error);
}

TEST(DenseTest, BackwardMatchesFiniteDifferences) {
  DenseLayer<double> layer{{3, Activation::kNone}, 4, RandomVector(12, 23), RandomVector(3, 24)};
  std::vector<double> x = RandomVector(4, 25);
  const std::vector<double> r = RandomVector(3, 26);
  auto loss = [&] { return Dot(DensePreActivation<double>(x, layer), r); };
  std::vector<double> gw(12, 0.0), gb(3, 0.0), gx(4, 0.0);
  DenseBackward<double>(x, layer, r, gw, gb, gx);
  const double h = 1e-5;
  auto fd = [&](double& theta) {
    const double saved = theta;
    theta = saved + h;
    const double up = loss();
    theta = saved - h;
    const double down = loss();
    theta = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t k = 0; k < 12; ++k) EXPECT_LT(RelErr(gw[k], fd(layer.weights[k])), 1e-8);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(RelErr(gb[k], fd(layer.biases[k])), 1e-8);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_LT(RelErr(gx[k], fd(x[k])), 1e-8);
}

TEST(SoftmaxTest, ClosedForms) {
  const auto uniform = Softmax<double>(std::vector<double>(9, 0.3));
  for (double p : uniform) EXPECT_NEAR(p, 1.0 / 9.0, 1e-15);
  const auto two = Softmax<double>(std::vector<double>{0.0, std::log(2.0)});
  EXPECT_NEAR(two[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(two[1], 2.0 / 3.0, 1e-15);
  std::vector<double> big(9, 0.0);
  big[0] = 1000.0;
  const auto p = Softmax<double>(big);
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
}

TEST(SoftmaxTest, SumsToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> z = RandomVector(9, 30 + seed);
    for (double& v : z) v *= 20.0;
    const auto p = Softmax<double>(z);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    for (double c : {-100.0, 100.0}) {
      std::vector<double> shifted(z);
      for (double& v : shifted) v += c;
      const auto q = Softmax<double>(shifted);
      for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(p[k], q[k], 1e-6);
    }
  }
}

TEST(ReluTest, ClampsNegatives) {
  std::vector<double> v = {-1.0, 0.0, 2.0, -0.0001};
  ReluInPlace(std::span<double>(v));
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.0, 2.0, 0.0}));
}

TEST(DropoutTest, InferAndZeroRateAreIdentity) {
  const std::vector<double> x = RandomVector(50, 40);
  const auto infer = DropoutForward<double>(x, 0.5, Mode::kInfer, 1);
  EXPECT_EQ(infer.output, x);
  const auto zero = DropoutForward<double>(x, 0.0, Mode::kTrain, 1);
  EXPECT_EQ(zero.output, x);
  EXPECT_TRUE(std::all_of(zero.mask.begin(), zero.mask.end(), [](auto m) { return m == 1; }));
  EXPECT_THROW(DropoutForward<double>(x, 1.0, Mode::kTrain, 1), Error);
}

TEST(DropoutTest, BinomialZeroFraction) {
  const std::size_t n = 100000;
  const std::vector<double> x(n, 1.0);
  const auto r = DropoutForward<double>(x, 0.5, Mode::kTrain, 77);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.mask[i]) {
      ASSERT_EQ(r.output[i], 2.0);
    } else {
      ASSERT_EQ(r.output[i], 0.0);
      ++zeros;
    }
  }
  // Binomial(1e5, 0.5) has standard deviation 0.0016 in the fraction.
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.01);
  const auto again = DropoutForward<double>(x, 0.5, Mode::kTrain, 77);
  EXPECT_EQ(again.mask, r.mask);

  const std::vector<double> g(n, 3.0);
  const auto gx = DropoutBackward<double>(g, r.mask, 0.5);
  for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(gx[i], r.mask[i] ? 6.0 : 0.0);
}

}  // namespace
}  // namespace kws
