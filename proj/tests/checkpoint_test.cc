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

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "kws/checkpoint.h"
#include "kws/error.h"
#include "kws/features.h"
#include "test_support.h"

namespace kws {
namespace {

using Bytes = std::vector<std::uint8_t>;

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no kws::Error thrown";
  return ErrorCode::kIoError;
}

std::uint32_t ReadU32(const Bytes& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void WriteU32(Bytes& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Rebuilds a file around an edited header, keeping the given payload bytes.
Bytes WithHeader(const Bytes& original, const std::function<void(nlohmann::json&)>& edit,
                 bool keep_payload) {
  const std::uint32_t len = ReadU32(original, 8);
  auto header = nlohmann::json::parse(original.begin() + 12, original.begin() + 12 + len);
  edit(header);
  const std::string text = header.dump();
  Bytes out(original.begin(), original.begin() + 12);
  WriteU32(out, 8, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  if (keep_payload) out.insert(out.end(), original.begin() + 12 + len, original.end());
  return out;
}

Network<float> TrainedLookingNet() {
  auto net = Network<float>::KeywordNet(21);
  // Move the statistics away from their initial values too.
  Rng rng(4);
  for (auto& p : net.Parameters()) {
    for (float& v : p.values) v += static_cast<float>(rng.Uniform(-0.01, 0.01));
  }
  for (auto& p : net.Parameters()) {
    if (p.name.ends_with("moving_variance")) for (float& v : p.values) v = std::abs(v) + 0.5f;
  }
  return net;
}

TEST(CheckpointTest, BitwiseRoundTrip) {
  const auto net = TrainedLookingNet();
  CheckpointMetadata meta;
  meta.epochs_completed = 84;
  meta.best_val_accuracy = 0.91;
  meta.seed = 17;
  const Bytes bytes = SerializeCheckpoint(net, meta);
  EXPECT_EQ(std::memcmp(bytes.data(), "KWS1", 4), 0);
  EXPECT_EQ(ReadU32(bytes, 4), kCheckpointVersion);
  const std::uint32_t len = ReadU32(bytes, 8);
  EXPECT_EQ(bytes.size(), 12u + len + 22657u * 4);

  const LoadedCheckpoint back = DeserializeCheckpoint(bytes);
  EXPECT_EQ(back.metadata, meta);
  const auto a = net.Parameters();
  const auto b = back.network.Parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t g = 0; g < a.size(); ++g) {
    ASSERT_EQ(a[g].values.size(), b[g].values.size());
    EXPECT_EQ(std::memcmp(a[g].values.data(), b[g].values.data(), a[g].values.size() * 4), 0)
        << a[g].name;
  }
  const Batch<float> in = {ToInputTensor<float>(ComputeFeatures(testing::RandomWindow(8)))};
  EXPECT_EQ(net.Infer(in), back.network.Infer(in));
  EXPECT_EQ(SerializeCheckpoint(back.network, back.metadata), bytes);
}

TEST(CheckpointTest, PayloadIsLittleEndianFloat32) {
  auto net = Network<float>::KeywordNet(1);
  net.Parameters()[0].values[0] = 1.0f;  // 0x3F800000
  const Bytes bytes = SerializeCheckpoint(net, {});
  const std::size_t at = 12 + ReadU32(bytes, 8);
  EXPECT_EQ(bytes[at], 0x00);
  EXPECT_EQ(bytes[at + 2], 0x80);
  EXPECT_EQ(bytes[at + 3], 0x3F);
}

TEST(CheckpointTest, FileRoundTripAndHeaderOnlyRead) {
  testing::TempDir dir;
  const auto net = TrainedLookingNet();
  CheckpointMetadata meta;
  meta.epochs_completed = 3;
  SaveCheckpoint(net, meta, dir.path() / "m.kws");
  const CheckpointHeader h = ReadCheckpointHeader(dir.path() / "m.kws");
  EXPECT_EQ(h.spec, NetworkSpec::KeywordNet());
  EXPECT_EQ(h.metadata, meta);
  EXPECT_EQ(h.payload_values, 22657u);
  EXPECT_FALSE(h.metadata.best_val_accuracy.has_value());
  const auto back = LoadCheckpoint(dir.path() / "m.kws");
  EXPECT_TRUE(std::ranges::equal(back.network.Parameters().back().values,
                                 net.Parameters().back().values));
  EXPECT_EQ(CodeOf([&] { LoadCheckpoint(dir.path() / "none.kws"); }), ErrorCode::kIoError);
}

TEST(CheckpointTest, RejectsBadMagicAndVersion) {
  const Bytes good = SerializeCheckpoint(Network<float>::KeywordNet(2), {});
  Bytes bad = good;
  bad[0] = 'X';
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(bad); }), ErrorCode::kBadMagic);
  EXPECT_EQ(CodeOf([] { DeserializeCheckpoint(Bytes{}); }), ErrorCode::kBadMagic);
  bad = good;
  WriteU32(bad, 4, 2);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(bad); }), ErrorCode::kUnsupportedVersion);
  const Bytes stub(good.begin(), good.begin() + 6);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(stub); }), ErrorCode::kTruncatedPayload);
}

TEST(CheckpointTest, RejectsShortAndLongPayloads) {
  const Bytes good = SerializeCheckpoint(Network<float>::KeywordNet(3), {});
  const Bytes short_one(good.begin(), good.end() - 4);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(short_one); }), ErrorCode::kTruncatedPayload);
  const Bytes ragged(good.begin(), good.end() - 1);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(ragged); }), ErrorCode::kTruncatedPayload);
  Bytes longer = good;
  longer.push_back(0);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(longer); }), ErrorCode::kTrailingData);
}

TEST(CheckpointTest, SpecMismatchComesFromHeaderAlone) {
  const Bytes good = SerializeCheckpoint(Network<float>::KeywordNet(4), {});
  // No payload at all: the architecture check must fire before the payload
  // would be found missing.
  const Bytes wider = WithHeader(
      good, [](nlohmann::json& h) { h["spec"]["layers"][0]["filters"] = 16; }, false);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(wider); }), ErrorCode::kSpecMismatch);

  testing::TempDir dir;
  {
    std::ofstream f(dir.path() / "wide.kws", std::ios::binary);
    f.write(reinterpret_cast<const char*>(wider.data()), static_cast<std::streamsize>(wider.size()));
  }
  EXPECT_EQ(CodeOf([&] { ReadCheckpointHeader(dir.path() / "wide.kws"); }),
            ErrorCode::kSpecMismatch);

  const Bytes renamed = WithHeader(
      good, [](nlohmann::json& h) { h["class_names"][8] = "other"; }, true);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(renamed); }), ErrorCode::kSpecMismatch);
  const Bytes reshaped = WithHeader(
      good, [](nlohmann::json& h) { h["tensors"][0]["shape"][0] = 9; }, true);
  EXPECT_EQ(CodeOf([&] { DeserializeCheckpoint(reshaped); }), ErrorCode::kSpecMismatch);
  // The untouched header still loads after a re-encode.
  const Bytes same = WithHeader(good, [](nlohmann::json&) {}, true);
  EXPECT_NO_THROW(DeserializeCheckpoint(same));
}

TEST(CheckpointTest, SpecJsonRoundTrip) {
  const NetworkSpec spec = NetworkSpec::KeywordNet();
  EXPECT_EQ(SpecFromJson(SpecToJson(spec)), spec);
  EXPECT_EQ(CodeOf([] { SpecFromJson("[1,2"); }), ErrorCode::kSpecMismatch);
  EXPECT_EQ(CodeOf([] { SpecFromJson(R"({"input":[1,2],"layers":[],"class_names":[]})"); }),
            ErrorCode::kSpecMismatch);
}

}  // namespace
}  // namespace kws
