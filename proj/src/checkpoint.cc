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

#include "kws/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "kws/error.h"

namespace kws {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'K', 'W', 'S', '1'};

// Either a byte span or an open file, read strictly front to back.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // False when fewer than n bytes remain.
  virtual bool Read(std::uint8_t* dst, std::size_t n) = 0;
  virtual bool AtEnd() = 0;
};

class SpanSource : public ByteSource {
 public:
  explicit SpanSource(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  bool Read(std::uint8_t* dst, std::size_t n) override {
    if (bytes_.size() - pos_ < n) return false;
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
    return true;
  }
  bool AtEnd() override { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

class FileSource : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  bool Read(std::uint8_t* dst, std::size_t n) override {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }
  bool AtEnd() override { return in_.peek() == std::ifstream::traits_type::eof(); }

 private:
  std::ifstream in_;
};

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(const std::uint8_t* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string ActivationName(Activation a) {
  switch (a) {
    case Activation::kNone: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kSoftmax: return "softmax";
  }
  return "linear";
}

Activation ActivationFromName(const std::string& s) {
  if (s == "linear") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  if (s == "softmax") return Activation::kSoftmax;
  throw Error(ErrorCode::kSpecMismatch, "unknown activation " + s);
}

json SpecJson(const NetworkSpec& spec) {
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) {
    json j;
    if (const auto* c = std::get_if<ConvSpec>(&l)) {
      j = {{"type", "conv"},
           {"filters", c->filters},
           {"kernel", {c->filter_h, c->filter_w}},
           {"activation", ActivationName(c->activation)}};
    } else if (const auto* p = std::get_if<PoolSpec>(&l)) {
      j = {{"type", "max_pool"}, {"pool", {p->pool_h, p->pool_w}}};
    } else if (const auto* b = std::get_if<BatchNormSpec>(&l)) {
      j = {{"type", "batch_norm"}, {"epsilon", b->epsilon}, {"momentum", b->momentum}};
    } else if (std::holds_alternative<FlattenSpec>(l)) {
      j = {{"type", "flatten"}};
    } else if (const auto* d = std::get_if<DenseSpec>(&l)) {
      j = {{"type", "dense"}, {"units", d->units}, {"activation", ActivationName(d->activation)}};
    } else if (const auto* r = std::get_if<DropoutSpec>(&l)) {
      j = {{"type", "dropout"}, {"rate", r->rate}};
    }
    layers.push_back(j);
  }
  return {{"input", {spec.input.height, spec.input.width, spec.input.channels}},
          {"layers", layers},
          {"class_names", spec.class_names}};
}

NetworkSpec SpecFromJsonValue(const json& j) {
  try {
    NetworkSpec spec;
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw Error(ErrorCode::kSpecMismatch, "input needs 3 dims");
    spec.input = {in[0], in[1], in[2]};
    for (const json& l : j.at("layers")) {
      const std::string type = l.at("type").get<std::string>();
      if (type == "conv") {
        const auto k = l.at("kernel").get<std::vector<std::size_t>>();
        if (k.size() != 2) throw Error(ErrorCode::kSpecMismatch, "kernel needs 2 dims");
        spec.layers.push_back(ConvSpec{l.at("filters").get<std::size_t>(), k[0], k[1],
                                       ActivationFromName(l.at("activation"))});
      } else if (type == "max_pool") {
        const auto p = l.at("pool").get<std::vector<std::size_t>>();
        if (p.size() != 2) throw Error(ErrorCode::kSpecMismatch, "pool needs 2 dims");
        spec.layers.push_back(PoolSpec{p[0], p[1]});
      } else if (type == "batch_norm") {
        spec.layers.push_back(
            BatchNormSpec{l.at("epsilon").get<double>(), l.at("momentum").get<double>()});
      } else if (type == "flatten") {
        spec.layers.push_back(FlattenSpec{});
      } else if (type == "dense") {
        spec.layers.push_back(DenseSpec{l.at("units").get<std::size_t>(),
                                        ActivationFromName(l.at("activation"))});
      } else if (type == "dropout") {
        spec.layers.push_back(DropoutSpec{l.at("rate").get<double>()});
      } else {
        throw Error(ErrorCode::kSpecMismatch, "unknown layer type " + type);
      }
    }
    spec.class_names = j.at("class_names").get<std::vector<std::string>>();
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSpecMismatch, e.what());
  }
}

struct ParsedHeader {
  CheckpointHeader header;
  Network<float> network;
};

ParsedHeader ReadHeader(ByteSource& src) {
  std::uint8_t pre[12];
  if (!src.Read(pre, 4) || std::memcmp(pre, kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a KWS1 checkpoint");
  }
  if (!src.Read(pre + 4, 4)) throw Error(ErrorCode::kTruncatedPayload, "missing version");
  const std::uint32_t version = GetU32(pre + 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "version " + std::to_string(version));
  }
  if (!src.Read(pre + 8, 4)) throw Error(ErrorCode::kTruncatedPayload, "missing header length");
  const std::uint32_t header_len = GetU32(pre + 8);
  std::string text(header_len, '\0');
  if (!src.Read(reinterpret_cast<std::uint8_t*>(text.data()), header_len)) {
    throw Error(ErrorCode::kTruncatedPayload, "header shorter than declared");
  }

  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSpecMismatch, std::string("unreadable header: ") + e.what());
  }
  if (!h.is_object() || !h.contains("spec")) {
    throw Error(ErrorCode::kSpecMismatch, "header has no spec");
  }
  NetworkSpec spec = SpecFromJsonValue(h["spec"]);
  if (!(spec == NetworkSpec::KeywordNet())) {
    throw Error(ErrorCode::kSpecMismatch, "architecture differs from the keyword network");
  }
  try {
    if (h.at("class_names").get<std::vector<std::string>>() != spec.class_names) {
      throw Error(ErrorCode::kSpecMismatch, "class names differ");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSpecMismatch, e.what());
  }

  ParsedHeader out{CheckpointHeader{spec, {}, 0}, Network<float>(spec)};
  std::size_t expected = 0;
  try {
    const json& tensors = h.at("tensors");
    const auto params = std::as_const(out.network).Parameters();
    if (tensors.size() != params.size()) {
      throw Error(ErrorCode::kSpecMismatch, "tensor count differs");
    }
    for (std::size_t g = 0; g < params.size(); ++g) {
      if (tensors[g].at("name").get<std::string>() != params[g].name ||
          tensors[g].at("shape").get<std::vector<std::size_t>>() != params[g].shape) {
        throw Error(ErrorCode::kSpecMismatch, "tensor " + params[g].name + " differs");
      }
      expected += params[g].values.size();
    }
    const json& m = h.at("metadata");
    CheckpointMetadata& md = out.header.metadata;
    md.epochs_completed = m.at("epochs_completed").get<int>();
    if (!m.at("best_val_accuracy").is_null()) {
      md.best_val_accuracy = m["best_val_accuracy"].get<double>();
    }
    md.seed = m.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSpecMismatch, e.what());
  }
  out.header.payload_values = expected;
  return out;
}

LoadedCheckpoint ReadAll(ByteSource& src) {
  ParsedHeader parsed = ReadHeader(src);
  std::vector<std::uint8_t> raw(parsed.header.payload_values * 4);
  if (!src.Read(raw.data(), raw.size())) {
    throw Error(ErrorCode::kTruncatedPayload,
                "expected " + std::to_string(parsed.header.payload_values) + " values");
  }
  if (!src.AtEnd()) throw Error(ErrorCode::kTrailingData, "bytes after the payload");
  std::size_t at = 0;
  for (auto& p : parsed.network.Parameters()) {
    for (float& v : p.values) {
      v = std::bit_cast<float>(GetU32(raw.data() + at));
      at += 4;
    }
  }
  return {std::move(parsed.network), parsed.header.metadata};
}

}  // namespace

std::string SpecToJson(const NetworkSpec& spec) { return SpecJson(spec).dump(); }

NetworkSpec SpecFromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSpecMismatch, e.what());
  }
  return SpecFromJsonValue(j);
}

std::vector<std::uint8_t> SerializeCheckpoint(const Network<float>& network,
                                              const CheckpointMetadata& metadata) {
  json tensors = json::array();
  std::size_t count = 0;
  const auto params = network.Parameters();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"trainable", p.trainable}});
    count += p.values.size();
  }
  json h = {{"spec", SpecJson(network.spec())},
            {"class_names", network.spec().class_names},
            {"metadata",
             {{"epochs_completed", metadata.epochs_completed},
              {"best_val_accuracy", metadata.best_val_accuracy
                                        ? json(*metadata.best_val_accuracy)
                                        : json(nullptr)},
              {"seed", metadata.seed}}},
            {"tensors", tensors}};
  const std::string text = h.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  PutU32(out, kCheckpointVersion);
  PutU32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + count * 4);
  for (const auto& p : params) {
    for (float v : p.values) PutU32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

LoadedCheckpoint DeserializeCheckpoint(std::span<const std::uint8_t> bytes) {
  SpanSource src(bytes);
  return ReadAll(src);
}

void SaveCheckpoint(const Network<float>& network, const CheckpointMetadata& metadata,
                    const std::filesystem::path& path) {
  const auto bytes = SerializeCheckpoint(network, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  FileSource src(path);
  return ReadAll(src);
}

CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path) {
  FileSource src(path);
  return ReadHeader(src).header;
}

}  // namespace kws
