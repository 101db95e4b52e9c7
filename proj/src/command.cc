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

#include "kws/command.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kws/error.h"

namespace kws {
namespace {

using nlohmann::json;

constexpr std::int64_t kMaxCode = 65535;

template <typename T>
Classification ArgMaxOf(std::span<const T> p) {
  if (p.size() != kNumClasses) {
    throw Error(ErrorCode::kShapeMismatch, "expected 9 class scores");
  }
  Classification c;
  std::size_t best = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    c.probabilities[k] = static_cast<double>(p[k]);
    if (p[k] > p[best]) best = k;
  }
  c.label = ClassFromIndex(best);
  return c;
}

FingerTrajectory RowFromJson(const json& j, const std::string& word) {
  if (!j.is_array() || j.size() != kNumFingers) {
    throw Error(ErrorCode::kBadGestureTable, word + ": expected 5 values");
  }
  std::array<double, kNumFingers> v{};
  for (std::size_t f = 0; f < kNumFingers; ++f) {
    if (!j[f].is_number()) throw Error(ErrorCode::kBadGestureTable, word + ": not a number");
    v[f] = j[f].get<double>();
  }
  FingerTrajectory t;
  t.values = v;
  return t;
}

}  // namespace

FingerTrajectory FingerTrajectory::Make(std::array<double, kNumFingers> values) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "trajectory value outside [0, 1]");
    }
  }
  FingerTrajectory t;
  t.values = values;
  return t;
}

GestureTable GestureTable::Default() {
  GestureTable t;
  t.rows = {
      FingerTrajectory{{1, 1, 1, 1, 1}},  // zero: fist
      FingerTrajectory{{1, 0, 1, 1, 1}},  // one
      FingerTrajectory{{1, 0, 0, 1, 1}},  // two
      FingerTrajectory{{1, 0, 0, 0, 1}},  // three
      FingerTrajectory{{1, 0, 0, 0, 0}},  // four
      FingerTrajectory{{0, 0, 0, 0, 0}},  // five: open hand
      FingerTrajectory{{0, 0, 0, 0, 0}},  // on
      FingerTrajectory{{1, 1, 1, 1, 1}},  // off
  };
  return t;
}

void GestureTable::Validate() const {
  for (std::size_t w = 0; w < kNumKnownWords; ++w) {
    for (double v : rows[w].values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::kBadGestureTable,
                    std::string(kClassNames[w]) + ": value outside [0, 1]");
      }
    }
  }
  std::array<bool, kDacChannels> used{};
  for (int ch : channel_map) {
    if (ch < 0 || ch >= static_cast<int>(kDacChannels)) {
      throw Error(ErrorCode::kBadGestureTable, "channel outside 0-7");
    }
    if (used[ch]) throw Error(ErrorCode::kBadGestureTable, "channel used twice");
    used[ch] = true;
  }
  for (double f : max_fraction) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw Error(ErrorCode::kBadGestureTable, "max_fraction outside (0, 1]");
    }
  }
}

GestureTable GestureTable::FromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadGestureTable, e.what());
  }
  if (!j.is_object() || !j.contains("words") || !j["words"].is_object()) {
    throw Error(ErrorCode::kBadGestureTable, "missing \"words\" object");
  }
  GestureTable t = Default();
  const json& words = j["words"];
  if (words.size() != kNumKnownWords) {
    throw Error(ErrorCode::kBadGestureTable, "expected exactly 8 word rows");
  }
  for (std::size_t w = 0; w < kNumKnownWords; ++w) {
    const std::string name(kClassNames[w]);
    if (!words.contains(name)) throw Error(ErrorCode::kBadGestureTable, "missing row " + name);
    t.rows[w] = RowFromJson(words[name], name);
  }
  if (j.contains("channel_map")) {
    const json& cm = j["channel_map"];
    if (!cm.is_object() || cm.size() != kNumFingers) {
      throw Error(ErrorCode::kBadGestureTable, "channel_map needs the five fingers");
    }
    for (std::size_t f = 0; f < kNumFingers; ++f) {
      const std::string finger(kFingerNames[f]);
      if (!cm.contains(finger) || !cm[finger].is_number_integer()) {
        throw Error(ErrorCode::kBadGestureTable, "channel_map: bad entry for " + finger);
      }
      t.channel_map[f] = cm[finger].get<int>();
    }
  }
  if (j.contains("max_fraction")) {
    const json& mf = j["max_fraction"];
    if (!mf.is_array() || mf.size() != kDacChannels) {
      throw Error(ErrorCode::kBadGestureTable, "max_fraction needs 8 values");
    }
    for (std::size_t c = 0; c < kDacChannels; ++c) {
      if (!mf[c].is_number()) throw Error(ErrorCode::kBadGestureTable, "max_fraction");
      t.max_fraction[c] = mf[c].get<double>();
    }
  }
  t.Validate();
  return t;
}

GestureTable GestureTable::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return FromJson(ss.str());
}

std::string GestureTable::ToJson() const {
  json j;
  j["words"] = json::object();
  for (std::size_t w = 0; w < kNumKnownWords; ++w) {
    j["words"][std::string(kClassNames[w])] = rows[w].values;
  }
  j["channel_map"] = json::object();
  for (std::size_t f = 0; f < kNumFingers; ++f) {
    j["channel_map"][std::string(kFingerNames[f])] = channel_map[f];
  }
  j["max_fraction"] = max_fraction;
  return j.dump(2);
}

Classification ClassifyProbabilities(std::span<const double> probabilities) {
  return ArgMaxOf(probabilities);
}

Classification ClassifyProbabilities(std::span<const float> probabilities) {
  return ArgMaxOf(probabilities);
}

Classification Classify(const Network<float>& network, const LogSpectrogram& features) {
  const auto probs = network.Infer(Batch<float>{ToInputTensor<float>(features)});
  return ClassifyProbabilities(std::span<const float>(probs.front()));
}

std::optional<FingerTrajectory> LookupTrajectory(const GestureTable& table,
                                                 GestureClass label) {
  if (label == GestureClass::kUnknown) return std::nullopt;
  return table.rows[ClassIndex(label)];
}

std::vector<ChannelCode> TrajectoryToCodes(const FingerTrajectory& trajectory,
                                           std::span<const int> channel_map,
                                           std::span<const double> max_fraction) {
  if (channel_map.size() != kNumFingers) {
    throw Error(ErrorCode::kInvalidArgument, "channel map needs 5 entries");
  }
  std::array<bool, kDacChannels> used{};
  for (int ch : channel_map) {
    if (ch < 0 || ch >= static_cast<int>(kDacChannels)) {
      throw Error(ErrorCode::kChannelOutOfRange, "channel " + std::to_string(ch));
    }
    if (used[ch]) throw Error(ErrorCode::kDuplicateChannel, "channel " + std::to_string(ch));
    used[ch] = true;
  }
  if (max_fraction.size() != kDacChannels) {
    throw Error(ErrorCode::kInvalidArgument, "max_fraction needs 8 entries");
  }
  std::vector<ChannelCode> codes;
  codes.reserve(kNumFingers);
  for (std::size_t f = 0; f < kNumFingers; ++f) {
    const double v = trajectory.values[f];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "trajectory value outside [0, 1]");
    }
    const int ch = channel_map[f];
    const double frac = max_fraction[ch];
    if (!(frac > 0.0 && frac <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "max_fraction outside (0, 1]");
    }
    codes.push_back({ch, static_cast<std::int64_t>(std::llround(v * frac * kMaxCode))});
  }
  return codes;
}

std::vector<DacFrame> EncodeDacFrames(std::span<const ChannelCode> codes) {
  std::vector<DacFrame> frames;
  frames.reserve(codes.size());
  for (const ChannelCode& c : codes) {
    if (c.channel < 0 || c.channel >= static_cast<int>(kDacChannels)) {
      throw Error(ErrorCode::kChannelOutOfRange, "channel " + std::to_string(c.channel));
    }
    if (c.code < 0 || c.code > kMaxCode) {
      throw Error(ErrorCode::kCodeOutOfRange, "code " + std::to_string(c.code));
    }
    frames.push_back({static_cast<std::uint8_t>(0x30 | c.channel),
                      static_cast<std::uint8_t>(c.code >> 8),
                      static_cast<std::uint8_t>(c.code & 0xFF)});
  }
  return frames;
}

Decision MakeDecision(std::int64_t t_ms, const Classification& c,
                      const GestureTable& table) {
  Decision d;
  d.t_ms = t_ms;
  d.label = c.label;
  d.probability = c.probability();
  d.trajectory = LookupTrajectory(table, c.label);
  if (d.trajectory) {
    const auto codes = TrajectoryToCodes(*d.trajectory, table.channel_map, table.max_fraction);
    d.frames = EncodeDacFrames(codes);
  }
  return d;
}

std::string DecisionToJson(const Decision& d) {
  // Key order is part of the output format.
  nlohmann::ordered_json j;
  j["t_ms"] = d.t_ms;
  j["class"] = std::string(ClassName(d.label));
  j["prob"] = d.probability;
  j["trajectory"] = d.trajectory ? nlohmann::ordered_json(d.trajectory->values)
                                 : nlohmann::ordered_json(nullptr);
  j["frames"] = nlohmann::ordered_json::array();
  for (const DacFrame& f : d.frames) j["frames"].push_back(f);
  return j.dump();
}

void StreamConfig::Validate() const {
  if (hop_ms <= 0) throw Error(ErrorCode::kInvalidArgument, "hop_ms must be > 0");
  if (!(decision_threshold > 0.0 && decision_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be in (0, 1]");
  }
  if (refractory_ms < hop_ms) {
    throw Error(ErrorCode::kInvalidArgument, "refractory_ms must be >= hop_ms");
  }
}

WindowScorer NetworkScorer(const Network<float>& network) {
  return [&network](const SampleWindow& w) {
    return Classify(network, ComputeFeatures(w)).probabilities;
  };
}

StreamDecoder::StreamDecoder(WindowScorer scorer, GestureTable table, StreamConfig config)
    : scorer_(std::move(scorer)), table_(std::move(table)), config_(config) {
  config_.Validate();
  table_.Validate();
  hop_samples_ = static_cast<std::size_t>(config_.hop_ms) * (kSampleRateHz / 1000);
}

std::vector<Decision> StreamDecoder::Push(std::span<const double> samples) {
  // A hop longer than the window leaves a gap of samples nobody looks at.
  const std::size_t skipped = std::min(skip_, samples.size());
  skip_ -= skipped;
  buffer_.insert(buffer_.end(), samples.begin() + static_cast<std::ptrdiff_t>(skipped),
                 samples.end());
  std::vector<Decision> out;
  std::size_t consumed = 0;
  while (consumed + kWindowSamples <= buffer_.size()) {
    const auto first = buffer_.begin() + static_cast<std::ptrdiff_t>(consumed);
    SampleWindow window(std::vector<double>(first, first + kWindowSamples));
    const std::int64_t end_sample =
        buffer_start_ + static_cast<std::int64_t>(consumed + kWindowSamples);
    const std::int64_t t_ms = end_sample * 1000 / kSampleRateHz;
    ++windows_evaluated_;

    const auto probs = scorer_(window);
    const Classification c = ClassifyProbabilities(std::span<const double>(probs));
    const bool confident = c.probability() >= config_.decision_threshold;
    const bool known = c.label != GestureClass::kUnknown;
    const bool rested = !last_emit_ms_ || t_ms - *last_emit_ms_ >= config_.refractory_ms;
    if (confident && known && rested) {
      out.push_back(MakeDecision(t_ms, c, table_));
      last_emit_ms_ = t_ms;
    }
    consumed += hop_samples_;
  }
  // Keep everything from the next window offset on.
  const std::size_t drop = std::min(consumed, buffer_.size());
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(drop));
  buffer_start_ += static_cast<std::int64_t>(consumed);
  skip_ = consumed - drop;
  return out;
}

std::vector<Decision> StreamDecode(std::span<const double> samples,
                                   const Network<float>& network,
                                   const GestureTable& table,
                                   const StreamConfig& config) {
  StreamDecoder decoder(NetworkScorer(network), table, config);
  return decoder.Push(samples);
}

}  // namespace kws
