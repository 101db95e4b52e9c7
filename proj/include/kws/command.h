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

// From class probabilities to hand commands: argmax decision, gesture lookup,
// DAC codes and I2C frames, and the sliding-window stream decoder.

#ifndef KWS_COMMAND_H_
#define KWS_COMMAND_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/audio.h"
#include "kws/classes.h"
#include "kws/features.h"
#include "kws/network.h"

namespace kws {

inline constexpr std::size_t kNumFingers = 5;
inline constexpr std::size_t kDacChannels = 8;
inline constexpr std::array<std::string_view, kNumFingers> kFingerNames = {
    "thumb", "index", "middle", "ring", "little"};

// 0 = full relaxation, 1 = full contraction; thumb to little.
struct FingerTrajectory {
  std::array<double, kNumFingers> values{};

  // Throws kInvalidArgument if any value is outside [0, 1].
  static FingerTrajectory Make(std::array<double, kNumFingers> values);
  bool operator==(const FingerTrajectory&) const = default;
};

// One row per known word plus the finger-to-channel wiring and per-channel
// voltage ceiling. "unknown" deliberately has no row.
struct GestureTable {
  std::array<FingerTrajectory, kNumKnownWords> rows{};
  std::array<int, kNumFingers> channel_map{0, 1, 2, 3, 4};
  std::array<double, kDacChannels> max_fraction{1, 1, 1, 1, 1, 1, 1, 1};

  static GestureTable Default();
  // JSON: {"words": {"zero": [5 values], ...}, "channel_map": {"thumb": 0, ...},
  // "max_fraction": [8 values]}. channel_map and max_fraction are optional.
  static GestureTable FromJson(const std::string& text);
  static GestureTable Load(const std::filesystem::path& path);
  std::string ToJson() const;

  // Throws kBadGestureTable on out-of-range values, duplicate channels or a
  // max_fraction outside (0, 1].
  void Validate() const;
};

struct Classification {
  GestureClass label = GestureClass::kZero;
  std::array<double, kNumClasses> probabilities{};
  double probability() const { return probabilities[ClassIndex(label)]; }
};

// Argmax over a probability (or logit) vector, lowest index on ties.
Classification ClassifyProbabilities(std::span<const double> probabilities);
Classification ClassifyProbabilities(std::span<const float> probabilities);
Classification Classify(const Network<float>& network, const LogSpectrogram& features);

// Empty optional = no command; the hand holds its pose.
std::optional<FingerTrajectory> LookupTrajectory(const GestureTable& table,
                                                 GestureClass label);

struct ChannelCode {
  int channel = 0;
  std::int64_t code = 0;
  bool operator==(const ChannelCode&) const = default;
};

// code = round(value * max_fraction[channel] * 65535), one entry per finger.
std::vector<ChannelCode> TrajectoryToCodes(
    const FingerTrajectory& trajectory, std::span<const int> channel_map,
    std::span<const double> max_fraction);

using DacFrame = std::array<std::uint8_t, 3>;

// [0x30 | channel, code >> 8, code & 0xFF] per entry.
std::vector<DacFrame> EncodeDacFrames(std::span<const ChannelCode> codes);

struct Decision {
  std::int64_t t_ms = 0;
  GestureClass label = GestureClass::kUnknown;
  double probability = 0.0;
  std::optional<FingerTrajectory> trajectory;
  std::vector<DacFrame> frames;
};

// Attaches trajectory and frames for the classification's label.
Decision MakeDecision(std::int64_t t_ms, const Classification& c,
                      const GestureTable& table);

// Single-line JSON; "trajectory" is null for unknown.
std::string DecisionToJson(const Decision& decision);

struct StreamConfig {
  int hop_ms = 500;
  double decision_threshold = 0.7;
  int refractory_ms = 1000;

  // Throws kInvalidArgument unless hop_ms > 0, threshold in (0, 1] and
  // refractory_ms >= hop_ms.
  void Validate() const;
};

// Probabilities for one second of audio.
using WindowScorer = std::function<std::array<double, kNumClasses>(const SampleWindow&)>;

WindowScorer NetworkScorer(const Network<float>& network);

// Evaluates a one-second window every hop and emits a Decision for a known
// class whose probability reaches the threshold, at least refractory_ms after
// the previous emission. t_ms is the end of the window.
class StreamDecoder {
 public:
  StreamDecoder(WindowScorer scorer, GestureTable table, StreamConfig config);

  // Feeds samples in [-1, 1]; returns the decisions made by any windows the
  // new samples complete.
  std::vector<Decision> Push(std::span<const double> samples);

  std::size_t windows_evaluated() const { return windows_evaluated_; }

 private:
  WindowScorer scorer_;
  GestureTable table_;
  StreamConfig config_;
  std::size_t hop_samples_;
  std::vector<double> buffer_;    // starts at the next window offset
  std::int64_t buffer_start_ = 0;  // absolute sample index of buffer_[0]
  std::size_t skip_ = 0;
  std::size_t windows_evaluated_ = 0;
  std::optional<std::int64_t> last_emit_ms_;
};

std::vector<Decision> StreamDecode(std::span<const double> samples,
                                   const Network<float>& network,
                                   const GestureTable& table,
                                   const StreamConfig& config);

}  // namespace kws

#endif  // KWS_COMMAND_H_
