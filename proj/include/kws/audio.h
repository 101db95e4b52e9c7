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

// Audio ingest: WAV decoding, one-second windows, the speech-commands
// directory index and background-noise mixing.

#ifndef KWS_AUDIO_H_
#define KWS_AUDIO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/classes.h"

namespace kws {

inline constexpr int kSampleRateHz = 16000;
inline constexpr std::size_t kWindowSamples = 16000;
inline constexpr double kPcmScale = 1.0 / 32768.0;

struct AudioClip {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = kSampleRateHz;
};

// Exactly kWindowSamples values, each in [-1, 1].
class SampleWindow {
 public:
  SampleWindow() : values_(kWindowSamples, 0.0) {}
  // Throws kInvalidArgument when the length or range invariant fails.
  explicit SampleWindow(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  bool operator==(const SampleWindow&) const = default;

 private:
  std::vector<double> values_;
};

// Strict 16 kHz / mono / 16-bit PCM decoder. Unknown chunks are skipped.
AudioClip DecodeWav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> EncodeWav(const AudioClip& clip);

AudioClip ReadWavFile(const std::filesystem::path& path);
void WriteWavFile(const std::filesystem::path& path, const AudioClip& clip);

// v / 32768, zero-padded or head-truncated to one second.
SampleWindow ToWindow(const AudioClip& clip);

enum class Split { kTrain, kVal, kTest };
std::string_view SplitName(Split split);

struct DatasetEntry {
  std::string relative_path;  // "<word>/<file>.wav", forward slashes
  GestureClass label;
  Split split;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
  std::vector<std::string> noise_files;  // relative to root

  std::filesystem::path FullPath(const std::string& relative) const {
    return root / relative;
  }
  std::vector<DatasetEntry> EntriesFor(Split split) const;
};

std::vector<std::string> DefaultKnownWords();

// Entries are sorted by relative path so the index is independent of
// directory iteration order.
DatasetIndex IndexDataset(const std::filesystem::path& root,
                          const std::vector<std::string>& known_words =
                              DefaultKnownWords());

// Per split, Unknown entries are cut to the mean count of the 8 known words.
DatasetIndex SubsampleUnknown(const DatasetIndex& index, std::uint64_t seed);

class NoisePool {
 public:
  NoisePool() = default;
  explicit NoisePool(std::vector<std::vector<double>> clips);

  bool empty() const { return clips_.empty(); }
  std::size_t size() const { return clips_.size(); }
  const std::vector<double>& clip(std::size_t i) const { return clips_[i]; }

 private:
  std::vector<std::vector<double>> clips_;
};

NoisePool LoadNoisePool(const DatasetIndex& index);

// out[i] = clamp(window[i] + gain * crop[i], -1, 1); crop and clip choice are
// drawn from offset_seed.
SampleWindow MixNoise(const SampleWindow& window, const NoisePool& pool,
                      double gain, std::uint64_t offset_seed);

}  // namespace kws

#endif  // KWS_AUDIO_H_
