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

#ifndef KWS_FEATURES_H_
#define KWS_FEATURES_H_

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "kws/audio.h"

namespace kws {

inline constexpr std::size_t kFeatureBins = 129;
inline constexpr std::size_t kFeatureFrames = 71;

struct StftSpec {
  std::size_t segment_length = 256;
  std::size_t hop = 224;
  double epsilon = 1e-10;

  std::size_t fft_bins() const { return segment_length / 2 + 1; }
  std::size_t frame_count(std::size_t samples) const {
    return samples < segment_length ? 0 : (samples - segment_length) / hop + 1;
  }
};

// Periodic Hann window of the given length.
std::vector<double> HannWindow(std::size_t length);

// Grid of bins x frames, stored bin-major: value(k, t) = values[k*frames + t].
// Bin-major storage is also the (height, width, 1) layout the network reads.
struct SpectrogramGrid {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;

  double at(std::size_t k, std::size_t t) const { return values[k * frames + t]; }
  double& at(std::size_t k, std::size_t t) { return values[k * frames + t]; }
};

struct PowerSpectrogram : SpectrogramGrid {};
struct LogSpectrogram : SpectrogramGrid {};

// In-place iterative radix-2 transform for one power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t size);
  std::size_t size() const { return size_; }
  void Transform(std::span<std::complex<double>> data) const;

 private:
  std::size_t size_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<std::complex<double>> twiddles_;
};

// Throws kBadWindowLength unless samples.size() == 16000.
PowerSpectrogram StftPower(std::span<const double> samples,
                           const StftSpec& spec = {});
PowerSpectrogram StftPower(const SampleWindow& window, const StftSpec& spec = {});

// ln(power + epsilon), elementwise.
LogSpectrogram LogCompress(const PowerSpectrogram& power, double epsilon);

LogSpectrogram ComputeFeatures(const SampleWindow& window);
LogSpectrogram ComputeFeatures(const AudioClip& clip);

// bins rows of frames comma-separated values; row k is frequency bin k.
void WriteFeaturesCsv(std::ostream& out, const SpectrogramGrid& grid);

}  // namespace kws

#endif  // KWS_FEATURES_H_
