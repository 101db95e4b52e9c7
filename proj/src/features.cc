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

#include "kws/features.h"

#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>

#include "kws/error.h"

namespace kws {

std::vector<double> HannWindow(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

Fft::Fft(std::size_t size) : size_(size) {
  if (size == 0 || (size & (size - 1)) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "FFT size must be a power of two");
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < size) ++bits;
  bit_reverse_.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    }
    bit_reverse_[i] = r;
  }
  twiddles_.resize(size / 2);
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(size);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void Fft::Transform(std::span<std::complex<double>> data) const {
  for (std::size_t i = 0; i < size_; ++i) {
    if (i < bit_reverse_[i]) std::swap(data[i], data[bit_reverse_[i]]);
  }
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::complex<double> t = twiddles_[j * step] * data[start + j + half];
        data[start + j + half] = data[start + j] - t;
        data[start + j] += t;
      }
    }
  }
}

PowerSpectrogram StftPower(std::span<const double> samples,
                           const StftSpec& spec) {
  if (samples.size() != kWindowSamples) {
    throw Error(ErrorCode::kBadWindowLength,
                "expected 16000 samples, got " + std::to_string(samples.size()));
  }
  if (spec.hop == 0 || spec.segment_length > samples.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bad STFT geometry");
  }
  static const Fft kDefaultFft(256);
  static const std::vector<double> kDefaultWindow = HannWindow(256);
  const bool is_default = spec.segment_length == 256;
  std::optional<Fft> custom_fft;
  std::vector<double> custom_window;
  if (!is_default) {
    custom_fft.emplace(spec.segment_length);
    custom_window = HannWindow(spec.segment_length);
  }
  const Fft& fft = is_default ? kDefaultFft : *custom_fft;
  const std::vector<double>& window = is_default ? kDefaultWindow : custom_window;

  PowerSpectrogram out;
  out.bins = spec.fft_bins();
  out.frames = spec.frame_count(samples.size());
  out.values.assign(out.bins * out.frames, 0.0);
  std::vector<std::complex<double>> buf(spec.segment_length);
  for (std::size_t t = 0; t < out.frames; ++t) {
    const std::size_t begin = t * spec.hop;
    for (std::size_t n = 0; n < spec.segment_length; ++n) {
      buf[n] = {samples[begin + n] * window[n], 0.0};
    }
    fft.Transform(buf);
    for (std::size_t k = 0; k < out.bins; ++k) out.at(k, t) = std::norm(buf[k]);
  }
  return out;
}

PowerSpectrogram StftPower(const SampleWindow& window, const StftSpec& spec) {
  return StftPower(window.values(), spec);
}

LogSpectrogram LogCompress(const PowerSpectrogram& power, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
  }
  LogSpectrogram out;
  out.bins = power.bins;
  out.frames = power.frames;
  out.values.resize(power.values.size());
  for (std::size_t i = 0; i < power.values.size(); ++i) {
    out.values[i] = std::log(power.values[i] + epsilon);
  }
  return out;
}

LogSpectrogram ComputeFeatures(const SampleWindow& window) {
  const StftSpec spec;
  return LogCompress(StftPower(window, spec), spec.epsilon);
}

LogSpectrogram ComputeFeatures(const AudioClip& clip) {
  return ComputeFeatures(ToWindow(clip));
}

void WriteFeaturesCsv(std::ostream& out, const SpectrogramGrid& grid) {
  const auto old_precision = out.precision(17);
  for (std::size_t k = 0; k < grid.bins; ++k) {
    for (std::size_t t = 0; t < grid.frames; ++t) {
      if (t) out << ',';
      out << grid.at(k, t);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace kws
