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

#include "kws/audio.h"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "kws/error.h"
#include "kws/random.h"

namespace kws {
namespace {

namespace fs = std::filesystem;

constexpr char kNoiseDir[] = "_background_noise_";

std::uint32_t ReadU32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t ReadU16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool HasTag(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

std::set<std::string> ReadListFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingSplitLists, path.string());
  std::set<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) names.insert(line);
  }
  return names;
}

bool IsWav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

}  // namespace

SampleWindow::SampleWindow(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.size() != kWindowSamples) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample window must hold 16000 values, got " +
                    std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "sample outside [-1, 1]");
    }
  }
}

AudioClip DecodeWav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !HasTag(bytes, 0, "RIFF") ||
      !HasTag(bytes, 8, "WAVE")) {
    throw Error(ErrorCode::kNotRiff, "missing RIFF/WAVE magic");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = ReadU32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (HasTag(bytes, pos, "fmt ")) {
      if (size < 16 || body + 16 > bytes.size()) {
        throw Error(ErrorCode::kMalformedWav, "short fmt chunk");
      }
      const std::uint16_t format = ReadU16(bytes, body);
      const std::uint16_t channels = ReadU16(bytes, body + 2);
      const std::uint32_t rate = ReadU32(bytes, body + 4);
      const std::uint16_t bits = ReadU16(bytes, body + 14);
      if (format != 1 || bits != 16) {
        throw Error(ErrorCode::kUnsupportedEncoding,
                    "format " + std::to_string(format) + ", " +
                        std::to_string(bits) + " bits");
      }
      if (channels != 1) {
        throw Error(ErrorCode::kUnsupportedChannels,
                    std::to_string(channels) + " channels");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRateHz)) {
        throw Error(ErrorCode::kUnsupportedSampleRate,
                    std::to_string(rate) + " Hz");
      }
      have_fmt = true;
    } else if (HasTag(bytes, pos, "data")) {
      if (!have_fmt) throw Error(ErrorCode::kMalformedWav, "data before fmt");
      if (body + size > bytes.size()) {
        throw Error(ErrorCode::kMalformedWav, "data chunk past end of file");
      }
      AudioClip clip;
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = static_cast<std::int16_t>(ReadU16(bytes, body + 2 * i));
      }
      return clip;
    }
    // Chunks are word aligned.
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::kMalformedWav, "no data chunk");
}

std::vector<std::uint8_t> EncodeWav(const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  PutU32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  PutU32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  PutU32(out, data_bytes);
  for (std::int16_t s : clip.samples) PutU16(out, static_cast<std::uint16_t>(s));
  return out;
}

AudioClip ReadWavFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return DecodeWav(bytes);
}

void WriteWavFile(const fs::path& path, const AudioClip& clip) {
  const auto bytes = EncodeWav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

SampleWindow ToWindow(const AudioClip& clip) {
  std::vector<double> values(kWindowSamples, 0.0);
  const std::size_t n = std::min(clip.samples.size(), kWindowSamples);
  for (std::size_t i = 0; i < n; ++i) values[i] = clip.samples[i] * kPcmScale;
  return SampleWindow(std::move(values));
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<DatasetEntry> DatasetIndex::EntriesFor(Split split) const {
  std::vector<DatasetEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

std::vector<std::string> DefaultKnownWords() {
  return {"zero", "one", "two", "three", "four", "five", "on", "off"};
}

DatasetIndex IndexDataset(const fs::path& root,
                          const std::vector<std::string>& known_words) {
  std::map<std::string, GestureClass> known;
  for (const auto& w : known_words) {
    auto c = ClassFromName(w);
    if (!c || *c == GestureClass::kUnknown) {
      throw Error(ErrorCode::kInvalidArgument, "not a command word: " + w);
    }
    known.emplace(w, *c);
  }
  const auto val = ReadListFile(root / "validation_list.txt");
  const auto test = ReadListFile(root / "testing_list.txt");

  DatasetIndex index;
  index.root = root;
  std::error_code ec;
  fs::directory_iterator words(root, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot list " + root.string());
  for (const auto& dir : words) {
    if (!dir.is_directory()) continue;
    const std::string word = dir.path().filename().string();
    const bool noise = word == kNoiseDir;
    for (const auto& file : fs::directory_iterator(dir.path())) {
      if (!file.is_regular_file() || !IsWav(file.path())) continue;
      std::string rel = word + "/" + file.path().filename().string();
      if (noise) {
        index.noise_files.push_back(std::move(rel));
        continue;
      }
      auto it = known.find(word);
      DatasetEntry entry{rel,
                         it == known.end() ? GestureClass::kUnknown : it->second,
                         Split::kTrain};
      if (val.count(rel)) {
        entry.split = Split::kVal;
      } else if (test.count(rel)) {
        entry.split = Split::kTest;
      }
      index.entries.push_back(std::move(entry));
    }
  }
  if (index.entries.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no labeled WAV files under " +
                                              root.string());
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) {
              return a.relative_path < b.relative_path;
            });
  std::sort(index.noise_files.begin(), index.noise_files.end());
  return index;
}

DatasetIndex SubsampleUnknown(const DatasetIndex& index, std::uint64_t seed) {
  if (index.entries.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "nothing to subsample");
  }
  std::vector<bool> keep(index.entries.size(), true);
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::size_t known = 0;
    std::vector<std::size_t> unknown;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      const auto& e = index.entries[i];
      if (e.split != split) continue;
      if (e.label == GestureClass::kUnknown) {
        unknown.push_back(i);
      } else {
        ++known;
      }
    }
    const std::size_t target = known / kNumKnownWords;
    if (unknown.size() <= target) continue;
    Rng rng(DeriveSeed(seed, Stream::kSubsample,
                       {static_cast<std::uint64_t>(split)}));
    rng.Shuffle(unknown);
    for (std::size_t k = target; k < unknown.size(); ++k) keep[unknown[k]] = false;
  }
  DatasetIndex out;
  out.root = index.root;
  out.noise_files = index.noise_files;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    if (keep[i]) out.entries.push_back(index.entries[i]);
  }
  return out;
}

NoisePool::NoisePool(std::vector<std::vector<double>> clips)
    : clips_(std::move(clips)) {
  for (const auto& c : clips_) {
    if (c.size() < kWindowSamples) {
      throw Error(ErrorCode::kInvalidArgument,
                  "noise clip shorter than one second");
    }
  }
}

NoisePool LoadNoisePool(const DatasetIndex& index) {
  std::vector<std::vector<double>> clips;
  for (const auto& rel : index.noise_files) {
    AudioClip clip = ReadWavFile(index.FullPath(rel));
    if (clip.samples.size() < kWindowSamples) continue;
    std::vector<double> v(clip.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = clip.samples[i] * kPcmScale;
    clips.push_back(std::move(v));
  }
  return NoisePool(std::move(clips));
}

SampleWindow MixNoise(const SampleWindow& window, const NoisePool& pool,
                      double gain, std::uint64_t offset_seed) {
  if (!(gain >= 0.0 && gain <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise gain outside [0, 1]");
  }
  if (gain == 0.0) return window;
  if (pool.empty()) throw Error(ErrorCode::kEmptyNoisePool, "no noise clips");
  Rng rng(offset_seed);
  const auto& noise = pool.clip(static_cast<std::size_t>(rng.Below(pool.size())));
  const auto offset = static_cast<std::size_t>(
      rng.Below(noise.size() - kWindowSamples + 1));
  std::vector<double> out(kWindowSamples);
  for (std::size_t i = 0; i < kWindowSamples; ++i) {
    out[i] = std::clamp(window[i] + gain * noise[offset + i], -1.0, 1.0);
  }
  return SampleWindow(std::move(out));
}

}  // namespace kws
