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

// Checkpoint file: "KWS1", u32 version, u32 header length, JSON header, then
// every parameter tensor as little-endian float32 in canonical order.

#ifndef KWS_CHECKPOINT_H_
#define KWS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/network.h"

namespace kws {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  int epochs_completed = 0;
  std::optional<double> best_val_accuracy;
  std::uint64_t seed = 17;
  bool operator==(const CheckpointMetadata&) const = default;
};

struct CheckpointHeader {
  NetworkSpec spec;
  CheckpointMetadata metadata;
  std::size_t payload_values = 0;
};

struct LoadedCheckpoint {
  Network<float> network;
  CheckpointMetadata metadata;
};

std::string SpecToJson(const NetworkSpec& spec);
// Throws kSpecMismatch on anything it cannot read back.
NetworkSpec SpecFromJson(const std::string& text);

std::vector<std::uint8_t> SerializeCheckpoint(const Network<float>& network,
                                              const CheckpointMetadata& metadata);

// Magic, version and spec are checked from the header alone, before any
// payload byte is read. Errors: kBadMagic, kUnsupportedVersion,
// kSpecMismatch, kTruncatedPayload, kTrailingData.
LoadedCheckpoint DeserializeCheckpoint(std::span<const std::uint8_t> bytes);

void SaveCheckpoint(const Network<float>& network, const CheckpointMetadata& metadata,
                    const std::filesystem::path& path);
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

// Reads and validates only the preamble and header.
CheckpointHeader ReadCheckpointHeader(const std::filesystem::path& path);

}  // namespace kws

#endif  // KWS_CHECKPOINT_H_
