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

#include "kws/error.h"

namespace kws {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotRiff: return "NotRiff";
    case ErrorCode::kUnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::kUnsupportedChannels: return "UnsupportedChannels";
    case ErrorCode::kUnsupportedSampleRate: return "UnsupportedSampleRate";
    case ErrorCode::kMalformedWav: return "MalformedWav";
    case ErrorCode::kMissingSplitLists: return "MissingSplitLists";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyNoisePool: return "EmptyNoisePool";
    case ErrorCode::kBadWindowLength: return "BadWindowLength";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kStaleTrace: return "StaleTrace";
    case ErrorCode::kEmptyTrainingSplit: return "EmptyTrainingSplit";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kDuplicateChannel: return "DuplicateChannel";
    case ErrorCode::kChannelOutOfRange: return "ChannelOutOfRange";
    case ErrorCode::kCodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::kBadGestureTable: return "BadGestureTable";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kSpecMismatch: return "SpecMismatch";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kTrailingData: return "TrailingData";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace kws
