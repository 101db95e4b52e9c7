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

#ifndef KWS_ERROR_H_
#define KWS_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace kws {

enum class ErrorCode {
  // audio
  kNotRiff,
  kUnsupportedEncoding,
  kUnsupportedChannels,
  kUnsupportedSampleRate,
  kMalformedWav,
  kMissingSplitLists,
  kEmptyDataset,
  kEmptyNoisePool,
  // features
  kBadWindowLength,
  // network
  kShapeMismatch,
  kEmptyBatch,
  kStaleTrace,
  // training
  kEmptyTrainingSplit,
  kEmptySplit,
  // commands
  kDuplicateChannel,
  kChannelOutOfRange,
  kCodeOutOfRange,
  kBadGestureTable,
  // checkpoint
  kBadMagic,
  kUnsupportedVersion,
  kSpecMismatch,
  kTruncatedPayload,
  kTrailingData,
  // generic
  kIoError,
  kInvalidArgument,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure in the library surfaces as this exception; callers switch on
// code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kws

#endif  // KWS_ERROR_H_
