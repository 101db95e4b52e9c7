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

#ifndef KWS_CLASSES_H_
#define KWS_CLASSES_H_

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace kws {

// Output classes in network order. The numeric value is the output index.
enum class GestureClass : int {
  kZero = 0,
  kOne,
  kTwo,
  kThree,
  kFour,
  kFive,
  kOn,
  kOff,
  kUnknown,
};

inline constexpr std::size_t kNumClasses = 9;
inline constexpr std::size_t kNumKnownWords = 8;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "zero", "one", "two", "three", "four", "five", "on", "off", "unknown"};

inline constexpr std::string_view ClassName(GestureClass c) {
  return kClassNames[static_cast<std::size_t>(c)];
}

inline constexpr std::size_t ClassIndex(GestureClass c) {
  return static_cast<std::size_t>(c);
}

inline constexpr GestureClass ClassFromIndex(std::size_t i) {
  return static_cast<GestureClass>(static_cast<int>(i));
}

inline std::optional<GestureClass> ClassFromName(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return ClassFromIndex(i);
  }
  return std::nullopt;
}

}  // namespace kws

#endif  // KWS_CLASSES_H_
