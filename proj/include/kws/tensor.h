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

#ifndef KWS_TENSOR_H_
#define KWS_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kws/error.h"

namespace kws {

struct Shape3 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape3&) const = default;
  std::string ToString() const {
    return std::to_string(height) + " x " + std::to_string(width) + " x " +
           std::to_string(channels);
  }
};

// Dense (height, width, channel) tensor, channel fastest.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor3(std::size_t h, std::size_t w, std::size_t c, T fill = T(0))
      : Tensor3(Shape3{h, w, c}, fill) {}
  Tensor3(Shape3 shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_.ToString());
    }
  }

  const Shape3& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t c) const {
    return (i * shape_.width + j) * shape_.channels + c;
  }
  T& at(std::size_t i, std::size_t j, std::size_t c) { return data_[offset(i, j, c)]; }
  const T& at(std::size_t i, std::size_t j, std::size_t c) const {
    return data_[offset(i, j, c)];
  }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  // Same data, new shape of equal size.
  void Reshape(Shape3 shape) {
    if (shape.size() != data_.size()) {
      throw Error(ErrorCode::kShapeMismatch, "reshape changes element count");
    }
    shape_ = shape;
  }

  bool operator==(const Tensor3&) const = default;

 private:
  Shape3 shape_;
  std::vector<T> data_;
};

template <typename T>
using Batch = std::vector<Tensor3<T>>;

}  // namespace kws

#endif  // KWS_TENSOR_H_
