// Copyright 2026 The SAPALM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Block-structured vectors. A point x lives in a product space
// H = H_1 x ... x H_m; each factor is a contiguous slice of one flat
// double array. BlockLayout describes the partition, BlockVector owns
// the storage.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sapalm/error.hpp"

namespace sapalm {

// Partition of a flat array into m contiguous blocks.
class BlockLayout {
 public:
  BlockLayout() = default;

  explicit BlockLayout(std::vector<std::size_t> sizes)
      : sizes_(std::move(sizes)) {
    if (sizes_.empty()) throw StructuralError("layout needs at least 1 block");
    offsets_.reserve(sizes_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t s : sizes_) {
      if (s == 0) throw StructuralError("zero-sized block");
      offsets_.push_back(offsets_.back() + s);
    }
  }

  std::size_t block_count() const { return sizes_.size(); }
  std::size_t block_size(std::size_t j) const { return sizes_.at(j); }
  std::size_t block_offset(std::size_t j) const { return offsets_.at(j); }
  std::size_t total_size() const { return offsets_.empty() ? 0 : offsets_.back(); }

  // Flat index of coordinate i within block j.
  std::size_t flat_index(std::size_t j, std::size_t i) const {
    return block_offset(j) + i;
  }

  friend bool operator==(const BlockLayout& a, const BlockLayout& b) {
    return a.sizes_ == b.sizes_;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
};

// Flat double storage plus a layout. Copyable; copies are deep.
class BlockVector {
 public:
  BlockVector() = default;

  explicit BlockVector(BlockLayout layout)
      : layout_(std::move(layout)), data_(layout_.total_size(), 0.0) {}

  BlockVector(BlockLayout layout, std::vector<double> data)
      : layout_(std::move(layout)), data_(std::move(data)) {
    if (data_.size() != layout_.total_size())
      throw StructuralError("data size does not match layout");
  }

  const BlockLayout& layout() const { return layout_; }
  std::size_t block_count() const { return layout_.block_count(); }
  std::size_t block_size(std::size_t j) const { return layout_.block_size(j); }
  std::size_t size() const { return data_.size(); }

  std::span<double> block(std::size_t j) {
    return {data_.data() + layout_.block_offset(j), layout_.block_size(j)};
  }
  std::span<const double> block(std::size_t j) const {
    return {data_.data() + layout_.block_offset(j), layout_.block_size(j)};
  }

  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  // Scalar access shared with the concurrent iterate view, so numeric
  // kernels can be written once against either backing store.
  double load(std::size_t j, std::size_t i) const {
    return data_[layout_.flat_index(j, i)];
  }
  void store(std::size_t j, std::size_t i, double v) {
    data_[layout_.flat_index(j, i)] = v;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  // Copies values from another vector with an identical layout. Reuses the
  // existing buffer, so snapshot loops do not allocate.
  void copy_from(const BlockVector& other) {
    if (!(layout_ == other.layout_))
      throw StructuralError("copy_from: layout mismatch");
    data_ = other.data_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const BlockVector& a, const BlockVector& b) {
    return a.layout_ == b.layout_ && a.data_ == b.data_;
  }

 private:
  BlockLayout layout_;
  std::vector<double> data_;
};

// Squared Euclidean distance between two same-shaped vectors.
inline double squared_distance(const BlockVector& a, const BlockVector& b) {
  if (!(a.layout() == b.layout()))
    throw StructuralError("squared_distance: layout mismatch");
  double acc = 0.0;
  auto fa = a.flat();
  auto fb = b.flat();
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double d = fa[i] - fb[i];
    acc += d * d;
  }
  return acc;
}

inline double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace sapalm
