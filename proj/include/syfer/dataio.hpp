// Copyright 2026 The Syfer Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "syfer/rng.hpp"
#include "syfer/tensor.hpp"

namespace syfer {

// Named collection of dense little-endian arrays; the container behind every
// dataset, key, and checkpoint file.
//
// On disk: bytes 0-7 hold a little-endian u64 header length L, bytes
// 8..8+L a UTF-8 JSON object mapping name -> {dtype, shape, offset, nbytes}
// (offset relative to the payload section that follows the header), then the
// payload itself. Round-trips are bitwise.
class TensorStore {
 public:
  enum class Dtype { F32, U32 };
  struct Entry {
    Dtype dtype;
    Shape shape;
    std::vector<float> f32;
    std::vector<uint32_t> u32;
  };

  void put_f32(const std::string& name, Tensor t);
  void put_u32(const std::string& name, std::vector<uint32_t> v, Shape shape);
  bool contains(const std::string& name) const;
  const Tensor get_f32(const std::string& name) const;
  const std::vector<uint32_t>& get_u32(const std::string& name) const;
  Shape shape_of(const std::string& name) const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  size_t size() const { return entries_.size(); }

  // True when every name starts with one of the given prefixes.
  bool all_names_under(const std::vector<std::string>& prefixes) const;

  std::vector<uint8_t> serialize() const;
  static TensorStore deserialize(const std::vector<uint8_t>& bytes);

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Synthetic data

// Stands in for the X-ray corpora: per-image random smooth texture (so every
// instance carries a strong signature for re-identification work) plus a
// label-defining feature.
struct SyntheticSpec {
  int64_t n = 256;
  int64_t height = 32;
  int64_t width = 32;
  uint64_t seed = 1;
  std::string task_rule = "bright-blob-presence";  // or "stripe-orientation"
  int texture_waves = 4;
  double texture_contrast_min = 0.25;
  double texture_contrast_max = 1.0;
};

struct Dataset {
  Tensor images;                 // [n, H, W], values in [0, 1]
  std::vector<uint32_t> labels;  // 1-based class ids

  int64_t size() const { return images.dim(0); }
  Dataset subset(const std::vector<int64_t>& indices) const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

struct SplitIndices {
  std::vector<int64_t> train, dev, test;
};

// Stratified split by label; ratios must sum to 1.
SplitIndices split_dataset(const Dataset& ds, const std::vector<double>& ratios,
                           Rng& rng);

// Pair every positive (class 2) with a distinct uniformly sampled negative
// (class 1); returns the kept indices in original order.
std::vector<int64_t> class_balance(const std::vector<uint32_t>& labels,
                                   Rng& rng);

// ---------------------------------------------------------------------------
// Image export

// 8-bit binary PGM (P5); values clamp-mapped [0,1] -> [0,255] with
// round-half-even.
void write_pgm(const std::string& path, const float* pixels, int64_t h,
               int64_t w);
void export_images(const Tensor& images, const std::string& dir);

}  // namespace syfer
