/*
 * Copyright (c) 2026 The rowmix Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rowmix/tensor.hpp"

namespace rowmix::data {

struct Dataset {
  Tensor inputs;            // (N, sample shape...)
  std::vector<int> labels;  // N entries in [0, classes)
  std::size_t classes = 0;
  bool image = false;       // (N, C, H, W) inputs eligible for flip/crop augmentation

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  /// Rows `indices` gathered into a new dataset.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// First `count` samples (or all if fewer).
  Dataset head(std::size_t count) const;
};

struct BlobsSpec {
  std::size_t samples = 1000;
  std::size_t features = 16;
  std::size_t classes = 4;
  double center_spread = 3.0;  // stddev of the class centers
  double noise = 1.0;          // stddev around a center
  std::uint64_t seed = 1;
};

/// Seeded Gaussian blobs: class centers drawn once, samples assigned to
/// classes round-robin so the set is balanced.
Dataset make_blobs(const BlobsSpec& spec);

/// Reads an IDX image file (magic 0x00000803, uint8) and its IDX label file
/// (magic 0x00000801). Pixels are scaled to [0, 1]; the result is
/// (N, 1, rows, cols). Throws IoError on unreadable or malformed files.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit = 0);

/// Writes the pair back in IDX format (pixels rounded from [0, 1] to uint8).
void save_idx(const Dataset& dataset, const std::filesystem::path& images,
              const std::filesystem::path& labels);

}  // namespace rowmix::data
