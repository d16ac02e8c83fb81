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

// Model file layout:
//
//   "ROWMIX01"                    8 bytes
//   manifest length               uint64 little-endian
//   manifest                      JSON (sorted keys, no whitespace)
//   blob                          raw little-endian tensors
//
// The manifest lists layers with their geometry, assignment and, for every
// tensor, {"offset", "bytes", "shape", "dtype"} into the blob. Float tensors
// are "f32"; quantized codes are "i8", one byte per code. When present, the
// "quantized" section carries the frozen integer rows and their scales.

#include <filesystem>
#include <optional>
#include <string>

#include "rowmix/engine.hpp"
#include "rowmix/nn.hpp"

namespace rowmix::io {

struct ModelFile {
  nn::Model model;
  std::optional<engine::QuantizedModel> quantized;
};

std::string encode_model(const ModelFile& file);
/// Throws IoError on malformed input.
ModelFile decode_model(const std::string& bytes);

/// Writes to a temporary sibling and renames it into place.
void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

/// Reads a whole file; IoError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Write-then-rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace rowmix::io
