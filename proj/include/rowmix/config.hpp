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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rowmix/assign.hpp"
#include "rowmix/data.hpp"
#include "rowmix/hw.hpp"
#include "rowmix/nn.hpp"
#include "rowmix/train.hpp"

namespace rowmix::config {

struct DatasetConfig {
  std::string kind = "blobs";  // "blobs" or "idx"
  data::BlobsSpec blobs;
  std::size_t test_samples = 500;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::size_t limit = 0;
};

struct LayerSpec {
  nn::LayerKind kind = nn::LayerKind::ReLU;
  std::size_t out = 0;  // dense features / conv channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  assign::SchemeRatio ratio{60, 35, 5};
  std::filesystem::path out_dir = "out";
  DatasetConfig dataset;
  std::vector<LayerSpec> layers;
  train::TrainConfig train;
  std::filesystem::path checkpoint;
  std::string engine = "qat-sim";

  std::optional<std::filesystem::path> profile_path;
  std::optional<hw::HwProfile> profile;
  std::string shapes = "resnet18";  // or "checkpoint"
  int fixed8 = 5;
  int step = 5;
  std::vector<hw::Anchor> anchors;
  hw::HwProfile anchor_base;
  bool fit_shape = false;
  std::filesystem::path report;

  /// Canonical form of the document after defaults are applied.
  nlohmann::json canonical;
};

/// Validates the schema (unknown keys are rejected) and fills defaults.
/// Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

hw::HwProfile parse_profile(const nlohmann::json& doc);
nlohmann::json profile_to_json(const hw::HwProfile& profile);
hw::HwProfile load_profile(const std::filesystem::path& path);

/// Anchor list: {"device", "clock_hz", "anchors": [{"ratio", "first_last_fixed8",
/// "latency_s", "label"}]}. Returns the anchors and a base profile carrying
/// the device name and clock.
std::pair<std::vector<hw::Anchor>, hw::HwProfile> parse_anchors(const nlohmann::json& doc);

/// Builds the model described by the config (weights left at zero).
nn::Model build_model(const RunConfig& config, const Shape& input_shape);

struct Splits {
  data::Dataset train;
  data::Dataset test;
};
Splits load_datasets(const RunConfig& config);

/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const nlohmann::json& canonical);

}  // namespace rowmix::config
