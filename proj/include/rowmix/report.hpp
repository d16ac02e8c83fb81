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

// Run reports: one JSON record per line. The first record is always
// {"type": "meta", ...}. Latencies are reported in milliseconds.

#include <string>
#include <vector>

#include "json.hpp"

namespace rowmix::report {

inline constexpr const char* kVersion = "0.1.0";

class Report {
 public:
  Report() = default;
  Report(const std::string& command, const std::string& config_hash, std::uint64_t seed);

  void add(nlohmann::json record);
  void metric(const std::string& name, double value);

  const nlohmann::json& meta() const { return meta_; }
  const std::vector<nlohmann::json>& records() const { return records_; }
  /// Records whose "type" matches.
  std::vector<nlohmann::json> of_type(const std::string& type) const;

  std::string to_jsonl() const;
  /// Throws IoError on malformed input.
  static Report from_jsonl(const std::string& text);

  /// Fixed-width table laid out like the usual accuracy / throughput /
  /// latency comparison, followed by per-layer scheme counts.
  std::string summary() const;

  friend bool operator==(const Report&, const Report&) = default;

 private:
  nlohmann::json meta_;
  std::vector<nlohmann::json> records_;
};

}  // namespace rowmix::report
