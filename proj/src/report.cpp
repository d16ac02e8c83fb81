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

#include "rowmix/report.hpp"

#include <cstdio>
#include <sstream>

#include "rowmix/errors.hpp"

namespace rowmix::report {

using nlohmann::json;

Report::Report(const std::string& command, const std::string& config_hash, std::uint64_t seed)
    : meta_{{"type", "meta"},
            {"command", command},
            {"config_hash", config_hash},
            {"seed", seed},
            {"version", kVersion}} {}

void Report::add(json record) {
  if (!record.contains("type")) throw ContractViolation("report records need a type");
  records_.push_back(std::move(record));
}

void Report::metric(const std::string& name, double value) {
  add({{"type", "metric"}, {"name", name}, {"value", value}});
}

std::vector<json> Report::of_type(const std::string& type) const {
  std::vector<json> out;
  for (const auto& r : records_)
    if (r.at("type") == type) out.push_back(r);
  return out;
}

std::string Report::to_jsonl() const {
  std::string out = meta_.dump() + "\n";
  for (const auto& r : records_) out += r.dump() + "\n";
  return out;
}

Report Report::from_jsonl(const std::string& text) {
  Report r;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError(std::string("bad report line: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type")) throw IoError("report record without a type");
    if (first) {
      if (j.at("type") != "meta") throw IoError("report must start with a meta record");
      r.meta_ = std::move(j);
      first = false;
    } else {
      r.records_.push_back(std::move(j));
    }
  }
  if (first) throw IoError("empty report");
  return r;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string Report::summary() const {
  std::ostringstream out;
  out << "rowmix " << meta_.value("version", "?") << "  command=" << meta_.value("command", "?")
      << "  config=" << meta_.value("config_hash", "?") << "  seed=" << meta_.value("seed", 0) << "\n\n";

  auto metric_value = [&](const std::string& name) -> std::string {
    for (const auto& r : records_)
      if (r.at("type") == "metric" && r.at("name") == name)
        return fmt("%.2f", r.at("value").get<double>() * (name.rfind("top", 0) == 0 ? 100.0 : 1.0));
    return "-";
  };
  std::string ratio = "-";
  for (const auto& r : records_)
    if (r.at("type") == "run") ratio = r.value("ratio", "-");

  out << pad("Method", 12) << pad("PoT-4:Fixed-4:Fixed-8", 23) << pad("Top-1 (%)", 11)
      << pad("Top-5 (%)", 11) << pad("Throughput (GOP/s)", 20) << "Latency (ms)\n";
  out << pad(meta_.value("command", "?"), 12) << pad(ratio, 23) << pad(metric_value("top1"), 11)
      << pad(metric_value("top5"), 11) << pad(metric_value("throughput_gops"), 20)
      << metric_value("latency_ms") << "\n";

  const auto sweep = of_type("sweep_point");
  if (!sweep.empty()) {
    out << "\n" << pad("ratio", 12) << pad("GOP/s", 12) << "latency (ms)\n";
    for (const auto& p : sweep)
      out << pad(p.at("ratio").get<std::string>(), 12)
          << pad(fmt("%.2f", p.at("throughput_gops").get<double>()), 12)
          << fmt("%.3f", p.at("latency_ms").get<double>()) << "\n";
  }
  const auto counts = of_type("layer_counts");
  if (!counts.empty()) {
    out << "\n" << pad("layer", 8) << pad("pot4", 8) << pad("fixed4", 8) << "fixed8\n";
    for (const auto& c : counts)
      out << pad(std::to_string(c.at("layer").get<int>()), 8)
          << pad(std::to_string(c.at("pot4").get<int>()), 8)
          << pad(std::to_string(c.at("fixed4").get<int>()), 8) << c.at("fixed8").get<int>() << "\n";
  }
  return out.str();
}

}  // namespace rowmix::report
