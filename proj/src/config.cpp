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

#include "rowmix/config.hpp"

#include <cstdio>
#include <set>

#include "rowmix/errors.hpp"
#include "rowmix/model_file.hpp"

namespace rowmix::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("'" + std::string(key) + "' in " + where + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

json load_json(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace

hw::HwProfile parse_profile(const json& doc) {
  check_keys(doc, {"name", "lut_lanes", "dsp_lanes", "clock_hz", "dsp_cost8", "fixed_overhead_s",
                   "reserved8_share"},
             "profile");
  hw::HwProfile p;
  const std::string w = "profile";
  p.name = get<std::string>(doc, "name", p.name, w);
  p.lut_lanes = get<double>(doc, "lut_lanes", p.lut_lanes, w);
  p.dsp_lanes = get<double>(doc, "dsp_lanes", p.dsp_lanes, w);
  p.clock_hz = get<double>(doc, "clock_hz", p.clock_hz, w);
  p.dsp_cost8 = get<double>(doc, "dsp_cost8", p.dsp_cost8, w);
  p.fixed_overhead_s = get<double>(doc, "fixed_overhead_s", p.fixed_overhead_s, w);
  p.reserved8_share = get<double>(doc, "reserved8_share", p.reserved8_share, w);
  p.validate();
  return p;
}

json profile_to_json(const hw::HwProfile& p) {
  return {{"name", p.name},           {"lut_lanes", p.lut_lanes},
          {"dsp_lanes", p.dsp_lanes}, {"clock_hz", p.clock_hz},
          {"dsp_cost8", p.dsp_cost8}, {"fixed_overhead_s", p.fixed_overhead_s},
          {"reserved8_share", p.reserved8_share}};
}

hw::HwProfile load_profile(const std::filesystem::path& path) { return parse_profile(load_json(path)); }

std::pair<std::vector<hw::Anchor>, hw::HwProfile> parse_anchors(const json& doc) {
  check_keys(doc, {"device", "clock_hz", "dsp_cost8", "reserved8_share", "anchors"}, "anchors");
  hw::HwProfile base;
  base.name = get<std::string>(doc, "device", base.name, "anchors");
  base.clock_hz = get<double>(doc, "clock_hz", base.clock_hz, "anchors");
  base.dsp_cost8 = get<double>(doc, "dsp_cost8", base.dsp_cost8, "anchors");
  base.reserved8_share = get<double>(doc, "reserved8_share", base.reserved8_share, "anchors");
  base.validate();
  std::vector<hw::Anchor> anchors;
  if (!doc.contains("anchors") || !doc.at("anchors").is_array())
    throw ConfigError("anchors document needs an 'anchors' array");
  for (const auto& a : doc.at("anchors")) {
    check_keys(a, {"ratio", "first_last_fixed8", "latency_s", "label"}, "anchor");
    hw::Anchor an;
    an.deployment.ratio = assign::SchemeRatio::parse(get<std::string>(a, "ratio", "", "anchor"));
    an.deployment.first_last_fixed8 = get<bool>(a, "first_last_fixed8", false, "anchor");
    an.latency_s = get<double>(a, "latency_s", 0.0, "anchor");
    an.label = get<std::string>(a, "label", "", "anchor");
    if (!(an.latency_s > 0.0)) throw ConfigError("anchor latency_s must be positive");
    anchors.push_back(std::move(an));
  }
  return {anchors, base};
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, {"seed", "ratio", "out_dir", "dataset", "model", "train", "checkpoint", "engine",
                   "profile", "shapes", "fixed8", "step", "anchors", "fit_shape", "report"},
             "config");
  RunConfig c;
  const std::string w = "config";
  c.seed = get<std::uint64_t>(doc, "seed", c.seed, w);
  if (doc.contains("ratio")) c.ratio = assign::SchemeRatio::parse(get<std::string>(doc, "ratio", "", w));
  if (doc.contains("out_dir")) c.out_dir = resolve(base_dir, get<std::string>(doc, "out_dir", "", w));

  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    check_keys(d, {"kind", "samples", "features", "classes", "center_spread", "noise", "seed",
                   "test_samples", "train_images", "train_labels", "test_images", "test_labels",
                   "limit"},
               "dataset");
    const std::string dw = "dataset";
    c.dataset.kind = get<std::string>(d, "kind", c.dataset.kind, dw);
    if (c.dataset.kind == "blobs") {
      auto& b = c.dataset.blobs;
      b.samples = get_count(d, "samples", b.samples, dw);
      b.features = get_count(d, "features", b.features, dw);
      b.classes = get_count(d, "classes", b.classes, dw);
      b.center_spread = get<double>(d, "center_spread", b.center_spread, dw);
      b.noise = get<double>(d, "noise", b.noise, dw);
      b.seed = get<std::uint64_t>(d, "seed", b.seed, dw);
      c.dataset.test_samples = get_count(d, "test_samples", c.dataset.test_samples, dw);
    } else if (c.dataset.kind == "idx") {
      for (const char* k : {"train_images", "train_labels", "test_images", "test_labels"})
        if (!d.contains(k)) throw ConfigError(std::string("idx dataset needs '") + k + "'");
      c.dataset.train_images = resolve(base_dir, d.at("train_images").get<std::string>());
      c.dataset.train_labels = resolve(base_dir, d.at("train_labels").get<std::string>());
      c.dataset.test_images = resolve(base_dir, d.at("test_images").get<std::string>());
      c.dataset.test_labels = resolve(base_dir, d.at("test_labels").get<std::string>());
      c.dataset.limit = get_count(d, "limit", 0, dw);
    } else {
      throw ConfigError("dataset kind must be 'blobs' or 'idx'");
    }
  }

  if (doc.contains("model")) {
    if (!doc.at("model").is_array()) throw ConfigError("model must be an array of layers");
    for (const auto& l : doc.at("model")) {
      check_keys(l, {"kind", "out", "kernel", "stride", "padding"}, "model layer");
      LayerSpec s;
      s.kind = nn::parse_layer_kind(get<std::string>(l, "kind", "", "model layer"));
      s.out = get_count(l, "out", 0, "model layer");
      s.kernel = get_count(l, "kernel", 0, "model layer");
      s.stride = get_count(l, "stride", 1, "model layer");
      s.padding = get_count(l, "padding", 0, "model layer");
      c.layers.push_back(s);
    }
  }

  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    check_keys(t, {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                   "activation_bits", "activation_clip", "input_clip", "quantize", "augment",
                   "crop_padding", "calibration_size", "power_iters", "power_tol"},
               "train");
    auto& tc = c.train;
    const std::string tw = "train";
    tc.epochs = get<int>(t, "epochs", tc.epochs, tw);
    tc.batch_size = get_count(t, "batch_size", tc.batch_size, tw);
    tc.learning_rate = get<double>(t, "learning_rate", tc.learning_rate, tw);
    tc.momentum = get<double>(t, "momentum", tc.momentum, tw);
    tc.weight_decay = get<double>(t, "weight_decay", tc.weight_decay, tw);
    tc.activation_bits = get<int>(t, "activation_bits", tc.activation_bits, tw);
    tc.activation_clip = get<double>(t, "activation_clip", tc.activation_clip, tw);
    tc.input_clip = get<double>(t, "input_clip", tc.input_clip, tw);
    tc.quantize = get<bool>(t, "quantize", tc.quantize, tw);
    tc.augment = get<bool>(t, "augment", tc.augment, tw);
    tc.crop_padding = get_count(t, "crop_padding", tc.crop_padding, tw);
    tc.calibration_size = get_count(t, "calibration_size", tc.calibration_size, tw);
    tc.power.max_iters = get<int>(t, "power_iters", tc.power.max_iters, tw);
    tc.power.tol = get<double>(t, "power_tol", tc.power.tol, tw);
  }
  c.train.seed = c.seed;
  c.train.validate();

  if (doc.contains("checkpoint")) c.checkpoint = resolve(base_dir, get<std::string>(doc, "checkpoint", "", w));
  c.engine = get<std::string>(doc, "engine", c.engine, w);
  if (doc.contains("profile")) {
    const auto& p = doc.at("profile");
    if (p.is_string()) c.profile_path = resolve(base_dir, p.get<std::string>());
    else c.profile = parse_profile(p);
  }
  c.shapes = get<std::string>(doc, "shapes", c.shapes, w);
  c.fixed8 = get<int>(doc, "fixed8", c.fixed8, w);
  c.step = get<int>(doc, "step", c.step, w);
  if (doc.contains("anchors")) {
    const auto& a = doc.at("anchors");
    std::tie(c.anchors, c.anchor_base) =
        parse_anchors(a.is_string() ? load_json(resolve(base_dir, a.get<std::string>())) : a);
  }
  c.fit_shape = get<bool>(doc, "fit_shape", c.fit_shape, w);
  if (doc.contains("report")) c.report = resolve(base_dir, get<std::string>(doc, "report", "", w));

  // The output location is not part of the run's identity.
  c.canonical = doc;
  c.canonical.erase("out_dir");
  c.canonical["seed"] = c.seed;
  c.canonical["ratio"] = c.ratio.to_string();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(load_json(path), path.parent_path());
}

nn::Model build_model(const RunConfig& config, const Shape& input_shape) {
  if (config.layers.empty()) throw ConfigError("config has no model layers");
  nn::Model m(input_shape);
  try {
    for (const auto& s : config.layers) {
      switch (s.kind) {
        case nn::LayerKind::Dense: m.dense(s.out); break;
        case nn::LayerKind::Conv2d: m.conv2d(s.out, s.kernel, s.stride, s.padding); break;
        case nn::LayerKind::ReLU: m.relu(); break;
        case nn::LayerKind::MaxPool: m.maxpool(s.kernel); break;
        case nn::LayerKind::AvgPool: m.avgpool(s.kernel); break;
        case nn::LayerKind::Flatten: m.flatten(); break;
      }
    }
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("model layers do not compose: ") + e.what());
  }
  m.activation() = {config.train.activation_bits, config.train.activation_clip,
                    config.train.input_clip};
  return m;
}

Splits load_datasets(const RunConfig& config) {
  if (config.dataset.kind == "blobs") {
    auto spec = config.dataset.blobs;
    spec.samples += config.dataset.test_samples;
    const auto all = make_blobs(spec);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < all.size(); ++i)
      (i < config.dataset.blobs.samples ? train_idx : test_idx).push_back(i);
    return {all.subset(train_idx), all.subset(test_idx)};
  }
  return {data::load_idx(config.dataset.train_images, config.dataset.train_labels, config.dataset.limit),
          data::load_idx(config.dataset.test_images, config.dataset.test_labels, config.dataset.limit)};
}

std::string config_hash(const json& canonical) {
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rowmix::config
