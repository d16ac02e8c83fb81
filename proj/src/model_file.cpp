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

#include "rowmix/model_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rowmix/errors.hpp"

namespace rowmix::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; add byte swapping for this target");

namespace {

constexpr char kMagic[8] = {'R', 'O', 'W', 'M', 'I', 'X', '0', '1'};

std::string format_name(quant::RowFormat f) {
  return std::string(quant::to_string(f.scheme)) + std::to_string(f.bits);
}

quant::RowFormat parse_format(const std::string& s) {
  if (s == "pot4") return quant::kPot4;
  if (s == "fixed4") return quant::kFixed4;
  if (s == "fixed8") return quant::kFixed8;
  throw IoError("unknown row format '" + s + "' in model file");
}

class BlobWriter {
 public:
  json add(const void* data, std::size_t bytes, const Shape& shape, const char* dtype) {
    json entry{{"offset", blob_.size()}, {"bytes", bytes}, {"shape", shape}, {"dtype", dtype}};
    blob_.append(static_cast<const char*>(data), bytes);
    return entry;
  }
  json add(const Tensor& t) { return add(t.data(), t.size() * sizeof(float), t.shape(), "f32"); }
  const std::string& blob() const { return blob_; }

 private:
  std::string blob_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string_view blob) : blob_(blob) {}

  std::string_view bytes(const json& entry, const char* dtype) const {
    if (entry.at("dtype").get<std::string>() != dtype) throw IoError("unexpected tensor dtype");
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto n = entry.at("bytes").get<std::size_t>();
    if (offset > blob_.size() || n > blob_.size() - offset) throw IoError("tensor runs past the blob");
    return blob_.substr(offset, n);
  }

  Tensor tensor(const json& entry) const {
    const auto raw = bytes(entry, "f32");
    Shape shape = entry.at("shape").get<Shape>();
    if (shape_size(shape) * sizeof(float) != raw.size()) throw IoError("tensor size does not match shape");
    std::vector<float> data(shape_size(shape));
    std::memcpy(data.data(), raw.data(), raw.size());
    return Tensor(std::move(shape), std::move(data));
  }

 private:
  std::string_view blob_;
};

json layer_manifest(const nn::Layer& l, BlobWriter& blob) {
  json j{{"kind", nn::to_string(l.kind)}};
  switch (l.kind) {
    case nn::LayerKind::Dense:
      j["in_features"] = l.in_features;
      j["out_features"] = l.out_features;
      break;
    case nn::LayerKind::Conv2d:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
      break;
    case nn::LayerKind::MaxPool:
    case nn::LayerKind::AvgPool:
      j["kernel"] = l.kernel;
      break;
    default:
      break;
  }
  if (l.quantizable()) {
    j["weight"] = blob.add(l.weight);
    j["bias"] = blob.add(l.bias);
    if (l.assignment) {
      json rows = json::array();
      for (auto f : l.assignment->rows) rows.push_back(format_name(f));
      j["assignment"] = rows;
    }
  }
  return j;
}

nn::Layer parse_layer(const json& j, const BlobReader& blob) {
  nn::Layer l;
  l.kind = nn::parse_layer_kind(j.at("kind").get<std::string>());
  switch (l.kind) {
    case nn::LayerKind::Dense:
      l.in_features = j.at("in_features");
      l.out_features = j.at("out_features");
      break;
    case nn::LayerKind::Conv2d:
      l.in_channels = j.at("in_channels");
      l.out_channels = j.at("out_channels");
      l.kernel = j.at("kernel");
      l.stride = j.at("stride");
      l.padding = j.at("padding");
      break;
    case nn::LayerKind::MaxPool:
    case nn::LayerKind::AvgPool:
      l.kernel = j.at("kernel");
      l.stride = l.kernel;
      break;
    default:
      break;
  }
  if (l.quantizable()) {
    l.weight = blob.tensor(j.at("weight"));
    l.bias = blob.tensor(j.at("bias"));
    if (j.contains("assignment")) {
      assign::RowAssignment a;
      for (const auto& s : j.at("assignment")) a.rows.push_back(parse_format(s.get<std::string>()));
      l.assignment = std::move(a);
    }
  }
  return l;
}

}  // namespace

std::string encode_model(const ModelFile& file) {
  BlobWriter blob;
  const auto& m = file.model;
  json manifest{{"format", "rowmix-model"},
                {"version", 1},
                {"input_shape", m.input_shape()},
                {"activation",
                 {{"bits", m.activation().bits},
                  {"clip", m.activation().clip},
                  {"input_clip", m.activation().input_clip}}}};
  json layers = json::array();
  for (const auto& l : m.layers()) layers.push_back(layer_manifest(l, blob));
  manifest["layers"] = layers;

  if (file.quantized) {
    json q = json::array();
    for (const auto& ql : file.quantized->layers) {
      json rows = json::array();
      for (std::size_t i = 0; i < ql.rows.size(); ++i) {
        const auto& r = ql.rows[i];
        rows.push_back({{"index", ql.row_index[i]},
                        {"format", format_name(r.config.format())},
                        {"scale", r.config.scale()},
                        {"codes", blob.add(r.codes.data(), r.codes.size(), {r.codes.size()}, "i8")}});
      }
      q.push_back({{"rows", rows}});
    }
    manifest["quantized"] = q;
  }

  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out += blob.blob();
  return out;
}

ModelFile decode_model(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a rowmix model file");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) throw IoError("model manifest is truncated");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw IoError(std::string("model manifest is not valid JSON: ") + e.what());
  }
  const BlobReader blob(std::string_view(bytes).substr(16 + len));

  try {
    if (manifest.at("format") != "rowmix-model" || manifest.at("version") != 1)
      throw IoError("unsupported model file format/version");
    ModelFile file;
    file.model = nn::Model(manifest.at("input_shape").get<Shape>());
    const auto& act = manifest.at("activation");
    file.model.activation() = {act.at("bits").get<int>(), act.at("clip").get<double>(),
                               act.at("input_clip").get<double>()};
    for (const auto& l : manifest.at("layers")) file.model.push(parse_layer(l, blob));

    if (manifest.contains("quantized")) {
      auto q = engine::quantize_model(file.model);
      const auto& layers = manifest.at("quantized");
      if (layers.size() != q.layers.size()) throw IoError("quantized section has the wrong layer count");
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& ql = q.layers[i];
        ql.rows.clear();
        ql.row_index.clear();
        for (const auto& r : layers[i].at("rows")) {
          const auto raw = blob.bytes(r.at("codes"), "i8");
          quant::QuantizedRow row{
              quant::QuantConfig(parse_format(r.at("format")), r.at("scale").get<double>()),
              std::vector<std::int8_t>(raw.size())};
          std::memcpy(row.codes.data(), raw.data(), raw.size());
          ql.rows.push_back(std::move(row));
          ql.row_index.push_back(r.at("index").get<std::size_t>());
        }
      }
      file.quantized = std::move(q);
    }
    return file;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model manifest: ") + e.what());
  } catch (const ContractViolation& e) {
    throw IoError(std::string("inconsistent model file: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(file));
}

ModelFile load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace rowmix::io
