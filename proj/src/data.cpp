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

#include "rowmix/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include "rowmix/errors.hpp"

namespace rowmix::data {

Shape Dataset::sample_shape() const {
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Shape shape = inputs.shape();
  shape[0] = indices.size();
  Dataset out;
  out.inputs = Tensor(shape);
  out.classes = classes;
  out.image = image;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.slice(indices[i]);
    std::copy(src.begin(), src.end(), out.inputs.slice(i).begin());
    out.labels.push_back(labels.at(indices[i]));
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(idx);
}

Dataset make_blobs(const BlobsSpec& spec) {
  if (spec.samples == 0 || spec.features == 0 || spec.classes < 2)
    throw ConfigError("blobs need samples > 0, features > 0, classes >= 2");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::vector<double> centers(spec.classes * spec.features);
  for (auto& c : centers) c = normal(rng) * spec.center_spread;

  Dataset out;
  out.classes = spec.classes;
  out.inputs = Tensor({spec.samples, spec.features});
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    out.labels.push_back(label);
    auto x = out.inputs.slice(i);
    for (std::size_t f = 0; f < spec.features; ++f)
      x[f] = static_cast<float>(centers[label * spec.features + f] + normal(rng) * spec.noise);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw IoError("truncated IDX header in " + path.string());
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  auto img = open_binary(images);
  auto lab = open_binary(labels);
  if (read_be32(img, images) != 0x00000803) throw IoError(images.string() + " is not an IDX3 uint8 file");
  if (read_be32(lab, labels) != 0x00000801) throw IoError(labels.string() + " is not an IDX1 uint8 file");
  std::size_t n = read_be32(img, images);
  const std::size_t rows = read_be32(img, images);
  const std::size_t cols = read_be32(img, images);
  if (read_be32(lab, labels) != n) throw IoError("IDX image and label counts differ");
  if (limit) n = std::min(n, limit);

  Dataset out;
  out.image = true;
  out.inputs = Tensor({n, 1, rows, cols});
  std::vector<unsigned char> buf(rows * cols);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw IoError("truncated IDX image data in " + images.string());
    auto x = out.inputs.slice(i);
    for (std::size_t j = 0; j < buf.size(); ++j) x[j] = buf[j] / 255.0f;
    char c = 0;
    if (!lab.get(c)) throw IoError("truncated IDX label data in " + labels.string());
    const int y = static_cast<unsigned char>(c);
    max_label = std::max(max_label, y);
    out.labels.push_back(y);
  }
  out.classes = std::max<std::size_t>(10, max_label + 1);
  return out;
}

void save_idx(const Dataset& dataset, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (dataset.inputs.rank() != 4 || dataset.inputs.dim(1) != 1)
    throw ContractViolation("IDX output needs (N, 1, H, W) inputs");
  std::ofstream img(images, std::ios::binary), lab(labels, std::ios::binary);
  if (!img || !lab) throw IoError("cannot write IDX files");
  write_be32(img, 0x00000803);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(dataset.inputs.dim(2)));
  write_be32(img, static_cast<std::uint32_t>(dataset.inputs.dim(3)));
  for (float v : dataset.inputs.values())
    img.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  write_be32(lab, 0x00000801);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (int y : dataset.labels) lab.put(static_cast<char>(y));
}

}  // namespace rowmix::data
