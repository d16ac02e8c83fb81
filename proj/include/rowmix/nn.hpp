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

// Small layer-sequential networks with a hand-written reverse pass.
//
// A weight row is one output unit: a dense row, or one conv filter
// flattened over (in_channels, kh, kw) in im2col order. Row assignments and
// quantization always work at that granularity.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rowmix/assign.hpp"
#include "rowmix/tensor.hpp"

namespace rowmix::nn {

enum class LayerKind { Dense, Conv2d, ReLU, MaxPool, AvgPool, Flatten };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct Layer {
  LayerKind kind = LayerKind::ReLU;
  // Dense: in_features / out_features. Conv2d: channels, square kernel,
  // stride, zero padding. Pools: window == stride == `kernel`.
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor weight;  // Dense: (out, in). Conv2d: (out, in, k, k).
  Tensor bias;    // (out)
  std::optional<assign::RowAssignment> assignment;

  bool quantizable() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  std::size_t rows() const;
  std::size_t row_length() const;
  std::span<float> row(std::size_t r) { return weight.slice(r); }
  std::span<const float> row(std::size_t r) const { return weight.slice(r); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Activation quantizer settings shared by the QAT forward and the integer
/// engine. Activations are clipped to [-clip, clip] and quantized on a
/// symmetric `bits` grid at the input of every quantizable layer; the model
/// input uses `input_clip`.
struct ActivationSpec {
  int bits = 4;
  double clip = 6.0;
  double input_clip = 6.0;

  double step(bool model_input) const;
  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

class Model {
 public:
  Model() = default;
  explicit Model(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  Model& dense(std::size_t out_features);
  Model& conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                std::size_t padding = 0);
  Model& relu();
  Model& maxpool(std::size_t window);
  Model& avgpool(std::size_t window);
  Model& flatten();

  /// Appends a fully specified layer (used by the file loader); the shape is
  /// checked against the current output.
  void push(Layer layer);

  /// Per-sample input shape, e.g. {features} or {channels, h, w}.
  const Shape& input_shape() const { return input_shape_; }
  /// Per-sample output shape after every layer.
  Shape output_shape() const;
  /// Per-sample shape entering layer i (i == size() gives the output).
  Shape shape_at(std::size_t i) const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

  /// Indices into layers() of the dense / conv layers, in order.
  std::vector<std::size_t> quantizable_layers() const;
  bool fully_assigned() const;
  /// Sets the assignment of every quantizable layer, in order.
  void set_assignments(const std::vector<assign::RowAssignment>& assignments);

  /// He-normal weights, zero bias.
  void init(std::uint64_t seed);

  ActivationSpec& activation() { return activation_; }
  const ActivationSpec& activation() const { return activation_; }

  friend bool operator==(const Model&, const Model&) = default;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  ActivationSpec activation_;
};

enum class Mode { Float, Qat };

/// Intermediate state kept by forward() for backward_ste().
struct ForwardCache {
  Mode mode = Mode::Float;
  std::vector<Tensor> inputs;         // input to each layer, post activation-quantizer
  std::vector<Tensor> raw_inputs;     // pre-quantizer input (quantizable layers, QAT)
  std::vector<Tensor> weights;        // effective weight used (quantizable layers)
  std::vector<std::vector<std::uint8_t>> weight_pass;  // STE mask per weight
  std::vector<Tensor> outputs;
  bool valid = false;
};

/// Activation codes observed at every quantization point (QAT mode only),
/// one vector per quantizable layer, batch-major.
using ActivationTrace = std::vector<std::vector<std::int32_t>>;

/// Batched forward. `input` is (N, input_shape...). In QAT mode every
/// quantizable layer sees per-row fake-quantized weights and a fake-quantized
/// input; this requires every quantizable layer to carry an assignment.
Tensor forward(const Model& model, const Tensor& input, Mode mode,
               ForwardCache* cache = nullptr, ActivationTrace* trace = nullptr);

struct Gradients {
  std::vector<Tensor> weight;  // per layer; empty for non-quantizable layers
  std::vector<Tensor> bias;
  Tensor input;
};

/// Reverse pass from dL/dlogits. Quantizers are treated as identity inside
/// their clip range and zero outside (straight-through).
Gradients backward_ste(const Model& model, const ForwardCache& cache,
                       const Tensor& grad_output);

/// Straight-through mask of one quantizer: 1 where |x| <= limit.
inline bool ste_pass(float x, double limit) { return std::fabs(double{x}) <= limit; }

/// Symmetric fixed-point quantize-dequantize of an activation value.
float fake_quantize_activation(float x, double step, int bits);
/// The code fake_quantize_activation lands on.
std::int32_t activation_code(double x, double step, int bits);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits, mean over the batch
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Gradient oracle for rank_filters: float-mode loss on a fixed batch, one
/// row perturbed at a time. `loss_scale` multiplies the loss.
class ModelRowOracle : public assign::RowGradientOracle {
 public:
  ModelRowOracle(Model model, Tensor inputs, std::vector<int> labels,
                 double loss_scale = 1.0);

  std::size_t layer_count() const override;
  std::size_t row_count(std::size_t layer) const override;
  std::vector<double> row_weights(std::size_t layer, std::size_t row) const override;
  std::vector<double> row_gradient(std::size_t layer, std::size_t row,
                                   std::span<const double> weights) override;
  std::unique_ptr<assign::RowGradientOracle> clone() const override;

 private:
  Model model_;
  Tensor inputs_;
  std::vector<int> labels_;
  double loss_scale_;
  std::vector<std::size_t> qlayers_;
};

}  // namespace rowmix::nn
