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

#include "rowmix/engine.hpp"

#include <string>

namespace rowmix::engine {

std::vector<std::int64_t> gemm_fixed(std::span<const quant::QuantizedRow> rows,
                                     std::span<const std::int32_t> act) {
  NativeOps ops;
  return gemm_fixed_with(rows, act, ops);
}

std::vector<std::int64_t> gemm_pot(std::span<const quant::QuantizedRow> rows,
                                   std::span<const std::int32_t> act) {
  NativeOps ops;
  return gemm_pot_with(rows, act, ops);
}

void IntActivation::validate() const {
  const int qmax = quant::fixed_qmax(bits);
  if (codes.size() != shape_size(shape))
    throw ContractViolation("activation code count does not match its shape");
  for (auto c : codes)
    if (c < -qmax || c > qmax) throw ContractViolation("activation code outside the signed range");
}

IntActivation quantize_activation(std::span<const float> values, Shape shape, int bits,
                                  double scale) {
  IntActivation out{std::move(shape), {}, bits, scale};
  out.codes.reserve(values.size());
  for (float v : values) out.codes.push_back(nn::activation_code(v, scale, bits));
  return out;
}

QuantizedModel quantize_model(const nn::Model& model) {
  if (!model.fully_assigned())
    throw StateError("model has a quantizable layer without a row assignment");
  const auto qlayers = model.quantizable_layers();
  if (qlayers.empty()) throw StateError("model has no quantizable layer");

  QuantizedModel out;
  out.input_shape = model.input_shape();
  out.activation = model.activation();
  for (std::size_t i = 0; i < qlayers.front(); ++i) out.prelude.push_back(model.layers()[i]);

  for (std::size_t q = 0; q < qlayers.size(); ++q) {
    const nn::Layer& src = model.layers()[qlayers[q]];
    QuantizedLayer layer;
    layer.geometry = src;
    layer.geometry.weight = Tensor();
    layer.geometry.bias = Tensor();
    layer.geometry.assignment.reset();
    layer.assignment = *src.assignment;
    for (std::size_t r = 0; r < src.rows(); ++r) {
      layer.rows.push_back(quant::quantize_row(src.row(r), layer.assignment.rows[r]));
      layer.row_index.push_back(r);
    }
    layer.bias.assign(src.bias.values().begin(), src.bias.values().end());
    layer.input_bits = model.activation().bits;
    layer.input_scale = model.activation().step(q == 0);
    layer.input_shape = model.shape_at(qlayers[q]);
    const std::size_t end = q + 1 < qlayers.size() ? qlayers[q + 1] : model.size();
    for (std::size_t i = qlayers[q] + 1; i < end; ++i) layer.post_ops.push_back(model.layers()[i]);
    layer.output_shape = model.shape_at(end);
    if (q + 1 < qlayers.size()) {
      layer.requantize = true;
      layer.output_bits = model.activation().bits;
      layer.output_scale = model.activation().step(false);
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

namespace {

Tensor run_ops(const std::vector<nn::Layer>& ops, const Shape& in_shape, Tensor x) {
  if (ops.empty()) return x;
  nn::Model chain(in_shape);
  for (const auto& op : ops) chain.push(op);
  return nn::forward(chain, x, nn::Mode::Float);
}

Shape with_batch(const Shape& s) {
  Shape out{1};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

// Columns of the layer GEMM: one column of `inner` codes per output position.
std::vector<std::vector<std::int32_t>> columns(const nn::Layer& g, const IntActivation& act) {
  if (g.kind == nn::LayerKind::Dense) {
    if (act.codes.size() != g.in_features)
      throw ContractViolation("activation length does not match the dense layer");
    return {act.codes};
  }
  const std::size_t c = act.shape.at(0), h = act.shape.at(1), w = act.shape.at(2);
  if (c != g.in_channels) throw ContractViolation("activation channels do not match the conv layer");
  const std::size_t k = g.kernel, s = g.stride, p = g.padding;
  const std::size_t oh = (h + 2 * p - k) / s + 1, ow = (w + 2 * p - k) / s + 1;
  std::vector<std::vector<std::int32_t>> cols(oh * ow, std::vector<std::int32_t>(c * k * k, 0));
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      auto& col = cols[oy * ow + ox];
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
            const long ix = static_cast<long>(ox * s + kx) - static_cast<long>(p);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
            col[(ch * k + ky) * k + kx] = act.codes[(ch * h + iy) * w + ix];
          }
    }
  return cols;
}

}  // namespace

std::vector<double> infer_layer_real(const QuantizedLayer& layer, const IntActivation& act,
                                     OpCounts* counts) {
  const std::size_t out_rows = layer.rows.size();
  if (layer.row_index.size() != out_rows || layer.bias.size() != out_rows)
    throw ContractViolation("quantized layer metadata is inconsistent");

  std::vector<quant::QuantizedRow> pot, fixed;
  std::vector<std::size_t> pot_at, fixed_at;
  for (std::size_t i = 0; i < out_rows; ++i) {
    const auto& row = layer.rows[i];
    if (row.config.format() != layer.assignment.rows.at(layer.row_index[i]))
      throw ContractViolation("row format disagrees with the layer assignment");
    if (row.config.scheme() == quant::Scheme::PoT) {
      pot.push_back(row);
      pot_at.push_back(i);
    } else {
      fixed.push_back(row);
      fixed_at.push_back(i);
    }
  }

  const auto cols = columns(layer.geometry, act);
  const std::size_t positions = cols.size();
  // Output laid out (channel, position), i.e. (C, H, W) for conv.
  Shape y_shape{out_rows};
  if (layer.geometry.kind == nn::LayerKind::Conv2d) {
    const std::size_t k = layer.geometry.kernel, s = layer.geometry.stride, p = layer.geometry.padding;
    y_shape = {out_rows, (act.shape[1] + 2 * p - k) / s + 1, (act.shape[2] + 2 * p - k) / s + 1};
  }
  Tensor y(with_batch(y_shape));

  CountingOps counting;
  NativeOps native;
  const double pot_unscale = 1.0 / static_cast<double>(1 << quant::kPotPrescaleShift);
  for (std::size_t p = 0; p < positions; ++p) {
    const auto& col = cols[p];
    std::vector<std::int64_t> acc_pot, acc_fixed;
    if (counts) {
      acc_pot = gemm_pot_with(pot, col, counting);
      acc_fixed = gemm_fixed_with(fixed, col, counting);
    } else {
      acc_pot = gemm_pot_with(pot, col, native);
      acc_fixed = gemm_fixed_with(fixed, col, native);
    }
    auto place = [&](std::size_t storage, std::int64_t acc, double extra) {
      const std::size_t o = layer.row_index[storage];
      const double v = static_cast<double>(acc) * layer.rows[storage].config.scale() *
                           act.scale * extra + double{layer.bias[o]};
      y[o * positions + p] = static_cast<float>(v);
    };
    for (std::size_t i = 0; i < pot.size(); ++i) place(pot_at[i], acc_pot[i], pot_unscale);
    for (std::size_t i = 0; i < fixed.size(); ++i) place(fixed_at[i], acc_fixed[i], 1.0);
  }
  if (counts) *counts += counting.counts;

  const Tensor out = run_ops(layer.post_ops, y_shape, std::move(y));
  return {out.values().begin(), out.values().end()};
}

IntActivation infer_layer(const QuantizedLayer& layer, const IntActivation& act, OpCounts* counts) {
  if (!layer.requantize) throw StateError("infer_layer on a layer without an output grid");
  const auto real = infer_layer_real(layer, act, counts);
  IntActivation out{layer.output_shape, {}, layer.output_bits, layer.output_scale};
  out.codes.reserve(real.size());
  for (double v : real)
    out.codes.push_back(nn::activation_code(static_cast<float>(v), layer.output_scale, layer.output_bits));
  return out;
}

Tensor infer(const QuantizedModel& model, const Tensor& input, nn::ActivationTrace* trace,
             std::vector<OpCounts>* counts) {
  if (model.layers.empty()) throw StateError("quantized model has no layers");
  const Shape& expected = model.input_shape;
  if (input.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), input.shape().begin() + 1))
    throw ContractViolation("input shape " + shape_string(input.shape()) +
                            " does not match model input " + shape_string(expected));
  const std::size_t n = input.dim(0);
  const Shape out_shape = model.layers.back().output_shape;
  Shape logits_shape{n};
  logits_shape.insert(logits_shape.end(), out_shape.begin(), out_shape.end());
  Tensor logits(logits_shape);
  if (trace) trace->assign(model.layers.size(), {});
  if (counts) counts->assign(model.layers.size(), {});

  for (std::size_t b = 0; b < n; ++b) {
    const auto sample = input.slice(b);
    Tensor x(with_batch(expected), std::vector<float>(sample.begin(), sample.end()));
    x = run_ops(model.prelude, expected, std::move(x));
    const auto& first = model.layers.front();
    IntActivation act = quantize_activation(x.span(), first.input_shape, first.input_bits,
                                            first.input_scale);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& layer = model.layers[l];
      if (trace) (*trace)[l].insert((*trace)[l].end(), act.codes.begin(), act.codes.end());
      OpCounts* c = counts ? &(*counts)[l] : nullptr;
      if (layer.requantize) {
        act = infer_layer(layer, act, c);
      } else {
        const auto real = infer_layer_real(layer, act, c);
        auto dst = logits.slice(b);
        for (std::size_t i = 0; i < real.size(); ++i) dst[i] = static_cast<float>(real[i]);
      }
    }
  }
  return logits;
}

}  // namespace rowmix::engine
