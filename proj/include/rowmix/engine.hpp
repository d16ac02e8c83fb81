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

// Integer inference with the two row kernels:
//   GEMM_Fixed  acc[r] = sum_j code[r][j] * act[j]               (multiplies)
//   GEMM_PoT    acc[r] = sum_j +-(act[j] << (6 - k[r][j]))       (shifts/adds)
// PoT accumulators carry a 2^6 pre-scale that is folded into the output
// scale during requantization.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "rowmix/errors.hpp"
#include "rowmix/nn.hpp"
#include "rowmix/quant.hpp"

namespace rowmix::engine {

/// Widest inner dimension the engine accepts.
inline constexpr std::size_t kMaxInner = 65536;

// 8-bit codes (|c| <= 127) times 8-bit activations, or a PoT level shifted
// by at most 6, summed over kMaxInner terms, must fit an int64 accumulator.
static_assert(127LL * 127LL * static_cast<long long>(kMaxInner) <
              std::numeric_limits<std::int64_t>::max());
static_assert((127LL << quant::kPotPrescaleShift) * static_cast<long long>(kMaxInner) <
              std::numeric_limits<std::int64_t>::max());

struct OpCounts {
  std::uint64_t shifts = 0;
  std::uint64_t adds = 0;
  std::uint64_t multiplies = 0;

  OpCounts& operator+=(const OpCounts& o) {
    shifts += o.shifts;
    adds += o.adds;
    multiplies += o.multiplies;
    return *this;
  }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Plain integer arithmetic for the kernels.
struct NativeOps {
  static std::int64_t add(std::int64_t a, std::int64_t b) { return a + b; }
  static std::int64_t sub(std::int64_t a, std::int64_t b) { return a - b; }
  static std::int64_t shl(std::int64_t a, int n) { return a << n; }
  static std::int64_t mul(std::int64_t a, std::int64_t b) { return a * b; }
};

/// Same arithmetic, tallied.
struct CountingOps {
  OpCounts counts;
  std::int64_t add(std::int64_t a, std::int64_t b) { ++counts.adds; return a + b; }
  std::int64_t sub(std::int64_t a, std::int64_t b) { ++counts.adds; return a - b; }
  std::int64_t shl(std::int64_t a, int n) { ++counts.shifts; return a << n; }
  std::int64_t mul(std::int64_t a, std::int64_t b) { ++counts.multiplies; return a * b; }
};

namespace detail {
inline void check_rows(std::span<const quant::QuantizedRow> rows, std::size_t inner,
                       quant::Scheme scheme) {
  if (inner > kMaxInner) throw ContractViolation("inner dimension exceeds kMaxInner");
  for (const auto& r : rows) {
    if (r.config.scheme() != scheme)
      throw ContractViolation("kernel received a row of the other scheme");
    if (r.codes.size() != inner)
      throw ContractViolation("row length does not match the activation length");
  }
}
}  // namespace detail

template <class Ops>
std::vector<std::int64_t> gemm_fixed_with(std::span<const quant::QuantizedRow> rows,
                                          std::span<const std::int32_t> act, Ops& ops) {
  detail::check_rows(rows, act.size(), quant::Scheme::Fixed);
  std::vector<std::int64_t> acc(rows.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& codes = rows[r].codes;
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < act.size(); ++j) {
      if (codes[j] == 0 || act[j] == 0) continue;
      sum = ops.add(sum, ops.mul(codes[j], act[j]));
    }
    acc[r] = sum;
  }
  return acc;
}

/// Shift, add and subtract only; the result is 2^6 * <levels, act>.
template <class Ops>
std::vector<std::int64_t> gemm_pot_with(std::span<const quant::QuantizedRow> rows,
                                        std::span<const std::int32_t> act, Ops& ops) {
  detail::check_rows(rows, act.size(), quant::Scheme::PoT);
  std::vector<std::int64_t> acc(rows.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& codes = rows[r].codes;
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < act.size(); ++j) {
      const std::int32_t code = codes[j];
      quant::check_pot_code(code);
      if (quant::pot_is_zero(code) || act[j] == 0) continue;
      const int k = quant::pot_exponent(code);
      if (k > quant::kPotMaxExponent) throw ContractViolation("PoT exponent out of range");
      const std::int64_t term = ops.shl(act[j], quant::kPotPrescaleShift - k);
      sum = quant::pot_is_negative(code) ? ops.sub(sum, term) : ops.add(sum, term);
    }
    acc[r] = sum;
  }
  return acc;
}

std::vector<std::int64_t> gemm_fixed(std::span<const quant::QuantizedRow> rows,
                                     std::span<const std::int32_t> act);
std::vector<std::int64_t> gemm_pot(std::span<const quant::QuantizedRow> rows,
                                   std::span<const std::int32_t> act);

struct IntActivation {
  Shape shape;  // per sample
  std::vector<std::int32_t> codes;
  int bits = 4;
  double scale = 1.0;

  /// Throws ContractViolation if a code is outside the signed range.
  void validate() const;
};

/// Clip-and-round of real values onto the activation grid.
IntActivation quantize_activation(std::span<const float> values, Shape shape, int bits,
                                  double scale);

/// One quantizable layer plus the elementwise / pooling ops that follow it
/// up to the next quantizable layer.
struct QuantizedLayer {
  nn::Layer geometry;  // kind + dimensions; weight/bias tensors left empty
  assign::RowAssignment assignment;
  /// Rows in storage order; row_index[i] is the output channel of rows[i].
  std::vector<quant::QuantizedRow> rows;
  std::vector<std::size_t> row_index;
  std::vector<float> bias;  // by output channel
  int input_bits = 4;
  double input_scale = 1.0;
  std::vector<nn::Layer> post_ops;
  /// Output activation grid; absent on the last layer, whose output stays real.
  bool requantize = false;
  int output_bits = 4;
  double output_scale = 1.0;

  Shape input_shape;   // per sample
  Shape output_shape;  // per sample, after post_ops
};

struct QuantizedModel {
  Shape input_shape;
  nn::ActivationSpec activation;
  std::vector<nn::Layer> prelude;  // non-quantizable ops before the first layer
  std::vector<QuantizedLayer> layers;
};

/// Freezes the latent weights of an assigned model into integer rows.
/// Throws StateError if a quantizable layer has no assignment.
QuantizedModel quantize_model(const nn::Model& model);

/// Real-valued output of one layer: both kernels, rescale, bias, post-ops.
/// Results are placed by row_index, so storage order does not matter.
std::vector<double> infer_layer_real(const QuantizedLayer& layer, const IntActivation& act,
                                     OpCounts* counts = nullptr);

/// infer_layer_real followed by requantization to the output grid.
IntActivation infer_layer(const QuantizedLayer& layer, const IntActivation& act,
                          OpCounts* counts = nullptr);

/// Quantizes each input sample once, chains the layers and returns real
/// logits (N, outputs). `trace`, when given, receives the activation codes at
/// every layer input in the same layout as nn::forward's trace. `counts`
/// gets one entry per layer.
Tensor infer(const QuantizedModel& model, const Tensor& input,
             nn::ActivationTrace* trace = nullptr, std::vector<OpCounts>* counts = nullptr);

}  // namespace rowmix::engine
