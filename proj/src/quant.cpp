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

#include "rowmix/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rowmix/errors.hpp"

namespace rowmix::quant {

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::PoT ? "pot" : "fixed";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "fixed") return Scheme::Fixed;
  if (text == "pot") return Scheme::PoT;
  throw ConfigError("unknown quantization scheme '" + std::string(text) + "'");
}

void validate(RowFormat format) {
  if (format.bits != 4 && format.bits != 8)
    throw UnsupportedConfig("bit-width must be 4 or 8, got " +
                            std::to_string(format.bits));
  if (format.scheme == Scheme::PoT && format.bits != 4)
    throw UnsupportedConfig("PoT is only defined for 4 bits");
}

QuantConfig::QuantConfig(Scheme scheme, int bits, double scale)
    : format_{scheme, bits}, scale_(scale) {
  validate(format_);
  if (!std::isfinite(scale) || scale <= 0.0)
    throw DomainError("quantization scale must be positive and finite");
}

PotCodebook pot_codebook(int bits) {
  if (bits != 4)
    throw UnsupportedConfig("PoT codebook only supports 4 bits, got " +
                            std::to_string(bits));
  PotCodebook book;
  book.bits = bits;
  book.levels.push_back(0.0);
  for (int k = kPotMaxExponent; k >= 0; --k) book.levels.push_back(std::ldexp(1.0, -k));
  return book;
}

namespace {

void require_finite(double x) {
  if (!std::isfinite(x)) throw DomainError("cannot quantize a non-finite value");
}

void require_scheme(const QuantConfig& config, Scheme scheme) {
  if (config.scheme() != scheme)
    throw ContractViolation(std::string("expected a ") +
                            std::string(to_string(scheme)) + " config");
}

}  // namespace

std::int32_t fixed_quantize(double x, const QuantConfig& config) {
  require_scheme(config, Scheme::Fixed);
  require_finite(x);
  const double qmax = fixed_qmax(config.bits());
  const double q = std::round(x / config.scale());
  return static_cast<std::int32_t>(std::clamp(q, -qmax, qmax));
}

double fixed_dequantize(std::int32_t code, const QuantConfig& config) {
  require_scheme(config, Scheme::Fixed);
  const int qmax = fixed_qmax(config.bits());
  if (code < -qmax || code > qmax)
    throw ContractViolation("fixed code " + std::to_string(code) +
                            " outside the signed range");
  return code * config.scale();
}

std::int32_t pot_quantize(double x, const QuantConfig& config) {
  require_scheme(config, Scheme::PoT);
  require_finite(x);
  const bool negative = x < 0.0;
  const double t = std::fabs(x) / config.scale();
  if (t >= 1.0) return pot_pack(negative, 0);

  // Smallest level is 2^-6; everything below the 2^-7 midpoint rounds to 0.
  const double smallest = std::ldexp(1.0, -kPotMaxExponent);
  if (t < smallest) {
    return t >= smallest / 2 ? pot_pack(negative, kPotMaxExponent)
                             : pot_pack(false, kPotZeroField);
  }
  // t in [2^e, 2^(e+1)) with e in [-6, -1]; the midpoint is 1.5 * 2^e and
  // ties go to the larger level.
  int exp2 = 0;
  std::frexp(t, &exp2);  // t = m * 2^exp2, m in [0.5, 1)
  const int e = exp2 - 1;
  const double lower = std::ldexp(1.0, e);
  const int k = (t - lower >= 2.0 * lower - t) ? -(e + 1) : -e;
  return pot_pack(negative, k);
}

void check_pot_code(std::int32_t code) {
  if (code < 0 || code > 0xF)
    throw ContractViolation("PoT code " + std::to_string(code) +
                            " is not a 4-bit value");
}

double pot_dequantize(std::int32_t code, const QuantConfig& config) {
  require_scheme(config, Scheme::PoT);
  check_pot_code(code);
  if (pot_is_zero(code)) return 0.0;
  const double mag = std::ldexp(config.scale(), -pot_exponent(code));
  return pot_is_negative(code) ? -mag : mag;
}

std::int32_t quantize(double x, const QuantConfig& config) {
  return config.scheme() == Scheme::PoT ? pot_quantize(x, config)
                                        : fixed_quantize(x, config);
}

double dequantize(std::int32_t code, const QuantConfig& config) {
  return config.scheme() == Scheme::PoT ? pot_dequantize(code, config)
                                        : fixed_dequantize(code, config);
}

double row_scale(std::span<const float> weights, RowFormat format) {
  validate(format);
  double max_abs = 0.0;
  for (float w : weights) max_abs = std::max(max_abs, std::fabs(double{w}));
  if (!std::isfinite(max_abs)) throw DomainError("row contains non-finite weights");
  if (max_abs == 0.0) return 1.0;
  return format.scheme == Scheme::PoT ? max_abs : max_abs / fixed_qmax(format.bits);
}

QuantizedRow quantize_row(std::span<const float> weights, RowFormat format,
                          std::optional<double> scale) {
  if (weights.empty()) throw DomainError("cannot quantize an empty row");
  QuantizedRow row{QuantConfig(format, scale ? *scale : row_scale(weights, format)), {}};
  row.codes.reserve(weights.size());
  for (float w : weights)
    row.codes.push_back(static_cast<std::int8_t>(quantize(w, row.config)));
  return row;
}

std::vector<double> dequantize_row(const QuantizedRow& row) {
  std::vector<double> out;
  out.reserve(row.codes.size());
  for (auto c : row.codes) out.push_back(dequantize(c, row.config));
  return out;
}

double fake_quantize_row(std::span<const float> weights, RowFormat format,
                         std::span<float> out) {
  if (out.size() != weights.size())
    throw ContractViolation("fake_quantize_row: output size mismatch");
  const QuantConfig config(format, row_scale(weights, format));
  for (std::size_t i = 0; i < weights.size(); ++i)
    out[i] = static_cast<float>(dequantize(quantize(weights[i], config), config));
  return config.scale();
}

}  // namespace rowmix::quant
