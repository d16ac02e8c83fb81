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

// Scalar and row-level quantizers for the two weight schemes.
//
// Fixed: symmetric uniform grid, code = clamp(round(x / scale), -qmax, qmax)
//        with qmax = 2^(bits-1) - 1 and round-half-away-from-zero.
// PoT:   4-bit sign + magnitude, magnitude in {0, 2^-6, ..., 2^-1, 2^0}
//        scaled by `scale`. Packed code layout (low nibble):
//
//            bit 3     bits 2..0
//            sign      exponent index k (level 2^-k), 7 = zero sentinel

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace rowmix::quant {

enum class Scheme : std::uint8_t { Fixed, PoT };

std::string_view to_string(Scheme scheme);
/// Accepts exactly "fixed" or "pot".
Scheme parse_scheme(std::string_view text);

/// Scheme and bit-width of one row, without a scale. This is the unit the
/// assignment step hands out.
struct RowFormat {
  Scheme scheme = Scheme::Fixed;
  int bits = 4;

  friend bool operator==(const RowFormat&, const RowFormat&) = default;
};

inline constexpr RowFormat kPot4{Scheme::PoT, 4};
inline constexpr RowFormat kFixed4{Scheme::Fixed, 4};
inline constexpr RowFormat kFixed8{Scheme::Fixed, 8};

/// Throws UnsupportedConfig for anything other than PoT-4, Fixed-4, Fixed-8.
void validate(RowFormat format);

class QuantConfig {
 public:
  /// Throws UnsupportedConfig for bad bits / PoT-8, DomainError for a
  /// non-positive or non-finite scale.
  QuantConfig(Scheme scheme, int bits, double scale);
  QuantConfig(RowFormat format, double scale)
      : QuantConfig(format.scheme, format.bits, scale) {}

  Scheme scheme() const noexcept { return format_.scheme; }
  int bits() const noexcept { return format_.bits; }
  RowFormat format() const noexcept { return format_; }
  double scale() const noexcept { return scale_; }

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;

 private:
  RowFormat format_;
  double scale_;
};

/// Largest Fixed code magnitude for a bit-width: 2^(bits-1) - 1.
constexpr int fixed_qmax(int bits) { return (1 << (bits - 1)) - 1; }

inline constexpr int kPotMaxExponent = 6;
inline constexpr int kPotZeroField = 7;
inline constexpr int kPotSignBit = 0x8;
/// Left shift that turns any 4-bit PoT level into an integer.
inline constexpr int kPotPrescaleShift = kPotMaxExponent;

struct PotCodebook {
  int bits = 4;
  std::vector<double> levels;  // ascending, levels[0] == 0
};

/// Only bits == 4 is supported.
PotCodebook pot_codebook(int bits);

std::int32_t fixed_quantize(double x, const QuantConfig& config);
double fixed_dequantize(std::int32_t code, const QuantConfig& config);

std::int32_t pot_quantize(double x, const QuantConfig& config);
double pot_dequantize(std::int32_t code, const QuantConfig& config);

constexpr std::int32_t pot_pack(bool negative, int field) {
  return (negative ? kPotSignBit : 0) | field;
}
constexpr bool pot_is_zero(std::int32_t code) {
  return (code & 0x7) == kPotZeroField;
}
constexpr bool pot_is_negative(std::int32_t code) {
  return (code & kPotSignBit) != 0;
}
constexpr int pot_exponent(std::int32_t code) { return code & 0x7; }
/// Throws ContractViolation when the code is not a valid packed PoT nibble.
void check_pot_code(std::int32_t code);

/// Dispatches on the config's scheme.
std::int32_t quantize(double x, const QuantConfig& config);
double dequantize(std::int32_t code, const QuantConfig& config);

struct QuantizedRow {
  QuantConfig config;
  std::vector<std::int8_t> codes;
};

/// Scale rule: Fixed rows use max|w| / qmax, PoT rows use max|w|. An
/// all-zero row gets scale 1 so the config stays valid.
double row_scale(std::span<const float> weights, RowFormat format);

/// Quantizes a whole row. When `scale` is absent the row scale rule applies.
QuantizedRow quantize_row(std::span<const float> weights, RowFormat format,
                          std::optional<double> scale = std::nullopt);

std::vector<double> dequantize_row(const QuantizedRow& row);

/// quantize-then-dequantize of a row, written into `out`. Returns the scale
/// used. This is the weight path of the QAT forward.
double fake_quantize_row(std::span<const float> weights, RowFormat format,
                         std::span<float> out);

}  // namespace rowmix::quant
