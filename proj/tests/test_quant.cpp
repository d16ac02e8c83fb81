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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "rowmix/errors.hpp"
#include "rowmix/quant.hpp"

using namespace rowmix;
using namespace rowmix::quant;

TEST_CASE("scheme names round-trip") {
  CHECK(to_string(Scheme::Fixed) == "fixed");
  CHECK(to_string(Scheme::PoT) == "pot");
  CHECK(parse_scheme("pot") == Scheme::PoT);
  CHECK(parse_scheme("fixed") == Scheme::Fixed);
  CHECK_THROWS_AS(parse_scheme("Fixed"), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(QuantConfig(Scheme::Fixed, 4, 0.5));
  CHECK_NOTHROW(QuantConfig(Scheme::Fixed, 8, 0.5));
  CHECK_NOTHROW(QuantConfig(Scheme::PoT, 4, 0.5));
  CHECK_THROWS_AS(QuantConfig(Scheme::PoT, 8, 0.5), UnsupportedConfig);
  CHECK_THROWS_AS(QuantConfig(Scheme::Fixed, 6, 0.5), UnsupportedConfig);
  CHECK_THROWS_AS(QuantConfig(Scheme::Fixed, 4, 0.0), DomainError);
  CHECK_THROWS_AS(QuantConfig(Scheme::Fixed, 4, -1.0), DomainError);
  CHECK_THROWS_AS(QuantConfig(Scheme::Fixed, 4, NAN), DomainError);
  CHECK_THROWS_AS(QuantConfig(Scheme::Fixed, 4, INFINITY), DomainError);
}

TEST_CASE("fixed quantize examples") {
  const QuantConfig c4(Scheme::Fixed, 4, 0.25);
  CHECK(fixed_quantize(0.0, c4) == 0);
  CHECK(fixed_quantize(3 * 0.25, c4) == 3);
  CHECK(fixed_quantize(100 * 0.25, c4) == 7);
  CHECK(fixed_quantize(-100 * 0.25, c4) == -7);
  // round half away from zero
  CHECK(fixed_quantize(0.5 * 0.25, c4) == 1);
  CHECK(fixed_quantize(-0.5 * 0.25, c4) == -1);
  CHECK(fixed_quantize(-0.0, c4) == fixed_quantize(0.0, c4));
  CHECK_THROWS_AS(fixed_quantize(NAN, c4), DomainError);
  CHECK_THROWS_AS(fixed_quantize(INFINITY, c4), DomainError);
  const QuantConfig c8(Scheme::Fixed, 8, 1.0);
  CHECK(fixed_quantize(1000.0, c8) == 127);
  CHECK_THROWS_AS(fixed_quantize(1.0, QuantConfig(Scheme::PoT, 4, 1.0)), ContractViolation);
}

TEST_CASE("fixed dequantize") {
  const QuantConfig c(Scheme::Fixed, 4, 0.5);
  CHECK(fixed_dequantize(0, c) == 0.0);
  CHECK(fixed_dequantize(-7, c) == -3.5);
  CHECK_THROWS_AS(fixed_dequantize(8, c), ContractViolation);
  CHECK_THROWS_AS(fixed_dequantize(-8, c), ContractViolation);
}

TEST_CASE("pot codebook") {
  const auto book = pot_codebook(4);
  const std::vector<double> expected{0, 1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1};
  CHECK(book.levels == expected);
  CHECK(book.levels.size() == 8);
  CHECK_THROWS_AS(pot_codebook(8), UnsupportedConfig);
  CHECK_THROWS_AS(pot_codebook(3), UnsupportedConfig);
}

TEST_CASE("pot quantize examples") {
  const QuantConfig c(Scheme::PoT, 4, 1.0);
  CHECK(pot_quantize(0.5, c) == pot_pack(false, 1));
  CHECK(pot_is_zero(pot_quantize(0.0, c)));
  CHECK(pot_quantize(-0.0, c) == pot_quantize(0.0, c));
  CHECK(pot_quantize(0.3, c) == pot_pack(false, 2));
  CHECK(pot_dequantize(pot_quantize(0.3, c), c) == 0.25);
  CHECK(pot_quantize(-0.3, c) == pot_pack(true, 2));
  CHECK(pot_quantize(7.0, c) == pot_pack(false, 0));
  // midpoint 0.375 between 0.25 and 0.5 goes to the larger level
  CHECK(pot_quantize(0.375, c) == pot_pack(false, 1));
  // below half of the smallest level rounds to zero, at half goes up
  CHECK(pot_is_zero(pot_quantize(1.0 / 129, c)));
  CHECK(pot_quantize(1.0 / 128, c) == pot_pack(false, 6));
  CHECK_THROWS_AS(pot_quantize(NAN, c), DomainError);
  CHECK_THROWS_AS(pot_dequantize(16, c), ContractViolation);
  CHECK_THROWS_AS(pot_dequantize(-1, c), ContractViolation);
}

TEST_CASE("both quantizers match the exhaustive nearest-level search") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  std::uniform_real_distribution<double> s(0.01, 1.0);
  for (RowFormat f : {kPot4, kFixed4, kFixed8}) {
    for (int i = 0; i < 2000; ++i) {
      const QuantConfig c(f, s(rng));
      const double x = u(rng);
      CHECK(dequantize(quantize(x, c), c) == testing::nearest_level(x, c));
    }
  }
}

TEST_CASE("tie points follow the rounding rules") {
  for (RowFormat f : {kPot4, kFixed4, kFixed8}) {
    const QuantConfig c(f, 1.0);
    const auto levels = testing::signed_levels(c);
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      const double mid = (levels[i] + levels[i + 1]) / 2;
      CHECK(dequantize(quantize(mid, c), c) == testing::nearest_level(mid, c));
      CHECK(std::fabs(dequantize(quantize(mid, c), c)) ==
            std::max(std::fabs(levels[i]), std::fabs(levels[i + 1])));
    }
  }
}

TEST_CASE("representability, idempotence, monotonicity, saturation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (RowFormat f : {kPot4, kFixed4, kFixed8}) {
    const QuantConfig c(f, 0.75);
    std::vector<double> xs;
    for (int i = 0; i < 1000; ++i) xs.push_back(n(rng));
    std::sort(xs.begin(), xs.end());
    double prev = -INFINITY;
    for (double x : xs) {
      const auto code = quantize(x, c);
      const double y = dequantize(code, c);
      CHECK(quantize(y, c) == code);
      CHECK(y >= prev);
      prev = y;
      if (f.scheme == Scheme::PoT && y != 0.0) {
        int e = 0;
        const double m = std::frexp(std::fabs(y) / c.scale(), &e);
        CHECK(m == 0.5);
        CHECK(e - 1 <= 0);
        CHECK(e - 1 >= -kPotMaxExponent);
      }
    }
    const double top = f.scheme == Scheme::PoT ? c.scale() : fixed_qmax(f.bits) * c.scale();
    CHECK(dequantize(quantize(top * 1.5, c), c) == top);
    CHECK(dequantize(quantize(-top * 40, c), c) == -top);
  }
}

TEST_CASE("row quantization") {
  const std::vector<float> zeros(5, 0.0f);
  for (RowFormat f : {kPot4, kFixed4, kFixed8}) {
    const auto r = quantize_row(zeros, f);
    CHECK(r.config.scale() == 1.0);
    for (double v : dequantize_row(r)) CHECK(v == 0.0);
  }
  const float s = 0.125f;
  const std::vector<float> w{s, -2 * s, 3 * s};
  const auto r = quantize_row(w, kFixed4, s);
  CHECK(r.codes == std::vector<std::int8_t>{1, -2, 3});
  CHECK_THROWS_AS(quantize_row(std::vector<float>{}, kFixed4), DomainError);

  // scale rule
  const std::vector<float> v{0.5f, -2.0f, 1.0f};
  CHECK(row_scale(v, kFixed4) == doctest::Approx(2.0 / 7));
  CHECK(row_scale(v, kFixed8) == doctest::Approx(2.0 / 127));
  CHECK(row_scale(v, kPot4) == 2.0);
  CHECK_THROWS_AS(row_scale(v, RowFormat{Scheme::PoT, 8}), UnsupportedConfig);
}

TEST_CASE("row quantization error equals the oracle's") {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (RowFormat f : {kPot4, kFixed4, kFixed8}) {
    std::vector<float> w(64);
    for (auto& x : w) x = n(rng);
    const auto row = quantize_row(w, f);
    const auto deq = dequantize_row(row);
    double mse = 0, oracle = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      mse += (deq[i] - w[i]) * (deq[i] - w[i]);
      const double o = testing::nearest_level(w[i], row.config);
      oracle += (o - w[i]) * (o - w[i]);
    }
    CHECK(mse == oracle);
    std::vector<float> fake(w.size());
    CHECK(fake_quantize_row(w, f, fake) == row.config.scale());
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(fake[i] == static_cast<float>(deq[i]));
  }
}
