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

// Two-step per-row assignment: rows whose Hessian block has the largest top
// eigenvalue get 8 bits, then the lowest-variance 4-bit rows get PoT.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rowmix/quant.hpp"

namespace rowmix::assign {

/// PoT-4 : Fixed-4 : Fixed-8 in integer percent.
struct SchemeRatio {
  int pot4 = 0;
  int fixed4 = 100;
  int fixed8 = 0;

  /// Throws ConfigError unless all parts are >= 0 and sum to 100.
  void validate() const;
  std::string to_string() const;  // "60:35:5"
  static SchemeRatio parse(std::string_view text);

  friend bool operator==(const SchemeRatio&, const SchemeRatio&) = default;
};

struct SchemeCounts {
  std::size_t pot4 = 0;
  std::size_t fixed4 = 0;
  std::size_t fixed8 = 0;

  std::size_t total() const { return pot4 + fixed4 + fixed8; }
  friend bool operator==(const SchemeCounts&, const SchemeCounts&) = default;
};

/// Largest-remainder apportionment of `rows` seats. Leftover seats go to the
/// largest fractional remainders, ties PoT-4 > Fixed-4 > Fixed-8. If the
/// ratio asks for any Fixed-8 and none was seated, one seat is moved to
/// Fixed-8 from the most over-represented of the other two buckets.
SchemeCounts apportion_counts(const SchemeRatio& ratio, std::size_t rows);

struct FilterSensitivity {
  std::size_t layer = 0;
  std::size_t row = 0;
  double lambda_max = 0.0;
  double variance = 0.0;
};

/// Per-row formats of one layer, indexed by row.
struct RowAssignment {
  std::vector<quant::RowFormat> rows;

  SchemeCounts counts() const;
  std::size_t size() const { return rows.size(); }
  friend bool operator==(const RowAssignment&, const RowAssignment&) = default;
};

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;
using HvpFn = std::function<std::vector<double>(std::span<const double>)>;

/// Default step for the central difference: 1e-3 * (1 + |params|).
double default_hvp_epsilon(std::span<const double> params);

/// Central-difference Hessian-vector product of a gradient oracle:
/// (g(p + eps*u) - g(p - eps*u)) / (2 eps) * |v| with u = v / |v|.
/// A non-positive `epsilon` selects default_hvp_epsilon.
std::vector<double> hvp(const GradientFn& gradient, std::span<const double> params,
                        std::span<const double> v, double epsilon = 0.0);

struct PowerIterationOptions {
  int max_iters = 50;
  double tol = 1e-4;
  std::uint64_t seed = 0x5eed;
};

/// Dominant (largest-magnitude) eigenvalue of the operator behind `apply`,
/// returned as the Rayleigh quotient of the final iterate.
double lambda_max_power_iteration(const HvpFn& apply, std::size_t dim,
                                  const PowerIterationOptions& options = {});

/// Population variance.
double variance(std::span<const double> values);
double variance(std::span<const float> values);

/// What rank_filters needs from a model: its rows, and the gradient of the
/// loss with respect to one row's weights while every other parameter stays
/// at its current value.
class RowGradientOracle {
 public:
  virtual ~RowGradientOracle() = default;
  virtual std::size_t layer_count() const = 0;
  virtual std::size_t row_count(std::size_t layer) const = 0;
  virtual std::vector<double> row_weights(std::size_t layer, std::size_t row) const = 0;
  /// Gradient of the loss w.r.t. the row, evaluated with the row set to
  /// `weights`. Implementations may mutate internal scratch state, so one
  /// instance must not be shared across threads; use clone().
  virtual std::vector<double> row_gradient(std::size_t layer, std::size_t row,
                                           std::span<const double> weights) = 0;
  virtual std::unique_ptr<RowGradientOracle> clone() const = 0;
};

struct RankOptions {
  PowerIterationOptions power;
  /// 0 reads ILMPQ_THREADS (default 1).
  unsigned threads = 0;
};

/// One FilterSensitivity per (layer, row), grouped by layer in layer order;
/// within a layer sorted by lambda_max descending, ties by row ascending.
/// The eigenvalue of each row comes from the Hessian block of that row's own
/// weights.
std::vector<FilterSensitivity> rank_filters(const RowGradientOracle& oracle,
                                            const RankOptions& options = {});

/// Step 1: the top-lambda rows become Fixed-8. Step 2: of the remainder, the
/// lowest-variance rows become PoT-4 and the rest Fixed-4. Ties by row index.
/// `layer` must hold exactly one entry per row 0..n-1.
RowAssignment assign_layer(std::span<const FilterSensitivity> layer,
                           const SchemeRatio& ratio);

/// Splits a rank_filters result per layer and assigns each.
std::vector<RowAssignment> assign_all(std::span<const FilterSensitivity> ranked,
                                      std::size_t layer_count,
                                      const SchemeRatio& ratio);

/// Reads ILMPQ_THREADS; returns 1 when unset or invalid.
unsigned thread_budget();

}  // namespace rowmix::assign
