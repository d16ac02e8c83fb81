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

#include "rowmix/assign.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include "rowmix/errors.hpp"

namespace rowmix::assign {

void SchemeRatio::validate() const {
  if (pot4 < 0 || fixed4 < 0 || fixed8 < 0)
    throw ConfigError("scheme ratio parts must be non-negative: " + to_string());
  if (pot4 + fixed4 + fixed8 != 100)
    throw ConfigError("scheme ratio must sum to 100: " + to_string());
}

std::string SchemeRatio::to_string() const {
  return std::to_string(pot4) + ":" + std::to_string(fixed4) + ":" +
         std::to_string(fixed8);
}

SchemeRatio SchemeRatio::parse(std::string_view text) {
  std::array<int, 3> parts{};
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? text.find(':', start) : text.size();
    if (end == std::string_view::npos)
      throw ConfigError("ratio must look like P:F:E, got '" + std::string(text) + "'");
    const auto field = text.substr(start, end - start);
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), parts[i]);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
      throw ConfigError("ratio must look like P:F:E, got '" + std::string(text) + "'");
    start = end + 1;
  }
  SchemeRatio ratio{parts[0], parts[1], parts[2]};
  ratio.validate();
  return ratio;
}

SchemeCounts apportion_counts(const SchemeRatio& ratio, std::size_t rows) {
  ratio.validate();
  if (rows == 0) throw DomainError("cannot apportion zero rows");

  // Quotas in units of 1/100 row, kept integral so the arithmetic is exact.
  const std::array<std::size_t, 3> pct{static_cast<std::size_t>(ratio.pot4),
                                       static_cast<std::size_t>(ratio.fixed4),
                                       static_cast<std::size_t>(ratio.fixed8)};
  std::array<std::size_t, 3> seats{};
  std::array<std::size_t, 3> remainder{};
  std::size_t seated = 0;
  for (int i = 0; i < 3; ++i) {
    seats[i] = pct[i] * rows / 100;
    remainder[i] = pct[i] * rows % 100;
    seated += seats[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; seated < rows; ++k, ++seated) ++seats[order[k]];

  if (pct[2] > 0 && seats[2] == 0) {
    // Over-representation = seats*100 - quota*100; take from the larger one,
    // Fixed-4 first on ties.
    auto excess = [&](int i) {
      return static_cast<long long>(seats[i] * 100) - static_cast<long long>(pct[i] * rows);
    };
    int donor = -1;
    for (int i : {1, 0}) {
      if (seats[i] == 0) continue;
      if (donor < 0 || excess(i) > excess(donor)) donor = i;
    }
    --seats[donor];
    ++seats[2];
  }
  return {seats[0], seats[1], seats[2]};
}

SchemeCounts RowAssignment::counts() const {
  SchemeCounts c;
  for (const auto& f : rows) {
    if (f == quant::kPot4) ++c.pot4;
    else if (f == quant::kFixed4) ++c.fixed4;
    else if (f == quant::kFixed8) ++c.fixed8;
    else quant::validate(f);
  }
  return c;
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double default_hvp_epsilon(std::span<const double> params) {
  return 1e-3 * (1.0 + norm2(params));
}

std::vector<double> hvp(const GradientFn& gradient, std::span<const double> params,
                        std::span<const double> v, double epsilon) {
  if (v.size() != params.size())
    throw ContractViolation("hvp: direction and parameter sizes differ");
  const double vnorm = norm2(v);
  if (vnorm == 0.0) throw DomainError("hvp: zero direction vector");
  if (!(epsilon > 0.0)) epsilon = default_hvp_epsilon(params);

  std::vector<double> plus(params.begin(), params.end());
  std::vector<double> minus(params.begin(), params.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double step = epsilon * v[i] / vnorm;
    plus[i] += step;
    minus[i] -= step;
  }
  const auto gp = gradient(plus);
  const auto gm = gradient(minus);
  if (gp.size() != params.size() || gm.size() != params.size())
    throw ContractViolation("hvp: gradient oracle returned the wrong size");
  std::vector<double> out(params.size());
  const double factor = vnorm / (2.0 * epsilon);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) * factor;
  return out;
}

double lambda_max_power_iteration(const HvpFn& apply, std::size_t dim,
                                  const PowerIterationOptions& options) {
  if (options.max_iters < 1) throw DomainError("power iteration needs at least one iteration");
  if (!(options.tol > 0.0)) throw DomainError("power iteration tolerance must be positive");
  if (dim == 0) return 0.0;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(rng);
  double n = norm2(v);
  for (auto& x : v) x /= n;

  double lambda = 0.0;
  for (int it = 0; it < options.max_iters; ++it) {
    const auto w = apply(v);
    if (w.size() != dim)
      throw ContractViolation("power iteration: operator returned " +
                              std::to_string(w.size()) + " entries, expected " +
                              std::to_string(dim));
    const double next = dot(v, w);
    n = norm2(w);
    if (n == 0.0) return 0.0;
    const bool converged = it > 0 && std::fabs(next - lambda) < options.tol * std::fabs(next);
    lambda = next;
    if (converged) break;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / n;
  }
  return lambda;
}

double variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double s = 0.0;
  for (double x : values) s += (x - mean) * (x - mean);
  return s / values.size();
}

double variance(std::span<const float> values) {
  std::vector<double> wide(values.begin(), values.end());
  return variance(wide);
}

unsigned thread_budget() {
  if (const char* env = std::getenv("ILMPQ_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<unsigned>(n);
  }
  return 1;
}

std::vector<FilterSensitivity> rank_filters(const RowGradientOracle& oracle,
                                            const RankOptions& options) {
  struct Job {
    std::size_t layer, row;
  };
  std::vector<Job> jobs;
  for (std::size_t l = 0; l < oracle.layer_count(); ++l)
    for (std::size_t r = 0; r < oracle.row_count(l); ++r) jobs.push_back({l, r});
  if (jobs.empty()) throw DomainError("rank_filters: model has no quantizable rows");

  std::vector<FilterSensitivity> out(jobs.size());
  auto run = [&](RowGradientOracle& local, std::size_t begin, std::size_t stride) {
    for (std::size_t j = begin; j < jobs.size(); j += stride) {
      const auto [layer, row] = jobs[j];
      const auto weights = local.row_weights(layer, row);
      GradientFn grad = [&](std::span<const double> w) {
        return local.row_gradient(layer, row, w);
      };
      const double eps = default_hvp_epsilon(weights);
      HvpFn apply = [&](std::span<const double> v) { return hvp(grad, weights, v, eps); };
      out[j] = {layer, row, lambda_max_power_iteration(apply, weights.size(), options.power),
                variance(weights)};
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(
      options.threads ? options.threads : thread_budget(),
      static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    auto local = oracle.clone();
    run(*local, 0, 1);
  } else {
    std::vector<std::unique_ptr<RowGradientOracle>> locals;
    for (unsigned t = 0; t < threads; ++t) locals.push_back(oracle.clone());
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(run, std::ref(*locals[t]), t, threads);
    for (auto& th : pool) th.join();
  }

  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.layer != b.layer) return a.layer < b.layer;
    if (a.lambda_max != b.lambda_max) return a.lambda_max > b.lambda_max;
    return a.row < b.row;
  });
  return out;
}

RowAssignment assign_layer(std::span<const FilterSensitivity> layer,
                           const SchemeRatio& ratio) {
  if (layer.empty()) throw DomainError("assign_layer: empty sensitivity list");
  const std::size_t n = layer.size();
  std::vector<bool> seen(n, false);
  for (const auto& s : layer) {
    if (s.row >= n || seen[s.row])
      throw ContractViolation("assign_layer: rows must be exactly 0.." + std::to_string(n - 1));
    seen[s.row] = true;
  }
  const auto counts = apportion_counts(ratio, n);

  std::vector<const FilterSensitivity*> by_lambda;
  for (const auto& s : layer) by_lambda.push_back(&s);
  std::sort(by_lambda.begin(), by_lambda.end(), [](auto* a, auto* b) {
    if (a->lambda_max != b->lambda_max) return a->lambda_max > b->lambda_max;
    return a->row < b->row;
  });

  RowAssignment out;
  out.rows.assign(n, quant::kFixed4);
  std::vector<const FilterSensitivity*> rest(by_lambda.begin() + counts.fixed8, by_lambda.end());
  for (std::size_t i = 0; i < counts.fixed8; ++i) out.rows[by_lambda[i]->row] = quant::kFixed8;

  std::sort(rest.begin(), rest.end(), [](auto* a, auto* b) {
    if (a->variance != b->variance) return a->variance < b->variance;
    return a->row < b->row;
  });
  for (std::size_t i = 0; i < counts.pot4; ++i) out.rows[rest[i]->row] = quant::kPot4;
  return out;
}

std::vector<RowAssignment> assign_all(std::span<const FilterSensitivity> ranked,
                                      std::size_t layer_count, const SchemeRatio& ratio) {
  std::vector<std::vector<FilterSensitivity>> per_layer(layer_count);
  for (const auto& s : ranked) {
    if (s.layer >= layer_count) throw ContractViolation("assign_all: layer index out of range");
    per_layer[s.layer].push_back(s);
  }
  std::vector<RowAssignment> out;
  for (const auto& l : per_layer) out.push_back(assign_layer(l, ratio));
  return out;
}

}  // namespace rowmix::assign
