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

#include "doctest.h"
#include "rowmix/errors.hpp"
#include "rowmix/nn.hpp"

using namespace rowmix;
using namespace rowmix::nn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float spread = 1.0f) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-spread, spread);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Linear probe loss sum(c * logits); its gradient w.r.t. the logits is c.
double probe(const Model& m, const Tensor& x, const Tensor& c) {
  const Tensor y = forward(m, x, Mode::Float);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += double{c[i]} * y[i];
  return s;
}

// Float32 storage limits finite differences; the absolute floor covers
// gradients that are near zero.
void check_close(double got, double ref) {
  INFO("got " << got << " ref " << ref);
  CHECK(std::fabs(got - ref) <= 1e-3 * std::fabs(ref) + 2e-4);
}

Model conv_net() {
  Model m({3, 6, 6});
  m.conv2d(4, 3, 1, 1).relu().maxpool(2).conv2d(5, 2, 1, 0).relu().avgpool(2).flatten().dense(3);
  m.init(8);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  for (auto& l : m.layers())
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("shapes compose") {
  const Model m = conv_net();
  CHECK(m.shape_at(0) == Shape{3, 6, 6});
  CHECK(m.shape_at(1) == Shape{4, 6, 6});
  CHECK(m.shape_at(3) == Shape{4, 3, 3});
  CHECK(m.shape_at(4) == Shape{5, 2, 2});
  CHECK(m.output_shape() == Shape{3});
  CHECK(m.quantizable_layers() == std::vector<std::size_t>{0, 3, 7});
  CHECK(m.layers()[0].rows() == 4);
  CHECK(m.layers()[0].row_length() == 27);

  Model bad({4});
  CHECK_THROWS_AS(bad.conv2d(2, 3), ContractViolation);
  Model odd({1, 5, 5});
  odd.maxpool(2);
  CHECK(odd.output_shape() == Shape{1, 2, 2});
  CHECK_THROWS_AS(parse_layer_kind("lstm"), ConfigError);
  CHECK(parse_layer_kind("conv2d") == LayerKind::Conv2d);
}

TEST_CASE("forward rejects a wrong input shape") {
  const Model m = conv_net();
  CHECK_THROWS_AS(forward(m, Tensor({2, 3, 5, 6}), Mode::Float), ContractViolation);
  CHECK_THROWS_AS(forward(m, Tensor({3, 6, 6}), Mode::Float), ContractViolation);
}

TEST_CASE("zero input and zero bias give zero logits") {
  Model m({6});
  m.dense(5).relu().dense(3);
  m.init(1);
  m.set_assignments({assign::RowAssignment{std::vector<quant::RowFormat>(5, quant::kPot4)},
                     assign::RowAssignment{std::vector<quant::RowFormat>(3, quant::kFixed8)}});
  for (Mode mode : {Mode::Float, Mode::Qat}) {
    const Tensor y = forward(m, Tensor({4, 6}), mode);
    for (float v : y.values()) CHECK(v == 0.0f);
  }
}

TEST_CASE("QAT on grid points is the float forward") {
  Model m({4});
  m.dense(3).relu();
  m.activation() = {4, 6.0, 7.0};  // input step 1
  auto& l = m.layers()[0];
  // Fixed-4 row, max 0.875 so scale 0.125; PoT rows with max 1 and 0.5.
  const float w[] = {0.875f, -0.375f, 0.125f, 0.0f, 1.0f, -0.5f, 0.25f, 0.015625f,
                     0.5f, 0.125f, -0.5f, 0.0f};
  for (int i = 0; i < 12; ++i) l.weight[i] = w[i];
  l.bias[1] = 0.25f;
  m.set_assignments({{{quant::kFixed4, quant::kPot4, quant::kPot4}}});
  const Tensor x({2, 4}, {1, -2, 3, 7, 0, 4, -5, -1});
  const Tensor a = forward(m, x, Mode::Float);
  const Tensor b = forward(m, x, Mode::Qat);
  CHECK(a == b);
}

TEST_CASE("hand-traced quantized forward of a 2-2-2 network") {
  Model m({2});
  m.dense(2).relu().dense(2);
  m.activation() = {4, 3.5, 7.0};  // steps 0.5 and 1
  auto& l0 = m.layers()[0];
  l0.weight = Tensor({2, 2}, {0.5f, 0.25f, 1.0f, -0.3f});
  l0.bias = Tensor({2}, {1.0f, 0.0f});
  auto& l2 = m.layers()[2];
  l2.weight = Tensor({2, 2}, {1.0f, 1.0f, -0.5f, 2.0f});
  m.set_assignments({{{quant::kPot4, quant::kFixed4}}, {{quant::kFixed8, quant::kFixed8}}});
  // input [1.2, -2.6] -> codes [1, -3]
  // row 0 PoT, scale 0.5: 0.5*1 + 0.25*-3 + 1 = 0.75 -> relu 0.75 -> code 2 (1.5 rounds away) -> 1.0
  // row 1 Fixed-4, scale 1/7: -0.3 -> -2/7; 1 + 6/7 = 13/7 -> code 4 (3.71) -> 2.0
  // out 0 Fixed-8 scale 1/127: 1*1 + 1*2 = 3
  // out 1 Fixed-8 scale 2/127: -0.5 -> -32 -> -64/127; -64/127 + 4
  const Tensor y = forward(m, Tensor({1, 2}, {1.2f, -2.6f}), Mode::Qat);
  CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(y[1] == doctest::Approx(4.0 - 64.0 / 127).epsilon(1e-6));

  ActivationTrace trace;
  forward(m, Tensor({1, 2}, {1.2f, -2.6f}), Mode::Qat, nullptr, &trace);
  CHECK(trace == ActivationTrace{{1, -3}, {2, 4}});
}

TEST_CASE("QAT needs assignments") {
  Model m({3});
  m.dense(2);
  CHECK_THROWS_AS(forward(m, Tensor({1, 3}), Mode::Qat), StateError);
}

TEST_CASE("backward before forward is a state error") {
  const Model m = conv_net();
  ForwardCache cache;
  CHECK_THROWS_AS(backward_ste(m, cache, Tensor({1, 3})), StateError);
}

TEST_CASE("float gradients match central differences") {
  Model m = conv_net();
  const Tensor x = random_tensor({2, 3, 6, 6}, 3);
  const Tensor c = random_tensor({2, 3}, 4);
  ForwardCache cache;
  forward(m, x, Mode::Float, &cache);
  const auto g = backward_ste(m, cache, c);
  const double h = 2e-3;
  for (std::size_t li : m.quantizable_layers()) {
    auto& l = m.layers()[li];
    for (std::size_t i = 0; i < l.weight.size(); i += 7) {
      const float saved = l.weight[i];
      l.weight[i] = saved + static_cast<float>(h);
      const double up = probe(m, x, c);
      l.weight[i] = saved - static_cast<float>(h);
      const double down = probe(m, x, c);
      l.weight[i] = saved;
      INFO("layer " << li << " weight " << i);
      check_close(g.weight[li][i], (up - down) / (2 * h));
    }
    for (std::size_t i = 0; i < l.bias.size(); ++i) {
      const float saved = l.bias[i];
      l.bias[i] = saved + static_cast<float>(h);
      const double up = probe(m, x, c);
      l.bias[i] = saved - static_cast<float>(h);
      const double down = probe(m, x, c);
      l.bias[i] = saved;
      check_close(g.bias[li][i], (up - down) / (2 * h));
    }
  }
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); i += 5) {
    xp[i] = x[i] + static_cast<float>(h);
    const double up = probe(m, xp, c);
    xp[i] = x[i] - static_cast<float>(h);
    const double down = probe(m, xp, c);
    xp[i] = x[i];
    check_close(g.input[i], (up - down) / (2 * h));
  }
}

TEST_CASE("sum-of-logits gradient of one dense layer is the input outer product") {
  Model m({3});
  m.dense(2);
  m.init(2);
  m.set_assignments({{{quant::kFixed4, quant::kPot4}}});
  const Tensor x({2, 3}, {1, -2, 0.5f, 3, 1, -1});
  for (Mode mode : {Mode::Float, Mode::Qat}) {
    ForwardCache cache;
    forward(m, x, mode, &cache);
    Tensor ones({2, 2});
    ones.fill(1.0f);
    const auto g = backward_ste(m, cache, ones);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(g.weight[0][o * 3 + j] == doctest::Approx(cache.inputs[0][j] + cache.inputs[0][3 + j]));
  }
}

TEST_CASE("straight-through estimator cuts gradients outside the clip") {
  Model m({3});
  m.dense(2);
  m.init(5);
  m.activation() = {4, 6.0, 2.0};
  m.set_assignments({{{quant::kFixed4, quant::kFixed4}}});
  const Tensor x({1, 3}, {0.5f, 50.0f, -1.5f});
  ForwardCache cache;
  forward(m, x, Mode::Qat, &cache);
  Tensor ones({1, 2});
  ones.fill(1.0f);
  const auto g = backward_ste(m, cache, ones);
  CHECK(g.input[0] != 0.0f);
  CHECK(g.input[1] == 0.0f);
  CHECK(g.input[2] != 0.0f);
  for (auto p : cache.weight_pass[0]) CHECK(p == 1);
}

TEST_CASE("softmax cross-entropy") {
  const Tensor z({2, 4});
  const std::vector<int> y{0, 3};
  const auto r = softmax_cross_entropy(z, y);
  CHECK(r.loss == doctest::Approx(std::log(4.0)));
  CHECK(r.grad[0] == doctest::Approx((0.25 - 1) / 2));
  CHECK(r.grad[1] == doctest::Approx(0.25 / 2));
  CHECK_THROWS_AS(softmax_cross_entropy(z, std::vector<int>{0, 4}), ContractViolation);
  CHECK_THROWS_AS(softmax_cross_entropy(z, std::vector<int>{0}), ContractViolation);

  Tensor logits = random_tensor({3, 5}, 6, 2.0f);
  const std::vector<int> labels{1, 4, 0};
  const auto base = softmax_cross_entropy(logits, labels);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const float saved = logits[i];
    logits[i] = saved + 1e-2f;
    const double up = softmax_cross_entropy(logits, labels).loss;
    logits[i] = saved - 1e-2f;
    const double down = softmax_cross_entropy(logits, labels).loss;
    logits[i] = saved;
    check_close(base.grad[i], (up - down) / 2e-2);
  }
}

TEST_CASE("row oracle gradient is the backward row gradient") {
  Model m = conv_net();
  const Tensor x = random_tensor({4, 3, 6, 6}, 12);
  const std::vector<int> labels{0, 1, 2, 1};
  ModelRowOracle oracle(m, x, labels, 2.0);
  CHECK(oracle.layer_count() == 3);
  CHECK(oracle.row_count(1) == 5);
  ForwardCache cache;
  const auto loss = softmax_cross_entropy(forward(m, x, Mode::Float, &cache), labels);
  const auto g = backward_ste(m, cache, loss.grad);
  const auto w = oracle.row_weights(1, 2);
  const auto rg = oracle.row_gradient(1, 2, w);
  const std::size_t len = m.layers()[3].row_length();
  for (std::size_t j = 0; j < len; ++j)
    CHECK(rg[j] == doctest::Approx(2.0 * g.weight[3][2 * len + j]).epsilon(1e-5));
  // the oracle restores the row after evaluating
  CHECK(oracle.row_weights(1, 2) == w);
  CHECK_THROWS_AS(ModelRowOracle(m, Tensor(), {}), DomainError);
}

TEST_CASE("init is seeded") {
  Model a = conv_net(), b = conv_net();
  CHECK(a == b);
  b.init(99);
  CHECK_FALSE(a == b);
}
