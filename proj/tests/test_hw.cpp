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

#include <random>

#include "doctest.h"
#include "rowmix/errors.hpp"
#include "rowmix/hw.hpp"

using namespace rowmix;
using namespace rowmix::hw;

namespace {

HwProfile profile(double lut, double dsp, double overhead = 0.0) {
  HwProfile p;
  p.lut_lanes = lut;
  p.dsp_lanes = dsp;
  p.clock_hz = 100e6;
  p.fixed_overhead_s = overhead;
  return p;
}

}  // namespace

TEST_CASE("ResNet-18 shape table") {
  const auto s = resnet18_shapes();
  CHECK(s.size() == 21);
  std::size_t macs = 0;
  for (const auto& l : s) macs += l.macs();
  CHECK(2.0 * macs / 1e9 == doctest::Approx(3.63).epsilon(0.01));
  CHECK(s.front().name == "conv1");
  CHECK(s.back().rows == 1000);
}

TEST_CASE("workload") {
  const std::vector<LayerShape> dense{{"fc", 20, 64, 1}};
  const auto w = workload(dense, assign::SchemeRatio{60, 35, 5});
  CHECK(w.layers[0].pot_macs == 12 * 64);
  CHECK(w.layers[0].fixed4_macs == 7 * 64);
  CHECK(w.layers[0].fixed8_macs == 1 * 64);

  const auto shapes = resnet18_shapes();
  const auto all_pot = workload(shapes, assign::SchemeRatio{100, 0, 0});
  for (const auto& l : all_pot.layers) CHECK(l.total() == l.pot_macs);

  std::mt19937_64 rng(1);
  std::size_t total = 0;
  for (const auto& l : shapes) total += l.macs();
  for (int t = 0; t < 200; ++t) {
    const int a = static_cast<int>(rng() % 101), b = static_cast<int>(rng() % (101 - a));
    for (bool edge : {false, true}) {
      const auto split = workload(shapes, Deployment{{a, b, 100 - a - b}, edge});
      CHECK(split.total_macs() == total);
    }
  }
  const auto edge = workload(shapes, Deployment{{100, 0, 0}, true});
  CHECK(edge.layers.front().fixed8_macs == shapes.front().macs());
  CHECK(edge.layers.back().fixed8_macs == shapes.back().macs());
  CHECK(edge.layers[1].pot_macs == shapes[1].macs());
  CHECK_THROWS_AS(workload({{"z", 0, 3, 1}}, assign::SchemeRatio{}), ConfigError);
}

TEST_CASE("estimate") {
  const auto shapes = resnet18_shapes();
  SUBCASE("all-PoT latency depends only on the LUT engine") {
    const auto w = workload(shapes, assign::SchemeRatio{100, 0, 0});
    const auto a = estimate(w, profile(500, 100));
    const auto b = estimate(w, profile(500, 7));
    CHECK(a.latency_s == b.latency_s);
    CHECK(a.latency_s == doctest::Approx(w.total_macs() / (500 * 100e6)));
    CHECK(a.throughput_gops == doctest::Approx(w.total_ops() / a.latency_s / 1e9));
  }
  SUBCASE("doubling both engines halves compute latency") {
    const auto w = workload(shapes, assign::SchemeRatio{50, 50, 0});
    const double a = estimate(w, profile(300, 300)).latency_s;
    const double b = estimate(w, profile(600, 600)).latency_s;
    CHECK(b == doctest::Approx(a / 2));
  }
  SUBCASE("overhead adds once") {
    const auto w = workload(shapes, assign::SchemeRatio{60, 35, 5});
    CHECK(estimate(w, profile(300, 200, 1e-3)).latency_s ==
          doctest::Approx(estimate(w, profile(300, 200)).latency_s + 1e-3));
  }
  SUBCASE("8-bit MACs cost dsp_cost8 lane-cycles") {
    const std::vector<LayerShape> one{{"fc", 10, 100, 1}};
    const auto w = workload(one, assign::SchemeRatio{0, 0, 100});
    CHECK(estimate(w, profile(1, 10)).latency_s == doctest::Approx(2 * 1000 / (10 * 100e6)));
  }
  SUBCASE("a zero-rate engine with work never finishes") {
    const auto w = workload(shapes, assign::SchemeRatio{50, 50, 0});
    const auto e = estimate(w, profile(0, 100));
    CHECK(std::isinf(e.latency_s));
    CHECK(e.throughput_gops == 0.0);
  }
  SUBCASE("moving work toward the idle engine never hurts") {
    // Single layer: latency as a function of the PoT share is unimodal with
    // its minimum where both engines finish together.
    const std::vector<LayerShape> one{{"conv", 100, 576, 196}};
    const auto p = profile(400, 250);
    double prev = INFINITY;
    bool rising = false;
    for (int pot = 0; pot <= 100; ++pot) {
      const double t = estimate(workload(one, assign::SchemeRatio{pot, 100 - pot, 0}), p).latency_s;
      if (t > prev) rising = true;
      if (rising) CHECK(t >= prev);
      prev = t;
    }
  }
}

TEST_CASE("profile validation") {
  CHECK_THROWS_AS(profile(-1, 1).validate(), ConfigError);
  auto p = profile(1, 1);
  p.clock_hz = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = profile(1, 1, -1e-3);
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("calibration round-trips synthetic anchors") {
  const auto shapes = resnet18_shapes();
  HwProfile truth = profile(1800, 700, 1.5e-3);
  truth.name = "synthetic";
  std::vector<Anchor> anchors;
  for (auto r : {assign::SchemeRatio{0, 100, 0}, assign::SchemeRatio{100, 0, 0},
                 assign::SchemeRatio{50, 50, 0}, assign::SchemeRatio{80, 15, 5},
                 assign::SchemeRatio{30, 60, 10}}) {
    anchors.push_back({{r, false}, estimate(workload(shapes, r), truth).latency_s, r.to_string()});
  }
  HwProfile base;
  base.name = "synthetic";
  const auto cal = calibrate(anchors, shapes, base);
  CHECK(cal.profile.lut_lanes == doctest::Approx(1800).epsilon(1e-6));
  CHECK(cal.profile.dsp_lanes == doctest::Approx(700).epsilon(1e-6));
  CHECK(cal.profile.fixed_overhead_s == doctest::Approx(1.5e-3).epsilon(1e-6));
  CHECK(cal.rms_residual_s < 1e-9);
  CHECK_FALSE(cal.overhead_fixed);

  SUBCASE("deterministic") {
    const auto again = calibrate(anchors, shapes, base);
    CHECK(again.profile.lut_lanes == cal.profile.lut_lanes);
    CHECK(again.residual_s == cal.residual_s);
  }
  SUBCASE("shape parameters are recovered too") {
    HwProfile t2 = truth;
    t2.dsp_cost8 = 1.5;
    t2.reserved8_share = 0.3;
    std::vector<Anchor> a2;
    for (auto r : {assign::SchemeRatio{0, 100, 0}, assign::SchemeRatio{100, 0, 0},
                   assign::SchemeRatio{50, 50, 0}, assign::SchemeRatio{60, 30, 10}})
      for (bool edge : {false, true})
        a2.push_back({{r, edge}, estimate(workload(shapes, Deployment{r, edge}), t2).latency_s, ""});
    const auto c2 = calibrate(a2, shapes, base, {true});
    CHECK(c2.profile.dsp_cost8 == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(c2.profile.reserved8_share == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(c2.rms_residual_s < 1e-9);
  }
}

TEST_CASE("two-anchor calibration") {
  const auto shapes = resnet18_shapes();
  // Fully quantized Fixed-4 at 25.4 ms and PoT-4 at 10.3 ms predict the
  // 50:50 deployment measured at 12.2 ms.
  const std::vector<Anchor> anchors{{{{0, 100, 0}, false}, 25.4e-3, "fixed"},
                                    {{{100, 0, 0}, false}, 10.3e-3, "pot"}};
  const auto cal = calibrate(anchors, shapes, HwProfile{});
  CHECK(cal.overhead_fixed);
  CHECK(cal.profile.fixed_overhead_s == 0.0);
  const double mixed = estimate(workload(shapes, assign::SchemeRatio{50, 50, 0}), cal.profile).latency_s;
  CHECK(std::fabs(mixed - 12.2e-3) <= 0.15 * 12.2e-3);

  CHECK_THROWS_AS(calibrate({anchors[0]}, shapes, HwProfile{}), InsufficientData);
  CHECK_THROWS_AS(calibrate({anchors[0], anchors[0]}, shapes, HwProfile{}), DegenerateAnchors);
  CHECK_THROWS_AS(calibrate(anchors, shapes, HwProfile{}, {true}), InsufficientData);
}

TEST_CASE("optimal ratio") {
  const auto shapes = resnet18_shapes();
  CHECK(optimal_ratio(profile(500, 0), shapes, 5, 5).best == assign::SchemeRatio{95, 0, 5});
  CHECK(optimal_ratio(profile(0, 500), shapes, 5, 5).best == assign::SchemeRatio{0, 95, 5});
  const auto two = optimal_ratio(profile(500, 500), shapes, 0, 100);
  CHECK(two.grid.size() == 2);
  CHECK_THROWS_AS(optimal_ratio(profile(1, 1), shapes, 5, 10), ConfigError);
  CHECK_THROWS_AS(optimal_ratio(profile(1, 1), shapes, 5, 0), ConfigError);

  // A balanced device has a single interior peak.
  const auto sweep = optimal_ratio(profile(1000, 600), shapes, 5, 5);
  CHECK(sweep.grid.size() == 20);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < sweep.grid.size(); ++i)
    if (sweep.grid[i].throughput_gops > sweep.grid[peak].throughput_gops) peak = i;
  CHECK(peak > 0);
  CHECK(peak + 1 < sweep.grid.size());
  for (std::size_t i = 1; i <= peak; ++i)
    CHECK(sweep.grid[i].throughput_gops >= sweep.grid[i - 1].throughput_gops);
  for (std::size_t i = peak + 1; i < sweep.grid.size(); ++i)
    CHECK(sweep.grid[i].throughput_gops <= sweep.grid[i - 1].throughput_gops);
  CHECK(sweep.best == sweep.grid[peak].ratio);
}
