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

// Analytic throughput model of a dual-engine accelerator: PoT rows run on
// LUT shift-add lanes, fixed rows on DSP multiply lanes, both engines busy
// at the same time within a layer, layers run one after another.
//
//   t_layer  = max(pot / R_lut, (fixed4 + c8 * fixed8) / R_dsp)
//   latency  = sum(t_layer) + overhead
//   GOP/s    = 2 * MACs / latency / 1e9
//
// Deployments that keep the first and last layers in 8-bit fixed point (the
// inter-layer baselines) reserve a share of the DSP lanes for those two
// layers; that share idles through the middle layers.

#include <cstddef>
#include <string>
#include <vector>

#include "rowmix/assign.hpp"
#include "rowmix/nn.hpp"

namespace rowmix::hw {

struct LayerShape {
  std::string name;
  std::size_t rows = 0;       // filters / output features
  std::size_t inner = 0;      // MACs per row per output position
  std::size_t positions = 1;  // output pixels (1 for dense)

  std::size_t macs_per_row() const { return inner * positions; }
  std::size_t macs() const { return rows * macs_per_row(); }
};

/// ResNet-18 at 224x224 (conv1, 16 3x3 convs, 3 projection shortcuts, fc).
std::vector<LayerShape> resnet18_shapes();
/// One entry per quantizable layer of the model.
std::vector<LayerShape> model_shapes(const nn::Model& model);

struct HwProfile {
  std::string name = "device";
  double lut_lanes = 1.0;  // shift-add MACs per cycle
  double dsp_lanes = 1.0;  // 4-bit multiply MACs per cycle
  double clock_hz = 100e6;
  double dsp_cost8 = 2.0;  // lane-cycles of an 8-bit MAC relative to 4-bit
  double fixed_overhead_s = 0.0;
  /// DSP share held by the 8-bit first/last layers in inter-layer deployments.
  double reserved8_share = 0.5;

  void validate() const;
  double lut_rate() const { return lut_lanes * clock_hz; }
  double dsp_rate() const { return dsp_lanes * clock_hz; }
};

struct LayerWork {
  std::size_t pot_macs = 0;
  std::size_t fixed4_macs = 0;
  std::size_t fixed8_macs = 0;
  bool dedicated8 = false;  // first/last layer held at 8 bits

  std::size_t total() const { return pot_macs + fixed4_macs + fixed8_macs; }
};

struct WorkloadSplit {
  std::vector<LayerWork> layers;
  bool first_last_fixed8 = false;

  std::size_t total_macs() const;
  double total_ops() const { return 2.0 * static_cast<double>(total_macs()); }
};

struct Deployment {
  assign::SchemeRatio ratio;
  bool first_last_fixed8 = false;
};

/// Row counts per layer come from apportion_counts, so every bucket is a
/// whole number of rows.
WorkloadSplit workload(const std::vector<LayerShape>& shapes, const Deployment& deployment);
inline WorkloadSplit workload(const std::vector<LayerShape>& shapes,
                              const assign::SchemeRatio& ratio) {
  return workload(shapes, Deployment{ratio, false});
}

struct Estimate {
  double throughput_gops = 0.0;
  double latency_s = 0.0;
  std::vector<double> layer_s;
};

Estimate estimate(const WorkloadSplit& work, const HwProfile& profile);

struct Anchor {
  Deployment deployment;
  double latency_s = 0.0;
  std::string label;
};

struct CalibrationOptions {
  /// Also fit dsp_cost8 and reserved8_share by an outer grid search. Needs
  /// at least five anchors.
  bool fit_shape = false;
};

struct Calibration {
  HwProfile profile;
  double rms_residual_s = 0.0;
  std::vector<double> residual_s;  // predicted - measured, per anchor
  bool overhead_fixed = false;     // true when the overhead was pinned to 0
};

/// Least-squares fit of the LUT rate, DSP rate and fixed overhead to the
/// measured latencies. `base` supplies the clock, the name and any
/// parameter that is not being fit. With exactly two anchors the overhead
/// is pinned to zero. Throws InsufficientData for fewer than two anchors
/// and DegenerateAnchors when the rates are not identifiable.
Calibration calibrate(const std::vector<Anchor>& anchors, const std::vector<LayerShape>& shapes,
                      const HwProfile& base, const CalibrationOptions& options = {});

struct SweepPoint {
  assign::SchemeRatio ratio;
  double throughput_gops = 0.0;
  double latency_s = 0.0;
};

struct Sweep {
  assign::SchemeRatio best;
  std::vector<SweepPoint> grid;  // pot4 ascending
};

/// Grid search over pot4 = 0, step, ..., 100 - fixed8 with
/// fixed4 = 100 - fixed8 - pot4. Highest throughput wins, ties to the larger
/// pot4.
Sweep optimal_ratio(const HwProfile& profile, const std::vector<LayerShape>& shapes,
                    int fixed8_percent, int step);

}  // namespace rowmix::hw
