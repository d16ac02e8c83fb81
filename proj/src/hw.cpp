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

#include "rowmix/hw.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rowmix/errors.hpp"

namespace rowmix::hw {

std::vector<LayerShape> resnet18_shapes() {
  std::vector<LayerShape> s;
  s.push_back({"conv1", 64, 3 * 7 * 7, 112 * 112});
  struct Stage {
    std::size_t in, out, hw;
  };
  const Stage stages[] = {{64, 64, 56}, {64, 128, 28}, {128, 256, 14}, {256, 512, 7}};
  int idx = 2;
  for (const auto& st : stages) {
    const std::string name = "layer" + std::to_string(idx++);
    const std::size_t pos = st.hw * st.hw;
    s.push_back({name + ".0.conv1", st.out, st.in * 9, pos});
    s.push_back({name + ".0.conv2", st.out, st.out * 9, pos});
    if (st.in != st.out) s.push_back({name + ".0.downsample", st.out, st.in, pos});
    s.push_back({name + ".1.conv1", st.out, st.out * 9, pos});
    s.push_back({name + ".1.conv2", st.out, st.out * 9, pos});
  }
  s.push_back({"fc", 1000, 512, 1});
  return s;
}

std::vector<LayerShape> model_shapes(const nn::Model& model) {
  std::vector<LayerShape> out;
  for (auto i : model.quantizable_layers()) {
    const auto& l = model.layers()[i];
    const Shape y = model.shape_at(i + 1);
    const std::size_t positions = y.size() == 3 ? y[1] * y[2] : 1;
    out.push_back({std::string(nn::to_string(l.kind)) + std::to_string(i), l.rows(), l.row_length(),
                   positions});
  }
  return out;
}

void HwProfile::validate() const {
  auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
  if (bad(lut_lanes) || bad(dsp_lanes)) throw ConfigError("lane counts must be finite and >= 0");
  if (!(clock_hz > 0.0) || !std::isfinite(clock_hz)) throw ConfigError("clock must be positive");
  if (!(dsp_cost8 > 0.0)) throw ConfigError("dsp_cost8 must be positive");
  if (bad(fixed_overhead_s)) throw ConfigError("fixed overhead must be >= 0");
  if (!(reserved8_share > 0.0 && reserved8_share <= 1.0))
    throw ConfigError("reserved8_share must be in (0, 1]");
}

std::size_t WorkloadSplit::total_macs() const {
  std::size_t t = 0;
  for (const auto& l : layers) t += l.total();
  return t;
}

WorkloadSplit workload(const std::vector<LayerShape>& shapes, const Deployment& deployment) {
  deployment.ratio.validate();
  if (shapes.empty()) throw ConfigError("workload needs at least one layer shape");
  WorkloadSplit out;
  out.first_last_fixed8 = deployment.first_last_fixed8;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (s.rows == 0 || s.inner == 0 || s.positions == 0)
      throw ConfigError("layer shape '" + s.name + "' has a zero dimension");
    LayerWork w;
    const bool edge = i == 0 || i + 1 == shapes.size();
    if (deployment.first_last_fixed8 && edge) {
      w.fixed8_macs = s.macs();
      w.dedicated8 = true;
    } else {
      const auto c = assign::apportion_counts(deployment.ratio, s.rows);
      w.pot_macs = c.pot4 * s.macs_per_row();
      w.fixed4_macs = c.fixed4 * s.macs_per_row();
      w.fixed8_macs = c.fixed8 * s.macs_per_row();
    }
    out.layers.push_back(w);
  }
  return out;
}

namespace {

// Work per engine in MACs, already divided by the lane share the engine gets
// and weighted by the 8-bit cost; time = lut * a + dsp * d.
struct EngineWork {
  double lut = 0.0;
  double dsp = 0.0;
};

std::vector<EngineWork> engine_work(const WorkloadSplit& work, double cost8, double reserved) {
  bool any_fixed4 = false;
  for (const auto& l : work.layers)
    if (!l.dedicated8 && l.fixed4_macs > 0) any_fixed4 = true;
  // With no 4-bit fixed work elsewhere the 8-bit layers get every DSP lane.
  const bool split = work.first_last_fixed8 && any_fixed4;
  const double share8 = split ? reserved : 1.0;
  const double share4 = split ? 1.0 - reserved : 1.0;

  std::vector<EngineWork> out;
  for (const auto& l : work.layers) {
    EngineWork e;
    e.lut = static_cast<double>(l.pot_macs);
    if (l.dedicated8) {
      e.dsp = cost8 * static_cast<double>(l.fixed8_macs) / share8;
    } else {
      e.dsp = (static_cast<double>(l.fixed4_macs) + cost8 * static_cast<double>(l.fixed8_macs)) / share4;
    }
    out.push_back(e);
  }
  return out;
}

double engine_time(double macs, double rate) {
  if (macs == 0.0) return 0.0;
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  return macs / rate;
}

}  // namespace

Estimate estimate(const WorkloadSplit& work, const HwProfile& profile) {
  profile.validate();
  Estimate e;
  const auto eng = engine_work(work, profile.dsp_cost8, profile.reserved8_share);
  double total = 0.0;
  for (const auto& l : eng) {
    const double t = std::max(engine_time(l.lut, profile.lut_rate()), engine_time(l.dsp, profile.dsp_rate()));
    e.layer_s.push_back(t);
    total += t;
  }
  e.latency_s = total + profile.fixed_overhead_s;
  e.throughput_gops = std::isfinite(e.latency_s) && e.latency_s > 0.0
                          ? work.total_ops() / e.latency_s / 1e9
                          : 0.0;
  return e;
}

namespace {

constexpr double kGiga = 1e9;

struct InnerFit {
  double a = 0.0, d = 0.0, o = 0.0;  // s per GMAC (LUT), s per GMAC (DSP), s
  double sse = std::numeric_limits<double>::infinity();
  bool overhead_fixed = false;
  bool ok = false;
};

using AnchorWork = std::vector<std::vector<EngineWork>>;  // [anchor][layer], in GMAC

double predict(const std::vector<EngineWork>& layers, double a, double d, double o) {
  double t = o;
  for (const auto& l : layers) t += std::max(a * l.lut, d * l.dsp);
  return t;
}

// Active-set least squares for the piecewise-linear latency model: fix which
// engine bounds each layer, solve the linear problem, re-derive the bounds,
// repeat until they stop changing.
InnerFit fit_rates(const AnchorWork& work, const std::vector<double>& target, bool allow_overhead,
                   double start_ratio) {
  const std::size_t n = work.size();
  double total_gmac = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& l : work[i]) total_gmac += l.lut + l.dsp;
    mean_t += target[i];
  }
  InnerFit best;
  if (total_gmac <= 0.0) return best;
  double a = mean_t / total_gmac, d = a * start_ratio;
  bool pin_overhead = !allow_overhead;

  for (int iter = 0; iter < 64; ++iter) {
    const int cols = pin_overhead ? 2 : 3;
    Eigen::MatrixXd A(n, cols);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sl = 0.0, sd = 0.0;
      for (const auto& l : work[i]) {
        if (a * l.lut >= d * l.dsp) sl += l.lut;
        else sd += l.dsp;
      }
      A(i, 0) = sl;
      A(i, 1) = sd;
      if (!pin_overhead) A(i, 2) = 1.0;
      b(i) = target[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols) break;
    const Eigen::VectorXd x = qr.solve(b);
    if (!pin_overhead && x(2) < 0.0) {
      pin_overhead = true;
      continue;
    }
    const double na = x(0), nd = x(1), no = pin_overhead ? 0.0 : x(2);
    if (!(na > 0.0) || !(nd > 0.0)) break;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = predict(work[i], na, nd, no) - target[i];
      sse += r * r;
    }
    if (sse < best.sse) best = {na, nd, no, sse, pin_overhead, true};
    const bool stable = na == a && nd == d;
    a = na;
    d = nd;
    if (stable) break;
  }
  return best;
}

InnerFit fit_rates_multistart(const AnchorWork& work, const std::vector<double>& target,
                              bool allow_overhead) {
  InnerFit best;
  for (double r : {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto f = fit_rates(work, target, allow_overhead, r);
    if (f.ok && f.sse < best.sse) best = f;
  }
  return best;
}

AnchorWork anchor_work(const std::vector<Anchor>& anchors, const std::vector<LayerShape>& shapes,
                       double cost8, double reserved) {
  AnchorWork out;
  for (const auto& an : anchors) {
    auto eng = engine_work(workload(shapes, an.deployment), cost8, reserved);
    for (auto& e : eng) {
      e.lut /= kGiga;
      e.dsp /= kGiga;
    }
    out.push_back(std::move(eng));
  }
  return out;
}

}  // namespace

Calibration calibrate(const std::vector<Anchor>& anchors, const std::vector<LayerShape>& shapes,
                      const HwProfile& base, const CalibrationOptions& options) {
  base.validate();
  if (anchors.size() < 2) throw InsufficientData("calibration needs at least two anchors");
  std::vector<double> target;
  for (const auto& a : anchors) {
    if (!(a.latency_s > 0.0)) throw ConfigError("anchor latency must be positive");
    target.push_back(a.latency_s);
  }
  const bool allow_overhead = anchors.size() > 2;

  bool has_split = false, has_fixed8 = false;
  for (const auto& a : anchors) {
    has_split |= a.deployment.first_last_fixed8 && a.deployment.ratio.fixed4 > 0;
    has_fixed8 |= a.deployment.first_last_fixed8 || a.deployment.ratio.fixed8 > 0;
  }
  if (options.fit_shape && anchors.size() < 5)
    throw InsufficientData("fitting dsp_cost8 / reserved8_share needs at least five anchors");

  double cost8 = base.dsp_cost8, reserved = base.reserved8_share;
  InnerFit fit = fit_rates_multistart(anchor_work(anchors, shapes, cost8, reserved), target,
                                      allow_overhead);
  if (options.fit_shape && (has_split || has_fixed8)) {
    // Coarse grid, then two rounds of local refinement.
    double c_lo = 1.0, c_hi = 4.0, c_step = 0.1;
    double r_lo = 0.05, r_hi = 0.95, r_step = 0.05;
    for (int round = 0; round < 3; ++round) {
      for (double c = c_lo; c <= c_hi + 1e-12; c += c_step) {
        if (!has_fixed8 && c != c_lo) break;
        for (double r = r_lo; r <= r_hi + 1e-12; r += r_step) {
          const double cc = has_fixed8 ? c : base.dsp_cost8;
          const double rr = has_split ? r : base.reserved8_share;
          const auto f = fit_rates_multistart(anchor_work(anchors, shapes, cc, rr), target,
                                              allow_overhead);
          if (f.ok && f.sse < fit.sse) {
            fit = f;
            cost8 = cc;
            reserved = rr;
          }
          if (!has_split) break;
        }
      }
      c_lo = std::max(1.0, cost8 - c_step);
      c_hi = cost8 + c_step;
      c_step /= 10.0;
      r_lo = std::max(0.005, reserved - r_step);
      r_hi = std::min(0.995, reserved + r_step);
      r_step /= 10.0;
    }
  }
  if (!fit.ok) throw DegenerateAnchors("anchors do not identify both engine rates");

  Calibration out;
  out.profile = base;
  out.profile.lut_lanes = kGiga / fit.a / base.clock_hz;
  out.profile.dsp_lanes = kGiga / fit.d / base.clock_hz;
  out.profile.fixed_overhead_s = fit.o;
  out.profile.dsp_cost8 = cost8;
  out.profile.reserved8_share = reserved;
  out.overhead_fixed = fit.overhead_fixed;
  double ss = 0.0;
  for (const auto& an : anchors) {
    const double r = estimate(workload(shapes, an.deployment), out.profile).latency_s - an.latency_s;
    out.residual_s.push_back(r);
    ss += r * r;
  }
  out.rms_residual_s = std::sqrt(ss / static_cast<double>(anchors.size()));
  return out;
}

Sweep optimal_ratio(const HwProfile& profile, const std::vector<LayerShape>& shapes,
                    int fixed8_percent, int step) {
  if (fixed8_percent < 0 || fixed8_percent > 100) throw ConfigError("fixed8 must be in [0, 100]");
  const int range = 100 - fixed8_percent;
  if (step <= 0 || range % step != 0)
    throw ConfigError("step must be positive and divide " + std::to_string(range));
  Sweep out;
  double best = -1.0;
  for (int pot = 0; pot <= range; pot += step) {
    const assign::SchemeRatio ratio{pot, range - pot, fixed8_percent};
    const auto e = estimate(workload(shapes, ratio), profile);
    out.grid.push_back({ratio, e.throughput_gops, e.latency_s});
    if (e.throughput_gops >= best) {
      best = e.throughput_gops;
      out.best = ratio;
    }
  }
  return out;
}

}  // namespace rowmix::hw
