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

#include "rowmix/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "rowmix/errors.hpp"
#include "rowmix/quant.hpp"

namespace rowmix::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::Dense, LayerKind::Conv2d, LayerKind::ReLU, LayerKind::MaxPool,
                 LayerKind::AvgPool, LayerKind::Flatten})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

std::size_t Layer::rows() const {
  if (kind == LayerKind::Dense) return out_features;
  if (kind == LayerKind::Conv2d) return out_channels;
  return 0;
}

std::size_t Layer::row_length() const {
  if (kind == LayerKind::Dense) return in_features;
  if (kind == LayerKind::Conv2d) return in_channels * kernel * kernel;
  return 0;
}

double ActivationSpec::step(bool model_input) const {
  return (model_input ? input_clip : clip) / quant::fixed_qmax(bits);
}

namespace {

Shape layer_output_shape(const Layer& layer, const Shape& in) {
  auto need_rank = [&](std::size_t r) {
    if (in.size() != r)
      throw ContractViolation(std::string(to_string(layer.kind)) + " expects a rank-" +
                              std::to_string(r) + " input, got " + shape_string(in));
  };
  switch (layer.kind) {
    case LayerKind::Dense:
      need_rank(1);
      if (in[0] != layer.in_features)
        throw ContractViolation("dense expects " + std::to_string(layer.in_features) +
                                " features, got " + std::to_string(in[0]));
      return {layer.out_features};
    case LayerKind::Conv2d: {
      need_rank(3);
      if (in[0] != layer.in_channels)
        throw ContractViolation("conv2d expects " + std::to_string(layer.in_channels) +
                                " channels, got " + std::to_string(in[0]));
      const std::size_t h = in[1] + 2 * layer.padding, w = in[2] + 2 * layer.padding;
      if (h < layer.kernel || w < layer.kernel)
        throw ContractViolation("conv2d kernel larger than its padded input");
      return {layer.out_channels, (h - layer.kernel) / layer.stride + 1,
              (w - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      need_rank(3);
      if (in[1] < layer.kernel || in[2] < layer.kernel)
        throw ContractViolation("pool window larger than its input");
      return {in[0], in[1] / layer.kernel, in[2] / layer.kernel};
    case LayerKind::Flatten:
      return {shape_size(in)};
    case LayerKind::ReLU:
      return in;
  }
  return in;
}

}  // namespace

Shape Model::shape_at(std::size_t i) const {
  Shape s = input_shape_;
  for (std::size_t k = 0; k < i && k < layers_.size(); ++k) s = layer_output_shape(layers_[k], s);
  return s;
}

Shape Model::output_shape() const { return shape_at(layers_.size()); }

void Model::push(Layer layer) {
  const Shape in = output_shape();
  if (layer.quantizable()) {
    const Shape ws = layer.kind == LayerKind::Dense
                         ? Shape{layer.out_features, layer.in_features}
                         : Shape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
    if (layer.weight.shape() != ws || layer.bias.shape() != Shape{layer.rows()})
      throw ContractViolation("layer parameter shapes do not match its geometry");
    if (layer.assignment && layer.assignment->size() != layer.rows())
      throw ContractViolation("layer assignment has the wrong number of rows");
  }
  if (layer.stride == 0) throw ContractViolation("stride must be positive");
  if ((layer.kind == LayerKind::MaxPool || layer.kind == LayerKind::AvgPool ||
       layer.kind == LayerKind::Conv2d) && layer.kernel == 0)
    throw ContractViolation("kernel/window must be positive");
  layer_output_shape(layer, in);
  layers_.push_back(std::move(layer));
}

Model& Model::dense(std::size_t out_features) {
  const Shape in = output_shape();
  if (in.size() != 1) throw ContractViolation("dense after a rank-" + std::to_string(in.size()) + " output; add flatten()");
  Layer l;
  l.kind = LayerKind::Dense;
  l.in_features = in[0];
  l.out_features = out_features;
  l.weight = Tensor({out_features, in[0]});
  l.bias = Tensor({out_features});
  push(std::move(l));
  return *this;
}

Model& Model::conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                     std::size_t padding) {
  const Shape in = output_shape();
  if (in.size() != 3) throw ContractViolation("conv2d needs a (C, H, W) input");
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.in_channels = in[0];
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.weight = Tensor({out_channels, in[0], kernel, kernel});
  l.bias = Tensor({out_channels});
  push(std::move(l));
  return *this;
}

Model& Model::relu() {
  Layer l;
  l.kind = LayerKind::ReLU;
  push(std::move(l));
  return *this;
}

Model& Model::maxpool(std::size_t window) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.kernel = window;
  l.stride = window;
  push(std::move(l));
  return *this;
}

Model& Model::avgpool(std::size_t window) {
  Layer l;
  l.kind = LayerKind::AvgPool;
  l.kernel = window;
  l.stride = window;
  push(std::move(l));
  return *this;
}

Model& Model::flatten() {
  Layer l;
  l.kind = LayerKind::Flatten;
  push(std::move(l));
  return *this;
}

std::vector<std::size_t> Model::quantizable_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].quantizable()) out.push_back(i);
  return out;
}

bool Model::fully_assigned() const {
  for (const auto& l : layers_)
    if (l.quantizable() && !l.assignment) return false;
  return true;
}

void Model::set_assignments(const std::vector<assign::RowAssignment>& assignments) {
  const auto q = quantizable_layers();
  if (assignments.size() != q.size())
    throw ContractViolation("expected " + std::to_string(q.size()) + " layer assignments, got " +
                            std::to_string(assignments.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (assignments[i].size() != layers_[q[i]].rows())
      throw ContractViolation("assignment row count mismatch at layer " + std::to_string(q[i]));
    layers_[q[i]].assignment = assignments[i];
  }
}

void Model::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (auto& l : layers_) {
    if (!l.quantizable()) continue;
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.row_length()));
    for (std::size_t i = 0; i < l.weight.size(); ++i)
      l.weight[i] = static_cast<float>(normal(rng) * stddev);
    l.bias.fill(0.0f);
  }
}

std::int32_t activation_code(double x, double step, int bits) {
  const double qmax = quant::fixed_qmax(bits);
  return static_cast<std::int32_t>(std::clamp(std::round(x / step), -qmax, qmax));
}

float fake_quantize_activation(float x, double step, int bits) {
  return static_cast<float>(activation_code(x, step, bits) * step);
}

namespace {

struct ConvGeom {
  std::size_t c, h, w, k, stride, pad, oh, ow;
  std::size_t col_rows() const { return c * k * k; }
  std::size_t positions() const { return oh * ow; }
};

ConvGeom conv_geom(const Layer& l, const Shape& in) {
  const Shape out = layer_output_shape(l, in);
  return {in[0], in[1], in[2], l.kernel, l.stride, l.padding, out[1], out[2]};
}

// cols is (c*k*k, oh*ow), row index ((ch * k) + ky) * k + kx.
void im2col(const ConvGeom& g, std::span<const float> x, std::vector<float>& cols) {
  cols.assign(g.col_rows() * g.positions(), 0.0f);
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        float* dst = cols.data() + ((ch * g.k + ky) * g.k + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dst[oy * g.ow + ox] = x[(ch * g.h + iy) * g.w + ix];
          }
        }
      }
}

void col2im(const ConvGeom& g, std::span<const double> cols, std::span<float> dx) {
  std::vector<double> acc(dx.size(), 0.0);
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* src = cols.data() + ((ch * g.k + ky) * g.k + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            acc[(ch * g.h + iy) * g.w + ix] += src[oy * g.ow + ox];
          }
        }
      }
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = static_cast<float>(acc[i]);
}

Shape batched(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

Tensor effective_weight(const Layer& l, Mode mode, std::vector<std::uint8_t>* pass) {
  if (mode == Mode::Float) {
    if (pass) pass->assign(l.weight.size(), 1);
    return l.weight;
  }
  if (!l.assignment) throw StateError("QAT forward on a layer without a row assignment");
  Tensor w(l.weight.shape());
  if (pass) pass->assign(l.weight.size(), 1);
  for (std::size_t r = 0; r < l.rows(); ++r) {
    const auto format = l.assignment->rows[r];
    const double scale = quant::fake_quantize_row(l.row(r), format, w.slice(r));
    if (pass) {
      // The row scale puts the top level at max|w|; the slack absorbs the
      // rounding of scale * qmax.
      const double top = (format.scheme == quant::Scheme::PoT
                              ? scale
                              : scale * quant::fixed_qmax(format.bits)) * (1.0 + 1e-9);
      const auto src = l.row(r);
      for (std::size_t j = 0; j < src.size(); ++j)
        (*pass)[r * src.size() + j] = ste_pass(src[j], top) ? 1 : 0;
    }
  }
  return w;
}

Tensor layer_forward(const Layer& l, const Tensor& x, const Tensor& weight) {
  const std::size_t n = x.dim(0);
  const Shape in(x.shape().begin() + 1, x.shape().end());
  Tensor y(batched(n, layer_output_shape(l, in)));
  switch (l.kind) {
    case LayerKind::Dense: {
      for (std::size_t b = 0; b < n; ++b) {
        const auto xs = x.slice(b);
        auto ys = y.slice(b);
        for (std::size_t o = 0; o < l.out_features; ++o) {
          const auto wr = weight.slice(o);
          double acc = 0.0;
          for (std::size_t i = 0; i < l.in_features; ++i) acc += double{wr[i]} * xs[i];
          ys[o] = static_cast<float>(acc + l.bias[o]);
        }
      }
      break;
    }
    case LayerKind::Conv2d: {
      const auto g = conv_geom(l, in);
      std::vector<float> cols;
      std::vector<double> acc(g.positions());
      for (std::size_t b = 0; b < n; ++b) {
        im2col(g, x.slice(b), cols);
        auto ys = y.slice(b);
        for (std::size_t o = 0; o < l.out_channels; ++o) {
          const auto wr = weight.slice(o);
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t r = 0; r < g.col_rows(); ++r) {
            const double wv = wr[r];
            if (wv == 0.0) continue;
            const float* c = cols.data() + r * g.positions();
            for (std::size_t p = 0; p < g.positions(); ++p) acc[p] += wv * c[p];
          }
          for (std::size_t p = 0; p < g.positions(); ++p)
            ys[o * g.positions() + p] = static_cast<float>(acc[p] + l.bias[o]);
        }
      }
      break;
    }
    case LayerKind::ReLU:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
      const std::size_t c = in[0], h = in[1], w = in[2], k = l.kernel;
      const std::size_t oh = h / k, ow = w / k;
      for (std::size_t b = 0; b < n; ++b) {
        const auto xs = x.slice(b);
        auto ys = y.slice(b);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const float v = xs[(ch * h + oy * k + ky) * w + ox * k + kx];
                  best = std::max(best, double{v});
                  sum += v;
                }
              ys[(ch * oh + oy) * ow + ox] = static_cast<float>(
                  l.kind == LayerKind::MaxPool ? best : sum / static_cast<double>(k * k));
            }
      }
      break;
    }
    case LayerKind::Flatten:
      y = x.reshaped(y.shape());
      break;
  }
  return y;
}

}  // namespace

Tensor forward(const Model& model, const Tensor& input, Mode mode, ForwardCache* cache,
               ActivationTrace* trace) {
  const Shape expected = model.input_shape();
  if (input.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), input.shape().begin() + 1))
    throw ContractViolation("input shape " + shape_string(input.shape()) +
                            " does not match model input " + shape_string(expected));
  if (cache) {
    *cache = ForwardCache{};
    cache->mode = mode;
    cache->inputs.resize(model.size());
    cache->raw_inputs.resize(model.size());
    cache->weights.resize(model.size());
    cache->weight_pass.resize(model.size());
    cache->outputs.resize(model.size());
  }
  if (trace) trace->clear();

  const auto& act = model.activation();
  Tensor x = input;
  bool first_quantizable = true;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Layer& l = model.layers()[i];
    Tensor weight;
    if (l.quantizable()) {
      if (mode == Mode::Qat) {
        if (cache) cache->raw_inputs[i] = x;
        const double step = act.step(first_quantizable);
        std::vector<std::int32_t>* codes = nullptr;
        if (trace) codes = &trace->emplace_back();
        for (std::size_t j = 0; j < x.size(); ++j) {
          const auto code = activation_code(x[j], step, act.bits);
          if (codes) codes->push_back(code);
          x[j] = static_cast<float>(code * step);
        }
      }
      first_quantizable = false;
      weight = effective_weight(l, mode, cache ? &cache->weight_pass[i] : nullptr);
    }
    Tensor y = layer_forward(l, x, weight);
    if (cache) {
      cache->inputs[i] = std::move(x);
      cache->weights[i] = std::move(weight);
      cache->outputs[i] = y;
    }
    x = std::move(y);
  }
  if (cache) cache->valid = true;
  return x;
}

Gradients backward_ste(const Model& model, const ForwardCache& cache, const Tensor& grad_output) {
  if (!cache.valid || cache.inputs.size() != model.size())
    throw StateError("backward_ste called without a matching forward pass");
  Gradients g;
  g.weight.resize(model.size());
  g.bias.resize(model.size());

  const auto& act = model.activation();
  const auto qlayers = model.quantizable_layers();
  Tensor dy = grad_output;
  for (std::size_t i = model.size(); i-- > 0;) {
    const Layer& l = model.layers()[i];
    const Tensor& x = cache.inputs[i];
    const std::size_t n = x.dim(0);
    const Shape in(x.shape().begin() + 1, x.shape().end());
    if (dy.shape() != cache.outputs[i].shape())
      throw ContractViolation("gradient shape does not match the layer output");
    Tensor dx(x.shape());
    switch (l.kind) {
      case LayerKind::Dense: {
        const Tensor& w = cache.weights[i];
        std::vector<double> dw(w.size(), 0.0), db(l.out_features, 0.0);
        for (std::size_t b = 0; b < n; ++b) {
          const auto xs = x.slice(b);
          const auto ds = dy.slice(b);
          auto dxs = dx.slice(b);
          std::vector<double> acc(l.in_features, 0.0);
          for (std::size_t o = 0; o < l.out_features; ++o) {
            const double d = ds[o];
            db[o] += d;
            if (d == 0.0) continue;
            const auto wr = w.slice(o);
            double* dwr = dw.data() + o * l.in_features;
            for (std::size_t j = 0; j < l.in_features; ++j) {
              dwr[j] += d * xs[j];
              acc[j] += d * wr[j];
            }
          }
          for (std::size_t j = 0; j < l.in_features; ++j) dxs[j] = static_cast<float>(acc[j]);
        }
        g.weight[i] = Tensor(w.shape());
        g.bias[i] = Tensor({l.out_features});
        for (std::size_t j = 0; j < dw.size(); ++j)
          g.weight[i][j] = cache.weight_pass[i][j] ? static_cast<float>(dw[j]) : 0.0f;
        for (std::size_t o = 0; o < l.out_features; ++o) g.bias[i][o] = static_cast<float>(db[o]);
        break;
      }
      case LayerKind::Conv2d: {
        const Tensor& w = cache.weights[i];
        const auto geo = conv_geom(l, in);
        const std::size_t cr = geo.col_rows(), np = geo.positions();
        std::vector<double> dw(w.size(), 0.0), db(l.out_channels, 0.0), dcols(cr * np);
        std::vector<float> cols;
        for (std::size_t b = 0; b < n; ++b) {
          im2col(geo, x.slice(b), cols);
          const auto ds = dy.slice(b);
          std::fill(dcols.begin(), dcols.end(), 0.0);
          for (std::size_t o = 0; o < l.out_channels; ++o) {
            const float* d = ds.data() + o * np;
            const auto wr = w.slice(o);
            double* dwr = dw.data() + o * cr;
            for (std::size_t p = 0; p < np; ++p) db[o] += d[p];
            for (std::size_t r = 0; r < cr; ++r) {
              const float* c = cols.data() + r * np;
              double* dc = dcols.data() + r * np;
              const double wv = wr[r];
              double s = 0.0;
              for (std::size_t p = 0; p < np; ++p) {
                s += double{d[p]} * c[p];
                dc[p] += wv * d[p];
              }
              dwr[r] += s;
            }
          }
          col2im(geo, dcols, dx.slice(b));
        }
        g.weight[i] = Tensor(w.shape());
        g.bias[i] = Tensor({l.out_channels});
        for (std::size_t j = 0; j < dw.size(); ++j)
          g.weight[i][j] = cache.weight_pass[i][j] ? static_cast<float>(dw[j]) : 0.0f;
        for (std::size_t o = 0; o < l.out_channels; ++o) g.bias[i][o] = static_cast<float>(db[o]);
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > 0.0f ? dy[j] : 0.0f;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const std::size_t c = in[0], h = in[1], w = in[2], k = l.kernel;
        const std::size_t oh = h / k, ow = w / k;
        for (std::size_t b = 0; b < n; ++b) {
          const auto xs = x.slice(b);
          const auto ds = dy.slice(b);
          auto dxs = dx.slice(b);
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const float d = ds[(ch * oh + oy) * ow + ox];
                if (l.kind == LayerKind::AvgPool) {
                  const float share = static_cast<float>(d / static_cast<double>(k * k));
                  for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx)
                      dxs[(ch * h + oy * k + ky) * w + ox * k + kx] += share;
                } else {
                  std::size_t arg = 0;
                  float best = -std::numeric_limits<float>::infinity();
                  for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                      const std::size_t idx = (ch * h + oy * k + ky) * w + ox * k + kx;
                      if (xs[idx] > best) {
                        best = xs[idx];
                        arg = idx;
                      }
                    }
                  dxs[arg] += d;
                }
              }
        }
        break;
      }
      case LayerKind::Flatten:
        dx = dy.reshaped(x.shape());
        break;
    }
    if (l.quantizable() && cache.mode == Mode::Qat) {
      const bool is_first = !qlayers.empty() && qlayers.front() == i;
      const double limit = is_first ? act.input_clip : act.clip;
      const Tensor& raw = cache.raw_inputs[i];
      for (std::size_t j = 0; j < dx.size(); ++j)
        if (!ste_pass(raw[j], limit)) dx[j] = 0.0f;
    }
    dy = std::move(dx);
  }
  g.input = std::move(dy);
  return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ContractViolation("logits must be (N, classes)");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ContractViolation("label count does not match batch size");
  if (n == 0) throw DomainError("empty batch");
  LossResult out{0.0, Tensor(logits.shape())};
  for (std::size_t b = 0; b < n; ++b) {
    const auto z = logits.slice(b);
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ContractViolation("label out of range");
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (float v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum) + zmax;
    out.loss += log_sum - z[y];
    auto gs = out.grad.slice(b);
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(z[c] - log_sum);
      gs[c] = static_cast<float>((p - (static_cast<int>(c) == y ? 1.0 : 0.0)) / n);
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

ModelRowOracle::ModelRowOracle(Model model, Tensor inputs, std::vector<int> labels,
                               double loss_scale)
    : model_(std::move(model)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      loss_scale_(loss_scale),
      qlayers_(model_.quantizable_layers()) {
  if (inputs_.empty() || labels_.empty()) throw DomainError("calibration batch is empty");
}

std::size_t ModelRowOracle::layer_count() const { return qlayers_.size(); }

std::size_t ModelRowOracle::row_count(std::size_t layer) const {
  return model_.layers().at(qlayers_.at(layer)).rows();
}

std::vector<double> ModelRowOracle::row_weights(std::size_t layer, std::size_t row) const {
  const auto r = model_.layers().at(qlayers_.at(layer)).row(row);
  return {r.begin(), r.end()};
}

std::vector<double> ModelRowOracle::row_gradient(std::size_t layer, std::size_t row,
                                                 std::span<const double> weights) {
  Layer& l = model_.layers().at(qlayers_.at(layer));
  auto r = l.row(row);
  if (weights.size() != r.size()) throw ContractViolation("row gradient: wrong row length");
  const std::vector<float> saved(r.begin(), r.end());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = static_cast<float>(weights[j]);

  ForwardCache cache;
  const Tensor logits = forward(model_, inputs_, Mode::Float, &cache);
  const auto loss = softmax_cross_entropy(logits, labels_);
  const auto grads = backward_ste(model_, cache, loss.grad);
  std::copy(saved.begin(), saved.end(), r.begin());

  const auto gr = grads.weight[qlayers_[layer]].slice(row);
  std::vector<double> out(gr.size());
  for (std::size_t j = 0; j < gr.size(); ++j) out[j] = loss_scale_ * gr[j];
  return out;
}

std::unique_ptr<assign::RowGradientOracle> ModelRowOracle::clone() const {
  return std::make_unique<ModelRowOracle>(*this);
}

}  // namespace rowmix::nn
