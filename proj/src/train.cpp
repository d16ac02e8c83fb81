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

#include "rowmix/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rowmix/errors.hpp"

namespace rowmix::train {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (activation_bits != 4 && activation_bits != 8)
    throw ConfigError("activation_bits must be 4 or 8");
  if (!(activation_clip > 0.0) || !(input_clip > 0.0)) throw ConfigError("clip must be positive");
  if (calibration_size == 0) throw ConfigError("calibration_size must be positive");
}

double TrainConfig::learning_rate_at(int epoch) const {
  double lr = learning_rate;
  if (epoch >= epochs / 2) lr *= 0.1;
  if (epoch >= (3 * epochs) / 4) lr *= 0.1;
  return lr;
}

namespace {

// Flip + shifted crop with zero fill, per (C, H, W) sample.
void augment_sample(std::span<float> x, const Shape& s, std::size_t pad, std::mt19937_64& rng) {
  const std::size_t c = s[0], h = s[1], w = s[2];
  const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  std::uniform_int_distribution<long> shift(-static_cast<long>(pad), static_cast<long>(pad));
  const long dy = shift(rng), dx = shift(rng);
  std::vector<float> src(x.begin(), x.end());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const long sy = static_cast<long>(y) + dy;
        long sx = static_cast<long>(xx) + dx;
        float v = 0.0f;
        if (sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w)) {
          if (flip) sx = static_cast<long>(w) - 1 - sx;
          v = src[(ch * h + sy) * w + sx];
        }
        x[(ch * h + y) * w + xx] = v;
      }
}

}  // namespace

std::vector<double> fit(nn::Model& model, const data::Dataset& dataset, const TrainConfig& config,
                        nn::Mode mode, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.size() == 0) throw DomainError("training set is empty");

  std::mt19937_64 rng(config.seed);
  auto& layers = model.layers();
  std::vector<std::vector<double>> vel_w(layers.size()), vel_b(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    vel_w[i].assign(layers[i].weight.size(), 0.0);
    vel_b[i].assign(layers[i].bias.size(), 0.0);
  }
  const Shape sample = dataset.sample_shape();
  const bool augment = config.augment && dataset.image && sample.size() == 3;

  std::vector<std::size_t> order(dataset.size());
  std::vector<double> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = config.learning_rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      data::Dataset batch = dataset.subset(idx);
      if (augment)
        for (std::size_t b = 0; b < batch.size(); ++b)
          augment_sample(batch.inputs.slice(b), sample, config.crop_padding, rng);

      nn::ForwardCache cache;
      const Tensor logits = nn::forward(model, batch.inputs, mode, &cache);
      const auto loss = nn::softmax_cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.loss))
        throw TrainingFailure(epoch, "training diverged (non-finite loss) in epoch " +
                                         std::to_string(epoch));
      loss_sum += loss.loss * static_cast<double>(idx.size());
      seen += idx.size();
      const auto grads = nn::backward_ste(model, cache, loss.grad);

      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].quantizable()) continue;
        auto step = [&](Tensor& p, const Tensor& g, std::vector<double>& v, double decay) {
          for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = config.momentum * v[j] + g[j] + decay * p[j];
            p[j] = static_cast<float>(p[j] - lr * v[j]);
          }
        };
        step(layers[i].weight, grads.weight[i], vel_w[i], config.weight_decay);
        step(layers[i].bias, grads.bias[i], vel_b[i], 0.0);
      }
    }
    const double mean = loss_sum / static_cast<double>(seen);
    if (!std::isfinite(mean))
      throw TrainingFailure(epoch, "training diverged (non-finite loss) in epoch " +
                                       std::to_string(epoch));
    history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return history;
}

std::vector<assign::FilterSensitivity> assign_model(nn::Model& model,
                                                    const data::Dataset& calibration,
                                                    const assign::SchemeRatio& ratio,
                                                    const assign::RankOptions& options) {
  if (calibration.size() == 0) throw DomainError("calibration batch is empty");
  if (model.quantizable_layers().empty()) throw DomainError("model has no quantizable layer");
  nn::ModelRowOracle oracle(model, calibration.inputs, calibration.labels);
  auto ranked = assign::rank_filters(oracle, options);
  model.set_assignments(assign::assign_all(ranked, model.quantizable_layers().size(), ratio));
  return ranked;
}

TrainResult qat_train(nn::Model model, const data::Dataset& dataset,
                      const assign::SchemeRatio& ratio, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  config.validate();
  ratio.validate();
  if (dataset.size() == 0) throw DomainError("training set is empty");
  model.activation() = {config.activation_bits, config.activation_clip, config.input_clip};

  TrainResult result;
  assign::RankOptions rank;
  rank.power = config.power;
  result.sensitivities =
      assign_model(model, dataset.head(config.calibration_size), ratio, rank);
  result.epoch_loss =
      fit(model, dataset, config, config.quantize ? nn::Mode::Qat : nn::Mode::Float, on_epoch);
  for (auto i : model.quantizable_layers()) result.assignments.push_back(*model.layers()[i].assignment);
  result.model = std::move(model);
  return result;
}

Tensor predict(const nn::Model& model, const Tensor& inputs, nn::Mode mode) {
  constexpr std::size_t kChunk = 256;
  const std::size_t n = inputs.dim(0);
  Shape out_shape{n};
  for (auto d : model.output_shape()) out_shape.push_back(d);
  Tensor out(out_shape);
  const std::size_t per = inputs.size() / std::max<std::size_t>(n, 1);
  const std::size_t per_out = out.size() / std::max<std::size_t>(n, 1);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    Shape s = inputs.shape();
    s[0] = m;
    std::vector<float> chunk(inputs.values().begin() + start * per,
                             inputs.values().begin() + (start + m) * per);
    const Tensor logits = nn::forward(model, Tensor(s, std::move(chunk)), mode);
    std::copy(logits.values().begin(), logits.values().end(), out.data() + start * per_out);
  }
  return out;
}

std::size_t argmax(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k) {
  if (labels.empty()) throw DomainError("cannot evaluate on an empty dataset");
  if (k == 0) throw DomainError("k must be positive");
  std::size_t hits = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto z = logits.slice(b);
    const auto y = static_cast<std::size_t>(labels[b]);
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < z.size(); ++c)
      if (z[c] > z[y] || (z[c] == z[y] && c < y)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const nn::Model& model, const data::Dataset& dataset, nn::Mode mode,
                std::size_t k) {
  if (dataset.size() == 0) throw DomainError("cannot evaluate on an empty dataset");
  return topk_accuracy(predict(model, dataset.inputs, mode), dataset.labels, k);
}

}  // namespace rowmix::train
