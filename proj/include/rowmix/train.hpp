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

#include <cstdint>
#include <functional>
#include <vector>

#include "rowmix/assign.hpp"
#include "rowmix/data.hpp"
#include "rowmix/nn.hpp"

namespace rowmix::train {

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  int activation_bits = 4;
  double activation_clip = 6.0;
  double input_clip = 6.0;
  /// false bypasses every quantizer: plain float training.
  bool quantize = true;
  /// Random flip + pad-crop on image datasets.
  bool augment = true;
  std::size_t crop_padding = 2;
  /// Samples (from the start of the training set) used for Hessian ranking.
  std::size_t calibration_size = 128;
  assign::PowerIterationOptions power{};

  void validate() const;
  /// Step decay: x0.1 at 50% and again at 75% of the epochs.
  double learning_rate_at(int epoch) const;
};

struct TrainResult {
  nn::Model model;  // latent float weights + final assignments
  std::vector<assign::RowAssignment> assignments;
  std::vector<assign::FilterSensitivity> sensitivities;
  std::vector<double> epoch_loss;
};

/// Called after every epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// SGD with momentum over `config.epochs`, in the given forward mode.
/// Returns the mean training loss of every epoch. Throws TrainingFailure if
/// the loss stops being finite.
std::vector<double> fit(nn::Model& model, const data::Dataset& dataset, const TrainConfig& config,
                        nn::Mode mode, const EpochCallback& on_epoch = {});

/// Hessian ranking on the calibration batch followed by per-layer
/// assignment. Sets the assignments on `model` and returns the ranking.
std::vector<assign::FilterSensitivity> assign_model(nn::Model& model,
                                                    const data::Dataset& calibration,
                                                    const assign::SchemeRatio& ratio,
                                                    const assign::RankOptions& options = {});

/// One-shot assignment on the initial weights, then QAT for config.epochs.
TrainResult qat_train(nn::Model model, const data::Dataset& dataset,
                      const assign::SchemeRatio& ratio, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Logits for a whole dataset, evaluated in chunks.
Tensor predict(const nn::Model& model, const Tensor& inputs, nn::Mode mode);

/// Top-k accuracy. Ties in the logits rank the lower class index first.
double evaluate(const nn::Model& model, const data::Dataset& dataset, nn::Mode mode,
                std::size_t k = 1);

/// Top-k accuracy of precomputed logits.
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k = 1);

/// Index of the largest logit, lowest index on ties.
std::size_t argmax(std::span<const float> logits);

}  // namespace rowmix::train
