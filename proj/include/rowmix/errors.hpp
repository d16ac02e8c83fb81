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

#include <stdexcept>
#include <string>

namespace rowmix {

/// Base class for every error raised by the library. `kind()` is the short
/// machine-readable tag written into CLI error records.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define ROWMIX_DEFINE_ERROR(Name, Tag)                     \
  class Name : public Error {                              \
   public:                                                 \
    using Error::Error;                                    \
    const char* kind() const noexcept override { return Tag; } \
  };

ROWMIX_DEFINE_ERROR(DomainError, "domain")
ROWMIX_DEFINE_ERROR(ContractViolation, "contract")
ROWMIX_DEFINE_ERROR(UnsupportedConfig, "unsupported")
ROWMIX_DEFINE_ERROR(StateError, "state")
ROWMIX_DEFINE_ERROR(ConfigError, "config")
ROWMIX_DEFINE_ERROR(IoError, "io")
ROWMIX_DEFINE_ERROR(InsufficientData, "insufficient-data")
ROWMIX_DEFINE_ERROR(DegenerateAnchors, "degenerate-anchors")

#undef ROWMIX_DEFINE_ERROR

/// Raised when training diverges; carries the epoch at which the loss went
/// non-finite.
class TrainingFailure : public Error {
 public:
  TrainingFailure(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  const char* kind() const noexcept override { return "training-failure"; }
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace rowmix
