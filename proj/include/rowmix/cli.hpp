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

#include <iosfwd>
#include <string>
#include <vector>

namespace rowmix::cli {

enum ExitCode : int { kOk = 0, kConfigOrIo = 2, kNumeric = 3 };

/// Entry point of the `rowmix` tool. Subcommands: train, quantize, eval,
/// sweep, calibrate, report. Failures print one JSON error record
/// ({"type": "error", "kind", "message"}) to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rowmix::cli
