// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lowrank/model.hpp"

namespace lowrank {

/// Stories are separated by a blank line.
std::vector<std::string_view> split_stories(std::string_view text);

struct CorpusSplits {
  std::string train;
  std::string calibration;
  std::string eval;
};

/// Whole stories in order: the first train_fraction to train, the next
/// calib_fraction to calibration, the rest to eval.
CorpusSplits split_corpus(std::string_view text, double train_fraction = 0.8, double calib_fraction = 0.1);

/// `count` windows of `length` tokens (BOS + length-1 bytes) at evenly spaced
/// offsets.
std::vector<std::vector<Token>> calibration_windows(std::string_view text, std::size_t count, std::size_t length);

/// BOS + the first prompt_bytes bytes of the first `count` stories long
/// enough to hold them.
std::vector<std::vector<Token>> story_prompts(std::string_view text, std::size_t count, std::size_t prompt_bytes);

}  // namespace lowrank
