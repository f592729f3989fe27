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
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

inline constexpr std::size_t kMinCorpusBytes = 64 * 1024;

/// Plain Adam with a fixed learning rate; all values land in the checkpoint.
struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  std::size_t seq_len = 128;  // inputs per sequence, BOS included
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t data_seed = 7;

  void validate(const ModelConfig& config) const;
  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

void to_json(nlohmann::json& j, const TrainOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);

struct TrainResult {
  TinyLM model;
  std::vector<double> losses;  // one per step, measured before the update
};

using TrainProgress = std::function<void(std::size_t step, double loss)>;

/// Trains from the seeded initialization. Deterministic in (config, options,
/// corpus). Throws ValidationError for a corpus under kMinCorpusBytes and
/// NumericalError (naming the step) when the loss stops being finite.
TrainResult train(const ModelConfig& config, const TrainOptions& options, std::string_view corpus,
                  const TrainProgress& progress = {});

/// BOS followed by `length - 1` bytes of `text` starting at `offset`.
std::vector<Token> window_at(std::string_view text, std::size_t offset, std::size_t length);

}  // namespace lowrank
