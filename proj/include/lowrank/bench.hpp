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
#include <span>
#include <vector>

#include "json.hpp"
#include "lowrank/compression.hpp"
#include "lowrank/decoding.hpp"
#include "lowrank/eval.hpp"

namespace lowrank {

struct ThroughputOptions {
  std::size_t gen_len = 64;
  std::size_t warmup = 1;
  std::size_t runs = 5;
};

/// Greedy decoding throughput over `prompts` (the batch, one at a time) for
/// the dense model, the compressed model held at `static_budget`, and the
/// compressed model following `progressive`. Single-threaded; each row is the
/// median over the timed runs.
std::vector<ThroughputRow> throughput_bench(const TinyLM& dense, const CompressedLM& compressed,
                                            const BudgetCost& cost, std::size_t static_budget,
                                            const DecodeSchedule& progressive,
                                            std::span<const std::vector<Token>> prompts,
                                            const ThroughputOptions& options = {});

struct SearchTimeResult {
  double fisher_seconds = 0.0;    // median
  double baseline_seconds = 0.0;  // median
  double ratio = 0.0;             // baseline / fisher, of the medians
  std::vector<double> ratios;     // one per repeat
  std::size_t fisher_passes = 0;  // forward+backward passes over calibration
  std::size_t baseline_evaluations = 0;
};

void to_json(nlohmann::json& j, const SearchTimeResult& r);

/// Times fisher_allocate against baseline_allocate_perplexity at the same
/// rate and calibration set. Single-threaded. Any whitening statistics are
/// passed in already collected.
SearchTimeResult search_time_bench(const TinyLM& model, std::span<const std::vector<Token>> calib,
                                   double target_rate, const BaselineOptions& baseline = {},
                                   std::size_t repeats = 1);

}  // namespace lowrank
