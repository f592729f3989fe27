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

#include "lowrank/bench.hpp"

#include <chrono>

#include "lowrank/error.hpp"
#include "lowrank/parallel.hpp"

namespace lowrank {

namespace {

template <typename F>
double time_seconds(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename F>
ThroughputRow measure(std::string name, std::size_t tokens, const ThroughputOptions& o, F&& run) {
  for (std::size_t i = 0; i < o.warmup; ++i) run();
  ThroughputRow row;
  row.configuration = std::move(name);
  for (std::size_t i = 0; i < o.runs; ++i) {
    const double s = time_seconds(run);
    row.runs.push_back(static_cast<double>(tokens) / s);
  }
  row.tokens_per_second = median(row.runs);
  return row;
}

}  // namespace

std::vector<ThroughputRow> throughput_bench(const TinyLM& dense, const CompressedLM& compressed,
                                            const BudgetCost& cost, std::size_t static_budget,
                                            const DecodeSchedule& progressive,
                                            std::span<const std::vector<Token>> prompts,
                                            const ThroughputOptions& options) {
  if (prompts.empty()) throw ValidationError("throughput bench needs at least one prompt");
  if (options.runs < 5) throw ValidationError("throughput bench needs at least 5 timed runs");
  if (options.gen_len == 0) throw ValidationError("throughput bench needs gen_len >= 1");
  progressive.validate();
  const ThreadLimit single(1);
  const std::size_t tokens = prompts.size() * options.gen_len;
  CompressedLM model = compressed;

  std::vector<ThroughputRow> rows;
  rows.push_back(measure("dense", tokens, options, [&] {
    for (const auto& p : prompts) greedy_generate(dense, p, options.gen_len);
  }));
  rows.back().compression_rate = 0.0;
  rows.push_back(measure("static", tokens, options, [&] {
    for (const auto& p : prompts) static_generate(model, cost, p, static_budget, options.gen_len);
  }));
  rows.back().compression_rate =
      100.0 * overall_compression_rate(DecodeSchedule::constant(static_budget), options.gen_len, cost);
  rows.push_back(measure("progressive", tokens, options, [&] {
    for (const auto& p : prompts) progressive_generate(model, cost, p, progressive, options.gen_len);
  }));
  rows.back().compression_rate = 100.0 * overall_compression_rate(progressive, options.gen_len, cost);
  for (auto& r : rows) r.speedup = r.tokens_per_second / rows[0].tokens_per_second;
  return rows;
}

void to_json(nlohmann::json& j, const SearchTimeResult& r) {
  j = {{"fisher_seconds", r.fisher_seconds},
       {"baseline_seconds", r.baseline_seconds},
       {"ratio", r.ratio},
       {"ratios", r.ratios},
       {"fisher_passes", r.fisher_passes},
       {"baseline_evaluations", r.baseline_evaluations}};
}

SearchTimeResult search_time_bench(const TinyLM& model, std::span<const std::vector<Token>> calib,
                                   double target_rate, const BaselineOptions& baseline, std::size_t repeats) {
  if (repeats == 0) throw ValidationError("search time bench needs repeats >= 1");
  const ThreadLimit single(1);
  SearchTimeResult out;
  std::vector<double> fisher, base;
  for (std::size_t i = 0; i < repeats; ++i) {
    TinyLM copy = model;
    const FisherAllocationResult f = fisher_allocate(copy, calib, target_rate, ImportanceMetric::kFisher, baseline.floor);
    const BaselineResult b = baseline_allocate_perplexity(model, calib, target_rate, baseline);
    fisher.push_back(f.seconds);
    base.push_back(b.seconds);
    out.ratios.push_back(b.seconds / f.seconds);
  }
  out.fisher_seconds = median(fisher);
  out.baseline_seconds = median(base);
  out.ratio = out.baseline_seconds / out.fisher_seconds;
  out.fisher_passes = 1;
  // One base evaluation plus one per projection and non-final grid point.
  out.baseline_evaluations =
      target_rate == 0.0 ? 0 : 1 + projection_caps(model.config()).size() * (baseline.grid.size() - 1);
  return out;
}

}  // namespace lowrank
