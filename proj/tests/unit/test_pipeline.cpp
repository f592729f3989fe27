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

#include <cstdlib>

#include "doctest.h"
#include "lowrank/bench.hpp"
#include "lowrank/error.hpp"
#include "lowrank/parallel.hpp"
#include "lowrank/pipeline.hpp"
#include "unit/test_util.hpp"

using namespace lowrank;
using lowrank::testing::random_tokens;
using lowrank::testing::small_config;

TEST_CASE("pipeline config json round trip and hashing") {
  PipelineConfig c;
  c.rate = 0.3;
  c.metric = ImportanceMetric::kGradOnly;
  c.form = ScheduleForm::kStatic;
  c.model.seed = 99;
  const nlohmann::json j = c;
  const PipelineConfig back = j.get<PipelineConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.hash() == c.hash());
  CHECK(back.allocation_rate() == 0.3);

  PipelineConfig moved = c;
  moved.out_dir = "elsewhere";
  CHECK(moved.hash() == c.hash());
  moved.model.seed = 100;
  CHECK(moved.hash() != c.hash());

  PipelineConfig partial = nlohmann::json{{"rate", 0.25}}.get<PipelineConfig>();
  CHECK(partial.rate == 0.25);
  CHECK(partial.gen_len == PipelineConfig{}.gen_len);
  CHECK_THROWS_AS(nlohmann::json({{"rat", 0.2}}).get<PipelineConfig>(), ValidationError);
  CHECK_THROWS_AS(nlohmann::json({{"metric", "magic"}}).get<PipelineConfig>(), ValidationError);
  CHECK_THROWS_AS(nlohmann::json({{"rate", "high"}}).get<PipelineConfig>(), ValidationError);
}

TEST_CASE("pipeline config validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  c.rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.rate = 0.2;
  c.materialize_rate = 0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.materialize_rate = 0.0;
  c.gen_len = 250;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.gen_len = 64;
  c.bench_runs = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("thread limit caps the worker count") {
  const std::size_t before = thread_count();
  {
    const ThreadLimit one(1);
    CHECK(thread_count() == 1);
  }
  CHECK(thread_count() == before);
}

TEST_CASE("throughput bench reports three configurations") {
  const ModelConfig c = small_config();
  const TinyLM dense = TinyLM::initialize(c);
  const ImportanceMap imp = compute_importance(dense, ImportanceMetric::kWeightOnly);
  const RankAllocation alloc = allocate_for_rate(imp, c, 0.0);
  const CompressedLM cm = compress_model(dense, alloc);
  const BudgetCost cost(imp, c, alloc.ranks);
  std::vector<std::vector<Token>> prompts = {random_tokens(4, 1, 200)};
  prompts[0][0] = kBosToken;
  ThroughputOptions o;
  o.gen_len = 8;
  const DecodeSchedule s{ScheduleForm::kDecreased, {{0, alloc.budget}, {4, alloc.budget / 2}}};
  const auto rows = throughput_bench(dense, cm, cost, alloc.budget / 2, s, prompts, o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].configuration == "dense");
  CHECK(rows[1].configuration == "static");
  CHECK(rows[2].configuration == "progressive");
  CHECK(rows[0].speedup == 1.0);
  for (const auto& r : rows) {
    CHECK(r.runs.size() == 5);
    CHECK(r.tokens_per_second > 0.0);
  }
  CHECK(rows[1].compression_rate > rows[2].compression_rate);
  o.runs = 4;
  CHECK_THROWS_AS(throughput_bench(dense, cm, cost, alloc.budget, s, prompts, o), ValidationError);
}

TEST_CASE("search time bench counts one gradient pass") {
  const ModelConfig c = small_config();
  const TinyLM dense = TinyLM::initialize(c);
  std::vector<std::vector<Token>> calib = {random_tokens(16, 2), random_tokens(16, 3)};
  const SearchTimeResult r = search_time_bench(dense, calib, 0.2, {}, 2);
  CHECK(r.fisher_passes == 1);
  CHECK(r.baseline_evaluations == 1 + 14 * 3);
  CHECK(r.ratios.size() == 2);
  CHECK(r.fisher_seconds > 0.0);
  CHECK(r.baseline_seconds > 0.0);
  CHECK(r.ratio == doctest::Approx(r.baseline_seconds / r.fisher_seconds));
}
