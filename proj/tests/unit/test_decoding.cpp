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

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lowrank/compression.hpp"
#include "lowrank/decoding.hpp"
#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/linalg.hpp"
#include "unit/test_util.hpp"

using namespace lowrank;
using lowrank::testing::random_matrix;
using lowrank::testing::random_tokens;
using lowrank::testing::small_config;

namespace {

struct Fixture {
  ModelConfig config = small_config();
  TinyLM dense = TinyLM::initialize(config);
  ImportanceMap imp = compute_importance(dense, ImportanceMetric::kWeightOnly);
  RankAllocation alloc = allocate_for_rate(imp, config, 0.0);
  CompressedLM model = compress_model(dense, alloc);
  BudgetCost cost{imp, config, alloc.ranks};
};

std::vector<Token> prompt_of(std::uint64_t seed, std::size_t len = 6) {
  auto p = random_tokens(len, seed, 200);
  p[0] = kBosToken;
  return p;
}

// Rate from the per-step budgets, one step at a time.
double brute_force_rate(const DecodeSchedule& s, std::size_t n, const BudgetCost& cost) {
  double used = static_cast<double>(cost.params(s.budget_at(0)));
  for (std::size_t t = 0; t < n; ++t) used += static_cast<double>(cost.params(s.budget_at(t)));
  return 1.0 - used / (static_cast<double>(n + 1) * static_cast<double>(cost.dense_params()));
}

}  // namespace

TEST_CASE("schedule json and validation") {
  const DecodeSchedule s{ScheduleForm::kDecreased, {{0, 300}, {16, 200}, {40, 150}}};
  const nlohmann::json j = s;
  CHECK(j.dump() ==
        R"({"form":"decreased","steps":[{"budget":300,"from_token":0},{"budget":200,"from_token":16},{"budget":150,"from_token":40}]})");
  CHECK(j.get<DecodeSchedule>() == s);
  CHECK(s.budget_at(0) == 300);
  CHECK(s.budget_at(15) == 300);
  CHECK(s.budget_at(16) == 200);
  CHECK(s.budget_at(1000) == 150);

  CHECK_THROWS_AS((DecodeSchedule{ScheduleForm::kDecreased, {{0, 100}, {5, 120}}}.validate()), ValidationError);
  CHECK_THROWS_AS((DecodeSchedule{ScheduleForm::kDecreased, {{1, 100}}}.validate()), ValidationError);
  CHECK_THROWS_AS((DecodeSchedule{ScheduleForm::kDecreased, {{0, 100}, {0, 90}}}.validate()), ValidationError);
  CHECK_THROWS_AS((DecodeSchedule{ScheduleForm::kStatic, {{0, 100}, {3, 90}}}.validate()), ValidationError);
  CHECK_THROWS_AS((DecodeSchedule{ScheduleForm::kIncreased, {{0, 100}, {3, 90}}}.validate()), ValidationError);
  CHECK_NOTHROW((DecodeSchedule{ScheduleForm::kIncreased, {{0, 90}, {3, 100}}}.validate()));
  CHECK_THROWS_AS(parse_form("sideways"), ValidationError);
}

TEST_CASE("step budgets round trip") {
  const DecodeSchedule s{ScheduleForm::kDecreased, {{0, 30}, {2, 20}, {5, 10}}};
  const auto steps = step_budgets(s, 7);
  CHECK(steps == std::vector<std::size_t>{30, 30, 30, 20, 20, 20, 10, 10});
  CHECK(schedule_from_steps(steps, ScheduleForm::kDecreased) == s);
  const std::size_t bad[] = {10, 20, 20};
  CHECK_THROWS_AS(schedule_from_steps(bad, ScheduleForm::kIncreased), ValidationError);
}

TEST_CASE("token rank config") {
  Fixture f;
  CHECK(token_rank_config(f.imp, f.alloc.budget, 1, f.alloc.ranks) == f.alloc.ranks);
  CHECK(f.cost.ranks(f.alloc.budget) == f.alloc.ranks);
  CHECK_THROWS_AS(token_rank_config(f.imp, 13, 1, f.alloc.ranks), ValidationError);
  CHECK_THROWS_AS(token_rank_config(f.imp, f.alloc.budget + 1, 1, f.alloc.ranks), ValidationError);
  for (std::size_t b = 14; b <= f.alloc.budget; b += 7) {
    CHECK(token_rank_config(f.imp, b, 1, f.alloc.ranks) == allocate_ranks(f.imp, b, 1, f.alloc.ranks).ranks);
  }

  // Equal importance: halving the budget halves each rank, up to the correction.
  const ImportanceMap equal = ImportanceMap::from_values(2, std::vector<double>(14, 1.0));
  const std::vector<std::size_t> mat(14, 20);
  const auto half = token_rank_config(equal, 140, 1, mat);
  CHECK(half == allocate_ranks(equal, 140, 1, mat).ranks);
  for (std::size_t r : half) CHECK(r == 10);
  const auto odd = token_rank_config(equal, 137, 1, mat);
  CHECK(std::accumulate(odd.begin(), odd.end(), std::size_t{0}) == 137);
  for (std::size_t r : odd) CHECK((r == 9 || r == 10));
}

TEST_CASE("set_active_rank nests on diag(3,2,1)") {
  const double d[] = {3.0, 2.0, 1.0};
  const DenseMatrix w = DenseMatrix::diagonal(d);
  FactorizedProjection f = factorize(w, 3);
  const DenseMatrix x = random_matrix(4, 3, 1);
  DenseMatrix full, y, ref;
  f.apply(x, full);
  CHECK(linalg::max_abs_diff(full, linalg::matmul_nt(x, w)) < 1e-14);
  f.set_active_rank(2);
  f.apply(x, y);
  factorize(w, 2).apply(x, ref);
  CHECK(linalg::max_abs_diff(y, ref) <= 1e-8);
  f.set_active_rank(3);
  f.apply(x, y);
  CHECK(y == full);
  CHECK_THROWS_AS(f.set_active_rank(0), ValidationError);
}

TEST_CASE("constant schedule matches static decoding") {
  Fixture f;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto prompt = prompt_of(s);
    for (std::size_t b : {f.alloc.budget, f.alloc.budget / 2, std::size_t{20}}) {
      const auto prog = progressive_generate(f.model, f.cost, prompt, DecodeSchedule::constant(b), 20);
      CHECK(prog.tokens == static_generate(f.model, f.cost, prompt, b, 20));
    }
  }
  CHECK(f.model.active_ranks() == f.model.full_ranks());
}

TEST_CASE("full-budget schedule reproduces the factorized model's greedy output") {
  Fixture f;
  const auto prompt = prompt_of(9);
  const auto gen = progressive_generate(f.model, f.cost, prompt, DecodeSchedule::constant(f.alloc.budget), 24);
  CHECK(gen.tokens == greedy_generate(f.model, prompt, 24));

  // Lossless factorization: same stream as the dense model.
  const RankAllocation full = allocate_ranks(f.imp, 14 * 32, 1, projection_caps(f.config));
  const CompressedLM lossless = compress_model(f.dense, full);
  CHECK(greedy_generate(lossless, prompt, 24) == greedy_generate(f.dense, prompt, 24));
}

TEST_CASE("greedy generation matches a recompute-everything loop") {
  Fixture f;
  const auto prompt = prompt_of(3);
  std::vector<Token> seq = prompt;
  for (int i = 0; i < 10; ++i) {
    const DenseMatrix logits = f.dense.forward(seq);
    const auto row = logits.row(logits.rows() - 1);
    seq.push_back(static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  const auto gen = greedy_generate(f.dense, prompt, 10);
  CHECK(std::vector<Token>(seq.begin() + 6, seq.end()) == gen);
}

TEST_CASE("two-step schedule gives two parameter plateaus") {
  Fixture f;
  const std::size_t full = f.alloc.budget;
  const std::size_t low = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(full)));
  const DecodeSchedule s{ScheduleForm::kDecreased, {{0, full}, {8, low}}};
  const auto gen = progressive_generate(f.model, f.cost, prompt_of(4), s, 20);
  REQUIRE(gen.trace.size() == 21);
  const std::size_t p_full = factorized_params(f.config, token_rank_config(f.imp, full, 1, f.alloc.ranks));
  const std::size_t p_low = factorized_params(f.config, token_rank_config(f.imp, low, 1, f.alloc.ranks));
  CHECK(gen.trace[0].prefill);
  for (std::size_t i = 0; i < gen.trace.size(); ++i) {
    const bool high = i <= 8;
    CHECK(gen.trace[i].params_used == (high ? p_full : p_low));
    CHECK(gen.trace[i].budget == (high ? full : low));
  }
  CHECK(trace_rate(gen.trace, f.cost.dense_params()) == overall_compression_rate(s, 20, f.cost));
  const std::string csv = trace_csv(gen.trace);
  CHECK(csv.rfind("token_index,budget,params_used\nprefill,", 0) == 0);
  CHECK(csv.find("\n8," + std::to_string(low)) != std::string::npos);
  CHECK(csv.find("\n7," + std::to_string(full)) != std::string::npos);
}

TEST_CASE("progressive decoding rejects unmaterialized budgets") {
  Fixture f;
  const DecodeSchedule too_big = DecodeSchedule::constant(f.alloc.budget + 1);
  CHECK_THROWS_AS(progressive_generate(f.model, f.cost, prompt_of(1), too_big, 4), ValidationError);
  CHECK_THROWS_AS(progressive_generate(f.model, f.cost, prompt_of(1), DecodeSchedule::constant(5), 4),
                  ValidationError);
  CHECK_THROWS_AS(progressive_generate(f.model, f.cost, prompt_of(1, 60), DecodeSchedule::constant(100), 10),
                  ValidationError);
  CHECK_THROWS_AS(greedy_generate(f.dense, std::vector<Token>{}, 3), ValidationError);
}

TEST_CASE("compression rate arithmetic") {
  Fixture f;
  const std::size_t b = 200;
  const double p = static_cast<double>(f.cost.params(b));
  const double d = static_cast<double>(f.cost.dense_params());
  CHECK(overall_compression_rate(DecodeSchedule::constant(b), 50, f.cost) == doctest::Approx(1.0 - p / d));

  // Half the tokens at one level and half at another, with a long horizon the
  // prefill barely matters and the rate is the mean of the two rates.
  const std::size_t hi = f.alloc.budget;
  const double p_hi = static_cast<double>(f.cost.params(hi));
  const DecodeSchedule half{ScheduleForm::kDecreased, {{0, hi}, {5000, b}}};
  const double mean = 0.5 * ((1.0 - p_hi / d) + (1.0 - p / d));
  CHECK(std::abs(overall_compression_rate(half, 10000, f.cost) - mean) < 1e-4);
  CHECK_THROWS_AS(overall_compression_rate(half, 0, f.cost), ValidationError);
}

TEST_CASE("rate accounting matches per-token summation") {
  Fixture f;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> budgets = {14 + rng() % (f.alloc.budget - 13), 14 + rng() % (f.alloc.budget - 13),
                                        14 + rng() % (f.alloc.budget - 13)};
    std::sort(budgets.rbegin(), budgets.rend());
    const std::size_t s1 = 1 + rng() % 30;
    const std::size_t s2 = s1 + 1 + rng() % 30;
    const DecodeSchedule s{ScheduleForm::kDecreased, {{0, budgets[0]}, {s1, budgets[1]}, {s2, budgets[2]}}};
    const std::size_t n = 1 + rng() % 80;
    CHECK(overall_compression_rate(s, n, f.cost) == brute_force_rate(s, n, f.cost));
  }
}

TEST_CASE("schedule candidates") {
  Fixture f;
  const std::size_t mb = f.alloc.budget;
  const auto zero = build_schedule_candidates(0.0, 64, mb, f.cost);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0].steps.size() == 1);

  const double static_rate = overall_compression_rate(DecodeSchedule::constant(mb), 64, f.cost);
  const auto at_static = build_schedule_candidates(static_rate, 64, mb, f.cost);
  CHECK(at_static[0].steps.size() == 1);

  const auto c = build_schedule_candidates(0.2, 128, mb, f.cost);
  CHECK(c.size() >= 5);
  CHECK(c.size() <= kMaxCandidates);
  std::size_t first_drop_min = 1000, first_drop_max = 0;
  for (const auto& s : c) {
    CHECK_NOTHROW(s.validate());
    CHECK(s.form == ScheduleForm::kDecreased);
    CHECK(s.steps[0].budget == mb);
    CHECK(std::abs(overall_compression_rate(s, 128, f.cost) - 0.2) <= 0.01);
    CHECK(s.steps.size() <= 5);
    if (s.steps.size() > 1) {
      first_drop_min = std::min(first_drop_min, s.steps[1].from_token);
      first_drop_max = std::max(first_drop_max, s.steps[1].from_token);
    }
  }
  CHECK(first_drop_min < 16);
  CHECK(first_drop_max >= 32);
  CHECK(build_schedule_candidates(0.2, 128, mb, f.cost) == c);
  CHECK_THROWS_AS(build_schedule_candidates(0.99, 128, mb, f.cost), ValidationError);
}

TEST_CASE("schedule search") {
  Fixture f;
  const std::size_t mb = f.alloc.budget;
  std::vector<CalibPrompt> prompts;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto p = prompt_of(20 + s);
    prompts.push_back({p, greedy_generate(f.model, p, 16)});
  }
  const DecodeSchedule only{ScheduleForm::kDecreased, {{0, mb}, {4, 30}}};
  const auto one = search_schedule(f.model, f.cost, std::span(&only, 1), prompts);
  CHECK(one.best == only);
  CHECK(one.scores.size() == 1);

  const std::vector<DecodeSchedule> cands = {
      {ScheduleForm::kDecreased, {{0, mb}, {2, 20}}},
      DecodeSchedule{ScheduleForm::kDecreased, {{0, mb}}},
      {ScheduleForm::kDecreased, {{0, mb}, {8, 40}}},
  };
  const auto r = search_schedule(f.model, f.cost, cands, prompts);
  CHECK(r.best_index == 1);
  CHECK(r.scores[1] == doctest::Approx(100.0));
  CHECK(r.rates.size() == 3);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    CompressedLM local = f.model;
    CHECK(r.scores[i] == score_schedule(local, f.cost, cands[i], prompts));
  }
  CHECK(r.scores[0] <= r.scores[1]);

  const auto loss = search_schedule(f.model, f.cost, cands, prompts, ScorerKind::kCalibrationLoss);
  CHECK(loss.best_index == 1);
  CHECK_THROWS_AS(search_schedule(f.model, f.cost, std::span<const DecodeSchedule>{}, prompts), ValidationError);
  CHECK_THROWS_AS(search_schedule(f.model, f.cost, cands, std::span<const CalibPrompt>{}), ValidationError);
}

TEST_CASE("decoding forms share the average parameter count") {
  Fixture f;
  const std::size_t mb = f.alloc.budget;
  std::vector<CalibPrompt> prompts;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const auto p = prompt_of(40 + s);
    prompts.push_back({p, greedy_generate(f.model, p, 24)});
  }
  const DecodeSchedule dec{ScheduleForm::kDecreased, {{0, mb}, {6, 200}, {15, 120}}};
  const FormsReport rep = compare_decoding_forms(f.model, f.cost, dec, prompts);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].form == ScheduleForm::kStatic);
  CHECK(rep.rows[1].form == ScheduleForm::kIncreased);
  CHECK(rep.rows[2].form == ScheduleForm::kDecreased);
  const double target = rep.rows[2].avg_params;
  for (const auto& row : rep.rows) {
    CHECK(std::abs(row.avg_params - target) <= 0.005 * target);
    CHECK(row.rouge_l >= 0.0);
    CHECK(row.rouge_l <= 100.0);
  }
  CHECK(rep.rows[1].schedule.steps.front().budget == 120);
  CHECK(rep.rows[1].schedule.steps.back().budget == mb);
  CHECK(rep.table().find("increased") != std::string::npos);

  // One generated token: every form runs the same budget.
  std::vector<CalibPrompt> single;
  for (const auto& p : prompts) single.push_back({p.prompt, {p.reference[0]}});
  const FormsReport one = compare_decoding_forms(f.model, f.cost, dec, single);
  CHECK(one.rows[0].rouge_l == one.rows[2].rouge_l);
  CHECK(one.rows[1].rouge_l == one.rows[2].rouge_l);
}
