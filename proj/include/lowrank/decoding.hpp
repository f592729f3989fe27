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
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/compression.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

enum class ScheduleForm { kDecreased, kStatic, kIncreased };

std::string_view form_name(ScheduleForm form);
ScheduleForm parse_form(std::string_view name);

struct ScheduleStep {
  std::size_t from_token = 0;
  std::size_t budget = 0;
  friend bool operator==(const ScheduleStep&, const ScheduleStep&) = default;
};

/// Step function from generated-token index to rank budget. The prompt is
/// prefilled at the budget of token 0.
struct DecodeSchedule {
  ScheduleForm form = ScheduleForm::kDecreased;
  std::vector<ScheduleStep> steps;

  static DecodeSchedule constant(std::size_t budget);

  /// from_token strictly increasing from 0; decreased budgets non-increasing,
  /// increased non-decreasing, static a single step.
  void validate() const;
  std::size_t budget_at(std::size_t token) const;
  std::size_t max_budget() const;
  std::size_t min_budget() const;

  friend bool operator==(const DecodeSchedule&, const DecodeSchedule&) = default;
};

void to_json(nlohmann::json& j, const DecodeSchedule& s);
void from_json(const nlohmann::json& j, DecodeSchedule& s);

/// Per-projection ranks for one token, flat order.
using TokenRankConfig = std::vector<std::size_t>;

/// allocate_ranks at budget_t with caps lowered to the materialized ranks.
TokenRankConfig token_rank_config(const ImportanceMap& imp, std::size_t budget_t, std::size_t floor,
                                  std::span<const std::size_t> materialized);

/// Maps a budget to the ranks and projection parameters it activates.
/// Memoized; safe to share across threads.
class BudgetCost {
 public:
  BudgetCost(ImportanceMap importance, ModelConfig config, std::vector<std::size_t> materialized,
             std::size_t floor = kDefaultRankFloor);

  const TokenRankConfig& ranks(std::size_t budget) const;
  std::size_t params(std::size_t budget) const;
  std::size_t dense_params() const { return dense_; }
  std::size_t min_budget() const;
  std::size_t max_budget() const;
  const ImportanceMap& importance() const { return importance_; }
  std::size_t floor() const { return floor_; }

 private:
  ImportanceMap importance_;
  ModelConfig config_;
  std::vector<std::size_t> materialized_;
  std::size_t floor_;
  std::size_t dense_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, TokenRankConfig> cache_;
};

/// 1 - (prefill params + sum_t params(R(t))) / ((1 + n_tokens) * dense).
double overall_compression_rate(const DecodeSchedule& schedule, std::size_t n_tokens, const BudgetCost& cost);

struct TraceRow {
  bool prefill = false;
  std::size_t token_index = 0;
  std::size_t budget = 0;
  std::size_t params_used = 0;
};

/// token_index,budget,params_used; the prefill row is labelled "prefill".
std::string trace_csv(std::span<const TraceRow> trace);
double trace_rate(std::span<const TraceRow> trace, std::size_t dense_params);

struct GenerationResult {
  std::vector<Token> tokens;  // generated only
  std::vector<TraceRow> trace;
};

/// Greedy decoding with a KV cache; no early stop.
std::vector<Token> greedy_generate(const LanguageModel& model, std::span<const Token> prompt, std::size_t n_tokens);

/// Greedy decoding whose active ranks follow `schedule`: prefill at R(0), and
/// before the forward that emits token t the active ranks are set to
/// token_rank_config(R(t)). Active ranks are restored on exit.
GenerationResult progressive_generate(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                                      const DecodeSchedule& schedule, std::size_t n_tokens);

/// Sets the ranks of `budget` once and decodes greedily.
std::vector<Token> static_generate(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                                   std::size_t budget, std::size_t n_tokens);

/// Teacher-forced mean NLL of `continuation` after `prompt` under the schedule.
double schedule_nll(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                    std::span<const Token> continuation, const DecodeSchedule& schedule);

inline constexpr double kCandidateTolerance = 0.01;
inline constexpr std::size_t kMaxCandidates = 12;

/// Step schedules starting at materialized_budget with 1-4 switch points on
/// the grid round(h * 2^(-k/2)) and levels on {100%, 90%, ...} of the
/// materialized budget down to the floor, kept when their rate is within
/// tolerance of target_rate. Returns at most max_candidates, spread from early
/// to late first drop; the single-step schedule is kept whenever it fits.
std::vector<DecodeSchedule> build_schedule_candidates(double target_rate, std::size_t horizon,
                                                      std::size_t materialized_budget, const BudgetCost& cost,
                                                      std::size_t max_candidates = kMaxCandidates,
                                                      double tolerance = kCandidateTolerance);

struct CalibPrompt {
  std::vector<Token> prompt;
  std::vector<Token> reference;  // continuation from the uncompressed model
};

enum class ScorerKind { kRougeL, kCalibrationLoss };

ScorerKind parse_scorer(std::string_view name);

struct SearchResult {
  std::size_t best_index = 0;
  DecodeSchedule best;
  std::vector<double> scores;  // mean score per candidate
  std::vector<double> rates;   // overall rate per candidate
};

/// Mean score of one schedule over the prompts (ROUGE-L F, or negative NLL).
double score_schedule(CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& schedule,
                      std::span<const CalibPrompt> prompts, ScorerKind scorer = ScorerKind::kRougeL);

/// Highest mean score wins; ties go to the earlier candidate.
SearchResult search_schedule(const CompressedLM& model, const BudgetCost& cost,
                             std::span<const DecodeSchedule> candidates, std::span<const CalibPrompt> prompts,
                             ScorerKind scorer = ScorerKind::kRougeL);

/// Per-step budgets (prefill first) for n_tokens generated tokens.
std::vector<std::size_t> step_budgets(const DecodeSchedule& schedule, std::size_t n_tokens);
/// Inverse of step_budgets; steps[0] is the prefill and must equal steps[1].
DecodeSchedule schedule_from_steps(std::span<const std::size_t> steps, ScheduleForm form);

struct FormRow {
  ScheduleForm form = ScheduleForm::kDecreased;
  DecodeSchedule schedule;
  double rouge_l = 0.0;
  double avg_params = 0.0;  // per step, prefill included
  double rate = 0.0;
};

struct FormsReport {
  std::vector<FormRow> rows;  // static, increased, decreased
  double tolerance = 0.005;

  std::string table() const;
};

void to_json(nlohmann::json& j, const FormsReport& r);

/// Static and increased schedules matched to the average parameters of
/// `decreased`, all three scored by ROUGE-L against the references.
FormsReport compare_decoding_forms(const CompressedLM& model, const BudgetCost& cost,
                                   const DecodeSchedule& decreased, std::span<const CalibPrompt> prompts,
                                   double tolerance = 0.005);

}  // namespace lowrank
