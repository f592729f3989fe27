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

#include "lowrank/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/parallel.hpp"

namespace lowrank {

std::string_view form_name(ScheduleForm form) {
  switch (form) {
    case ScheduleForm::kDecreased:
      return "decreased";
    case ScheduleForm::kStatic:
      return "static";
    case ScheduleForm::kIncreased:
      return "increased";
  }
  return "decreased";
}

ScheduleForm parse_form(std::string_view name) {
  if (name == "decreased") return ScheduleForm::kDecreased;
  if (name == "static") return ScheduleForm::kStatic;
  if (name == "increased") return ScheduleForm::kIncreased;
  throw ValidationError("unknown schedule form '" + std::string(name) + "' (expected decreased, static or increased)");
}

DecodeSchedule DecodeSchedule::constant(std::size_t budget) {
  return DecodeSchedule{ScheduleForm::kStatic, {{0, budget}}};
}

void DecodeSchedule::validate() const {
  if (steps.empty()) throw ValidationError("schedule has no steps");
  if (steps[0].from_token != 0) throw ValidationError("schedule must start at token 0");
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i].from_token <= steps[i - 1].from_token) {
      throw ValidationError("schedule step tokens must be strictly increasing");
    }
    if (form == ScheduleForm::kDecreased && steps[i].budget > steps[i - 1].budget) {
      throw ValidationError("decreased schedule raises its budget at token " + std::to_string(steps[i].from_token));
    }
    if (form == ScheduleForm::kIncreased && steps[i].budget < steps[i - 1].budget) {
      throw ValidationError("increased schedule lowers its budget at token " + std::to_string(steps[i].from_token));
    }
  }
  if (form == ScheduleForm::kStatic && steps.size() != 1) throw ValidationError("static schedule needs exactly one step");
  for (const auto& s : steps) {
    if (s.budget == 0) throw ValidationError("schedule budget must be positive");
  }
}

std::size_t DecodeSchedule::budget_at(std::size_t token) const {
  std::size_t b = steps.at(0).budget;
  for (const auto& s : steps) {
    if (s.from_token > token) break;
    b = s.budget;
  }
  return b;
}

std::size_t DecodeSchedule::max_budget() const {
  std::size_t b = 0;
  for (const auto& s : steps) b = std::max(b, s.budget);
  return b;
}

std::size_t DecodeSchedule::min_budget() const {
  std::size_t b = steps.at(0).budget;
  for (const auto& s : steps) b = std::min(b, s.budget);
  return b;
}

void to_json(nlohmann::json& j, const DecodeSchedule& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : s.steps) steps.push_back({{"from_token", st.from_token}, {"budget", st.budget}});
  j = nlohmann::json{{"form", form_name(s.form)}, {"steps", steps}};
}

void from_json(const nlohmann::json& j, DecodeSchedule& s) {
  s.form = parse_form(j.value("form", std::string("decreased")));
  s.steps.clear();
  for (const auto& st : j.at("steps")) {
    s.steps.push_back({st.at("from_token").get<std::size_t>(), st.at("budget").get<std::size_t>()});
  }
  s.validate();
}

TokenRankConfig token_rank_config(const ImportanceMap& imp, std::size_t budget_t, std::size_t floor,
                                  std::span<const std::size_t> materialized) {
  const std::size_t total = std::accumulate(materialized.begin(), materialized.end(), std::size_t{0});
  if (budget_t > total) {
    throw ValidationError("budget " + std::to_string(budget_t) + " exceeds the materialized ranks (sum " +
                          std::to_string(total) + "); cannot exceed the factorized rank");
  }
  return allocate_ranks(imp, budget_t, floor, materialized).ranks;
}

BudgetCost::BudgetCost(ImportanceMap importance, ModelConfig config, std::vector<std::size_t> materialized,
                       std::size_t floor)
    : importance_(std::move(importance)),
      config_(std::move(config)),
      materialized_(std::move(materialized)),
      floor_(floor),
      dense_(dense_projection_params(config_)) {
  if (materialized_.size() != config_.num_projections() || importance_.alpha.size() != materialized_.size()) {
    throw ValidationError("budget cost: importance, ranks and model disagree");
  }
}

const TokenRankConfig& BudgetCost::ranks(std::size_t budget) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(budget);
  if (it == cache_.end()) {
    it = cache_.emplace(budget, token_rank_config(importance_, budget, floor_, materialized_)).first;
  }
  return it->second;
}

std::size_t BudgetCost::params(std::size_t budget) const { return factorized_params(config_, ranks(budget)); }

std::size_t BudgetCost::min_budget() const { return floor_ * materialized_.size(); }

std::size_t BudgetCost::max_budget() const {
  return std::accumulate(materialized_.begin(), materialized_.end(), std::size_t{0});
}

std::vector<std::size_t> step_budgets(const DecodeSchedule& schedule, std::size_t n_tokens) {
  schedule.validate();
  std::vector<std::size_t> s;
  s.reserve(n_tokens + 1);
  s.push_back(schedule.budget_at(0));
  std::size_t step = 0;
  for (std::size_t t = 0; t < n_tokens; ++t) {
    while (step + 1 < schedule.steps.size() && schedule.steps[step + 1].from_token <= t) ++step;
    s.push_back(schedule.steps[step].budget);
  }
  return s;
}

DecodeSchedule schedule_from_steps(std::span<const std::size_t> steps, ScheduleForm form) {
  if (steps.size() < 2) throw ValidationError("schedule_from_steps: need a prefill and at least one token");
  if (steps[0] != steps[1]) throw ValidationError("schedule_from_steps: prefill must run at the budget of token 0");
  DecodeSchedule s;
  s.form = form;
  for (std::size_t t = 0; t + 1 < steps.size(); ++t) {
    if (t == 0 || steps[t + 1] != s.steps.back().budget) s.steps.push_back({t, steps[t + 1]});
  }
  s.validate();
  return s;
}

double overall_compression_rate(const DecodeSchedule& schedule, std::size_t n_tokens, const BudgetCost& cost) {
  if (n_tokens == 0) throw ValidationError("compression rate needs at least one generated token");
  schedule.validate();
  // Sum over plateaus: the prefill counts once at R(0).
  double used = static_cast<double>(cost.params(schedule.steps[0].budget));
  for (std::size_t i = 0; i < schedule.steps.size(); ++i) {
    const std::size_t begin = schedule.steps[i].from_token;
    if (begin >= n_tokens) break;
    const std::size_t end = i + 1 < schedule.steps.size() ? std::min(schedule.steps[i + 1].from_token, n_tokens)
                                                          : n_tokens;
    used += static_cast<double>(end - begin) * static_cast<double>(cost.params(schedule.steps[i].budget));
  }
  return 1.0 - used / (static_cast<double>(n_tokens + 1) * static_cast<double>(cost.dense_params()));
}

std::string trace_csv(std::span<const TraceRow> trace) {
  std::string out = "token_index,budget,params_used\n";
  for (const auto& r : trace) {
    out += (r.prefill ? std::string("prefill") : std::to_string(r.token_index)) + "," + std::to_string(r.budget) +
           "," + std::to_string(r.params_used) + "\n";
  }
  return out;
}

double trace_rate(std::span<const TraceRow> trace, std::size_t dense_params) {
  if (trace.empty()) throw ValidationError("empty parameter trace");
  double used = 0.0;
  for (const auto& r : trace) used += static_cast<double>(r.params_used);
  return 1.0 - used / (static_cast<double>(trace.size()) * static_cast<double>(dense_params));
}

namespace {

Token argmax(std::span<const double> row) {
  return static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
}

void check_lengths(const LanguageModel& model, std::size_t prompt_len, std::size_t n_tokens) {
  if (prompt_len == 0) throw ValidationError("generation needs a non-empty prompt");
  if (prompt_len + n_tokens > model.config().max_seq_len + 1) {
    throw ValidationError("prompt of " + std::to_string(prompt_len) + " plus " + std::to_string(n_tokens) +
                          " tokens exceeds max_seq_len " + std::to_string(model.config().max_seq_len));
  }
}

// Prefill prompt[:-1], then one forward per generated token. `before(t)` runs
// ahead of the forward that emits token t; `before(npos)` ahead of prefill.
template <typename Before, typename Choose>
void decode_loop(const LanguageModel& model, std::span<const Token> prompt, std::size_t n_tokens, Before&& before,
                 Choose&& choose) {
  check_lengths(model, prompt.size(), n_tokens);
  KvCache cache(model.config());
  before(static_cast<std::size_t>(-1));
  if (prompt.size() > 1) model.forward(prompt.first(prompt.size() - 1), &cache);
  Token last = prompt.back();
  for (std::size_t t = 0; t < n_tokens; ++t) {
    before(t);
    const Token in[] = {last};
    const DenseMatrix logits = model.forward(in, &cache);
    last = choose(t, logits.row(0));
  }
}

class RankRestore {
 public:
  explicit RankRestore(CompressedLM& m) : model_(m), ranks_(m.active_ranks()) {}
  ~RankRestore() { model_.set_active_ranks(ranks_); }
  RankRestore(const RankRestore&) = delete;
  RankRestore& operator=(const RankRestore&) = delete;

 private:
  CompressedLM& model_;
  std::vector<std::size_t> ranks_;
};

void check_schedule(const DecodeSchedule& schedule, const BudgetCost& cost) {
  schedule.validate();
  if (schedule.max_budget() > cost.max_budget()) {
    throw ValidationError("schedule budget " + std::to_string(schedule.max_budget()) +
                          " exceeds the materialized budget " + std::to_string(cost.max_budget()));
  }
  if (schedule.min_budget() < cost.min_budget()) {
    throw ValidationError("schedule budget " + std::to_string(schedule.min_budget()) + " is below floor x count = " +
                          std::to_string(cost.min_budget()));
  }
}

}  // namespace

std::vector<Token> greedy_generate(const LanguageModel& model, std::span<const Token> prompt, std::size_t n_tokens) {
  std::vector<Token> out;
  decode_loop(
      model, prompt, n_tokens, [](std::size_t) {},
      [&](std::size_t, std::span<const double> row) {
        out.push_back(argmax(row));
        return out.back();
      });
  return out;
}

GenerationResult progressive_generate(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                                      const DecodeSchedule& schedule, std::size_t n_tokens) {
  check_schedule(schedule, cost);
  RankRestore restore(model);
  GenerationResult r;
  std::size_t step = 0;
  std::size_t prev_budget = 0;
  decode_loop(
      model, prompt, n_tokens,
      [&](std::size_t t) {
        const bool prefill = t == static_cast<std::size_t>(-1);
        const std::size_t tok = prefill ? 0 : t;
        while (step + 1 < schedule.steps.size() && schedule.steps[step + 1].from_token <= tok) ++step;
        const std::size_t b = schedule.steps[step].budget;
        if (!prefill && schedule.form == ScheduleForm::kDecreased && t > 0 && b > prev_budget) {
          throw NumericalError("decreased schedule raised its budget during decoding");
        }
        prev_budget = b;
        model.set_active_ranks(cost.ranks(b));
        r.trace.push_back({prefill, tok, b, model.active_projection_params()});
      },
      [&](std::size_t, std::span<const double> row) {
        r.tokens.push_back(argmax(row));
        return r.tokens.back();
      });
  return r;
}

std::vector<Token> static_generate(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                                   std::size_t budget, std::size_t n_tokens) {
  check_schedule(DecodeSchedule::constant(budget), cost);
  RankRestore restore(model);
  model.set_active_ranks(cost.ranks(budget));
  return greedy_generate(model, prompt, n_tokens);
}

double schedule_nll(CompressedLM& model, const BudgetCost& cost, std::span<const Token> prompt,
                    std::span<const Token> continuation, const DecodeSchedule& schedule) {
  check_schedule(schedule, cost);
  if (continuation.empty()) throw ValidationError("schedule_nll: empty continuation");
  RankRestore restore(model);
  double nll = 0.0;
  std::size_t step = 0;
  decode_loop(
      model, prompt, continuation.size(),
      [&](std::size_t t) {
        const std::size_t tok = t == static_cast<std::size_t>(-1) ? 0 : t;
        while (step + 1 < schedule.steps.size() && schedule.steps[step + 1].from_token <= tok) ++step;
        model.set_active_ranks(cost.ranks(schedule.steps[step].budget));
      },
      [&](std::size_t t, std::span<const double> row) {
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        nll += mx + std::log(sum) - row[continuation[t]];
        return continuation[t];
      });
  return nll / static_cast<double>(continuation.size());
}

std::vector<DecodeSchedule> build_schedule_candidates(double target_rate, std::size_t horizon,
                                                      std::size_t materialized_budget, const BudgetCost& cost,
                                                      std::size_t max_candidates, double tolerance) {
  if (!(target_rate >= 0.0 && target_rate < 1.0)) throw ValidationError("target rate must be in [0, 1)");
  if (horizon == 0) throw ValidationError("schedule horizon must be >= 1");
  if (max_candidates == 0) throw ValidationError("max_candidates must be >= 1");
  if (materialized_budget > cost.max_budget() || materialized_budget < cost.min_budget()) {
    throw ValidationError("materialized budget outside the feasible range");
  }
  const DecodeSchedule single{ScheduleForm::kDecreased, {{0, materialized_budget}}};
  auto within = [&](const DecodeSchedule& s) {
    return std::abs(overall_compression_rate(s, horizon, cost) - target_rate) <= tolerance;
  };
  if (target_rate == 0.0) {
    if (!within(single)) throw ValidationError("materialized budget does not meet a 0% target");
    return {single};
  }

  const std::size_t floor_budget = cost.min_budget();
  std::vector<std::size_t> levels;
  for (int j = 0; j <= 9; ++j) {
    const auto b = static_cast<std::size_t>(std::llround(static_cast<double>(materialized_budget) * (1.0 - 0.1 * j)));
    if (b >= floor_budget && (levels.empty() || b < levels.back())) levels.push_back(b);
  }
  if (levels.back() > floor_budget) levels.push_back(floor_budget);

  std::vector<std::size_t> points;
  for (int k = 1;; ++k) {
    const double p = static_cast<double>(horizon) * std::pow(2.0, -0.5 * k);
    if (p < 1.0) break;
    const auto q = static_cast<std::size_t>(std::llround(p));
    if (q >= 1 && q < horizon) points.push_back(q);
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  {
    DecodeSchedule steepest = single;
    if (horizon > 1) steepest.steps = {{0, materialized_budget}, {1, floor_budget}};
    if (overall_compression_rate(steepest, horizon, cost) < target_rate - tolerance) {
      throw ValidationError("target rate " + std::to_string(target_rate) +
                            " is unreachable even with an immediate drop to the floor budget");
    }
  }

  struct Found {
    DecodeSchedule schedule;
    double error;
    std::size_t order;
  };
  std::vector<Found> found;
  std::vector<std::size_t> pick_points, pick_levels;
  DecodeSchedule current;
  current.form = ScheduleForm::kDecreased;
  // Depth-first over (switch point, level) sequences, both strictly monotone.
  std::function<void(std::size_t, std::size_t, std::size_t)> walk = [&](std::size_t depth, std::size_t next_point,
                                                                         std::size_t next_level) {
    if (depth > 0) {
      current.steps = {{0, materialized_budget}};
      for (std::size_t i = 0; i < depth; ++i) current.steps.push_back({pick_points[i], levels[pick_levels[i]]});
      const double err = std::abs(overall_compression_rate(current, horizon, cost) - target_rate);
      if (err <= tolerance) found.push_back({current, err, found.size()});
    }
    if (depth == 4) return;
    for (std::size_t p = next_point; p < points.size(); ++p) {
      for (std::size_t l = next_level; l < levels.size(); ++l) {
        pick_points.resize(depth + 1);
        pick_levels.resize(depth + 1);
        pick_points[depth] = points[p];
        pick_levels[depth] = l;
        walk(depth + 1, p + 1, l + 1);
      }
    }
  };
  walk(0, 0, 1);

  std::vector<DecodeSchedule> out;
  if (within(single)) out.push_back(single);
  // Group by first drop; take the closest-to-target from each group in turn.
  std::map<std::size_t, std::vector<Found>> groups;
  for (auto& f : found) groups[f.schedule.steps[1].from_token].push_back(f);
  for (auto& [point, g] : groups) {
    std::stable_sort(g.begin(), g.end(), [](const Found& a, const Found& b) { return a.error < b.error; });
  }
  std::vector<std::size_t> keys;
  for (const auto& [point, g] : groups) keys.push_back(point);
  const std::size_t slots = max_candidates > out.size() ? max_candidates - out.size() : 0;
  std::vector<DecodeSchedule> picked;
  if (!keys.empty() && slots > 0) {
    std::vector<std::size_t> chosen_keys;
    if (keys.size() <= slots) {
      chosen_keys = keys;
    } else {
      for (std::size_t i = 0; i < slots; ++i) {
        const std::size_t idx = slots == 1 ? 0 : (i * (keys.size() - 1) + (slots - 1) / 2) / (slots - 1);
        if (chosen_keys.empty() || chosen_keys.back() != keys[idx]) chosen_keys.push_back(keys[idx]);
      }
    }
    for (std::size_t round = 0; picked.size() < slots; ++round) {
      bool any = false;
      for (std::size_t key : chosen_keys) {
        const auto& g = groups[key];
        if (round < g.size() && picked.size() < slots) {
          picked.push_back(g[round].schedule);
          any = true;
        }
      }
      if (!any) break;
    }
    std::stable_sort(picked.begin(), picked.end(), [](const DecodeSchedule& a, const DecodeSchedule& b) {
      return a.steps[1].from_token < b.steps[1].from_token;
    });
  }
  out.insert(out.end(), picked.begin(), picked.end());
  if (out.empty()) {
    throw ValidationError("no schedule candidate lands within " + std::to_string(100.0 * tolerance) +
                          " points of the target rate");
  }
  return out;
}

ScorerKind parse_scorer(std::string_view name) {
  if (name == "rouge_l") return ScorerKind::kRougeL;
  if (name == "calibration_loss") return ScorerKind::kCalibrationLoss;
  throw ValidationError("unknown scorer '" + std::string(name) + "' (expected rouge_l or calibration_loss)");
}

double score_schedule(CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& schedule,
                      std::span<const CalibPrompt> prompts, ScorerKind scorer) {
  if (prompts.empty()) throw ValidationError("schedule scoring needs calibration prompts");
  double total = 0.0;
  for (const auto& p : prompts) {
    if (p.reference.empty()) throw ValidationError("calibration prompt has an empty reference");
    if (scorer == ScorerKind::kCalibrationLoss) {
      total -= schedule_nll(model, cost, p.prompt, p.reference, schedule);
      continue;
    }
    const auto gen = progressive_generate(model, cost, p.prompt, schedule, p.reference.size());
    const std::string hyp = tokenizer::decode(gen.tokens);
    const std::string ref = tokenizer::decode(p.reference);
    if (rouge_tokens(ref).empty()) {
      total += rouge_tokens(hyp).empty() ? 100.0 : 0.0;
    } else {
      total += rouge_l(hyp, ref).f;
    }
  }
  return total / static_cast<double>(prompts.size());
}

SearchResult search_schedule(const CompressedLM& model, const BudgetCost& cost,
                             std::span<const DecodeSchedule> candidates, std::span<const CalibPrompt> prompts,
                             ScorerKind scorer) {
  if (candidates.empty()) throw ValidationError("schedule search needs at least one candidate");
  if (prompts.empty()) throw ValidationError("schedule search needs calibration prompts");
  SearchResult r;
  r.scores.assign(candidates.size(), 0.0);
  parallel_for(candidates.size(), [&](std::size_t i) {
    CompressedLM local = model;
    r.scores[i] = score_schedule(local, cost, candidates[i], prompts, scorer);
  });
  for (const auto& c : candidates) r.rates.push_back(overall_compression_rate(c, prompts[0].reference.size(), cost));
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (r.scores[i] > r.scores[r.best_index]) r.best_index = i;
  }
  r.best = candidates[r.best_index];
  return r;
}

std::string FormsReport::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %14s %9s  %s\n", "form", "rouge_l", "avg_params", "rate%", "schedule");
  out << line;
  for (const auto& r : rows) {
    std::string steps;
    for (const auto& s : r.schedule.steps) {
      steps += (steps.empty() ? "" : " ") + std::to_string(s.from_token) + ":" + std::to_string(s.budget);
    }
    std::snprintf(line, sizeof line, "%-10s %10.3f %14.1f %9.3f  %s\n", std::string(form_name(r.form)).c_str(),
                  r.rouge_l, r.avg_params, 100.0 * r.rate, steps.c_str());
    out << line;
  }
  return out.str();
}

void to_json(nlohmann::json& j, const FormsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"form", form_name(row.form)},
                    {"schedule", row.schedule},
                    {"rouge_l", row.rouge_l},
                    {"avg_params", row.avg_params},
                    {"rate", row.rate}});
  }
  j = nlohmann::json{{"tolerance", r.tolerance}, {"forms", rows}};
}

FormsReport compare_decoding_forms(const CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& decreased,
                                   std::span<const CalibPrompt> prompts, double tolerance) {
  if (prompts.empty()) throw ValidationError("decoding-form comparison needs calibration prompts");
  const std::size_t n = prompts[0].reference.size();
  for (const auto& p : prompts) {
    if (p.reference.size() != n) throw ValidationError("calibration references must share one length");
  }
  if (decreased.form != ScheduleForm::kDecreased) throw ValidationError("compare_decoding_forms expects a decreased schedule");
  const auto dec_steps = step_budgets(decreased, n);
  auto avg_params = [&](std::span<const std::size_t> steps) {
    double s = 0.0;
    for (std::size_t b : steps) s += static_cast<double>(cost.params(b));
    return s / static_cast<double>(steps.size());
  };
  const double target = avg_params(dec_steps);

  std::vector<std::size_t> inc_steps = dec_steps;
  std::sort(inc_steps.begin(), inc_steps.end());
  inc_steps[0] = inc_steps[1];
  const DecodeSchedule increased = schedule_from_steps(inc_steps, ScheduleForm::kIncreased);

  std::size_t best = cost.min_budget();
  for (std::size_t b = cost.min_budget(); b <= cost.max_budget(); ++b) {
    if (std::abs(static_cast<double>(cost.params(b)) - target) <
        std::abs(static_cast<double>(cost.params(best)) - target)) {
      best = b;
    }
  }
  const DecodeSchedule stat = DecodeSchedule::constant(best);

  FormsReport report;
  report.tolerance = tolerance;
  const std::pair<ScheduleForm, const DecodeSchedule*> forms[] = {
      {ScheduleForm::kStatic, &stat}, {ScheduleForm::kIncreased, &increased}, {ScheduleForm::kDecreased, &decreased}};
  for (const auto& [form, sched] : forms) {
    FormRow row;
    row.form = form;
    row.schedule = *sched;
    row.avg_params = avg_params(step_budgets(*sched, n));
    row.rate = overall_compression_rate(*sched, n, cost);
    if (std::abs(row.avg_params - target) > tolerance * target) {
      throw ValidationError(std::string(form_name(form)) + " schedule averages " + std::to_string(row.avg_params) +
                            " params per step, more than " + std::to_string(100.0 * tolerance) +
                            "% away from the decreased schedule's " + std::to_string(target));
    }
    report.rows.push_back(row);
  }
  parallel_for(report.rows.size(), [&](std::size_t i) {
    CompressedLM local = model;
    report.rows[i].rouge_l = score_schedule(local, cost, report.rows[i].schedule, prompts);
  });
  return report;
}

}  // namespace lowrank
