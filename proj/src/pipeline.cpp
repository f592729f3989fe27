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

#include "lowrank/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "lowrank/bench.hpp"
#include "lowrank/checkpoint.hpp"
#include "lowrank/corpus.hpp"
#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/io.hpp"
#include "lowrank/parallel.hpp"

namespace lowrank {

namespace {

const std::set<std::string> kConfigKeys = {
    "corpus",        "out_dir",        "model",          "train",        "metric",       "rate",
    "materialize_rate", "floor",       "whitening",      "damping",      "form",         "scorer",
    "calib_windows", "calib_len",      "search_prompts", "eval_prompts", "prompt_bytes", "gen_len",
    "bench_runs"};

std::string_view scorer_name(ScorerKind s) { return s == ScorerKind::kRougeL ? "rouge_l" : "calibration_loss"; }

}  // namespace

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"corpus", c.corpus.string()},
       {"out_dir", c.out_dir.string()},
       {"model", c.model},
       {"train", c.train},
       {"metric", metric_name(c.metric)},
       {"rate", c.rate},
       {"materialize_rate", c.materialize_rate},
       {"floor", c.floor},
       {"whitening", c.whitening},
       {"damping", c.damping},
       {"form", form_name(c.form)},
       {"scorer", scorer_name(c.scorer)},
       {"calib_windows", c.calib_windows},
       {"calib_len", c.calib_len},
       {"search_prompts", c.search_prompts},
       {"eval_prompts", c.eval_prompts},
       {"prompt_bytes", c.prompt_bytes},
       {"gen_len", c.gen_len},
       {"bench_runs", c.bench_runs}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kConfigKeys.count(key)) throw ValidationError("config: unknown key \"" + key + "\"");
  }
  try {
    if (j.contains("corpus")) c.corpus = j.at("corpus").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainOptions>();
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("form")) c.form = parse_form(j.at("form").get<std::string>());
    if (j.contains("scorer")) c.scorer = parse_scorer(j.at("scorer").get<std::string>());
    c.rate = j.value("rate", c.rate);
    c.materialize_rate = j.value("materialize_rate", c.materialize_rate);
    c.floor = j.value("floor", c.floor);
    c.whitening = j.value("whitening", c.whitening);
    c.damping = j.value("damping", c.damping);
    c.calib_windows = j.value("calib_windows", c.calib_windows);
    c.calib_len = j.value("calib_len", c.calib_len);
    c.search_prompts = j.value("search_prompts", c.search_prompts);
    c.eval_prompts = j.value("eval_prompts", c.eval_prompts);
    c.prompt_bytes = j.value("prompt_bytes", c.prompt_bytes);
    c.gen_len = j.value("gen_len", c.gen_len);
    c.bench_runs = j.value("bench_runs", c.bench_runs);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

void PipelineConfig::validate() const {
  model.validate();
  train.validate(model);
  if (!(rate > 0.0 && rate < 1.0)) throw ValidationError("rate must be in (0, 1)");
  if (!(materialize_rate >= 0.0 && materialize_rate <= rate)) {
    throw ValidationError("materialize_rate must be in [0, rate]");
  }
  if (floor < 1) throw ValidationError("floor must be >= 1");
  if (!(damping > 0.0)) throw ValidationError("damping must be positive");
  if (calib_windows == 0 || calib_len < 2) throw ValidationError("calibration needs windows >= 1 and len >= 2");
  if (calib_len > model.max_seq_len) throw ValidationError("calib_len exceeds max_seq_len");
  if (search_prompts == 0 || eval_prompts == 0) throw ValidationError("prompt counts must be >= 1");
  if (prompt_bytes == 0 || gen_len == 0) throw ValidationError("prompt_bytes and gen_len must be >= 1");
  if (1 + prompt_bytes + gen_len > model.max_seq_len) {
    throw ValidationError("prompt_bytes + gen_len exceeds max_seq_len");
  }
  if (bench_runs < 5) throw ValidationError("bench_runs must be >= 5");
}

std::string PipelineConfig::hash() const {
  nlohmann::json j = *this;
  j.erase("out_dir");
  return io::fnv1a_hex(j.dump());
}

double PipelineConfig::allocation_rate() const { return form == ScheduleForm::kStatic ? rate : materialize_rate; }

namespace pipeline {

namespace {

void say(const Log& log, const std::string& s) {
  if (log) log(s);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void require_file(const std::filesystem::path& p, const std::string& what, const char* stage) {
  if (!std::filesystem::exists(p)) {
    throw ValidationError("missing " + what + " " + p.string() + "; run `lowrank " + stage + "` first");
  }
}

nlohmann::json stamp(const PipelineConfig& c) {
  return {{"config_hash", c.hash()},
          {"seeds", {{"model", c.model.seed}, {"data", c.train.data_seed}}}};
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) { io::write_file_atomic(p, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

CorpusSplits load_splits(const PipelineConfig& c) {
  if (!std::filesystem::exists(c.corpus)) throw ValidationError("corpus not found: " + c.corpus.string());
  return split_corpus(io::read_file(c.corpus));
}

TinyLM load_model(const PipelineConfig& c) {
  const auto p = artifact(c, kModelFile);
  require_file(p, "model checkpoint", "train");
  return load_checkpoint(p);
}

struct Compressed {
  CompressedLM model;
  ImportanceMap importance;
  RankAllocation allocation;
};

Compressed load_compressed_artifact(const PipelineConfig& c) {
  const auto p = artifact(c, kCompressedFile);
  require_file(p, "compressed checkpoint", "compress");
  const TensorFile f = read_tensor_file(p);
  CompressedLM m = compressed_from_file(f);
  if (!f.header.contains("importance") || !f.header.contains("allocation")) {
    throw FormatError(p.string() + ": header lacks importance or allocation");
  }
  ImportanceMap imp = f.header.at("importance").get<ImportanceMap>();
  RankAllocation alloc = allocation_from_json(f.header.at("allocation"), m.config());
  return {std::move(m), std::move(imp), std::move(alloc)};
}

DecodeSchedule load_schedule(const PipelineConfig& c) {
  const auto p = artifact(c, kScheduleFile);
  require_file(p, "schedule", "schedule-search");
  const nlohmann::json j = read_json(p);
  try {
    DecodeSchedule s = j.at("schedule").get<DecodeSchedule>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

std::vector<std::vector<Token>> calib_set(const PipelineConfig& c, const CorpusSplits& s) {
  return calibration_windows(s.calibration, c.calib_windows, c.calib_len);
}

// Searched (or constant) schedule for a compressed model, plus the search record.
struct Searched {
  DecodeSchedule schedule;
  nlohmann::json record;
};

Searched search_for(const PipelineConfig& c, const CompressedLM& model, const BudgetCost& cost,
                    std::size_t materialized, std::span<const CalibPrompt> prompts, ScheduleForm form) {
  Searched out;
  if (form == ScheduleForm::kStatic) {
    out.schedule = DecodeSchedule::constant(materialized);
    out.record = nlohmann::json::array();
    return out;
  }
  const auto cands = build_schedule_candidates(c.rate, c.gen_len, materialized, cost);
  const SearchResult r = search_schedule(model, cost, cands, prompts, c.scorer);
  out.schedule = r.best;
  out.record = nlohmann::json::array();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    out.record.push_back({{"schedule", cands[i]}, {"score", r.scores[i]}, {"rate", r.rates[i]}});
  }
  if (form == ScheduleForm::kIncreased) {
    const FormsReport forms = compare_decoding_forms(model, cost, r.best, prompts);
    out.schedule = forms.rows[1].schedule;
  }
  return out;
}

double mean_rouge(const CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& s,
                  std::span<const CalibPrompt> prompts) {
  CompressedLM local = model;
  return score_schedule(local, cost, s, prompts, ScorerKind::kRougeL);
}

}  // namespace

std::filesystem::path artifact(const PipelineConfig& c, const char* name) { return c.out_dir / name; }

std::vector<CalibPrompt> reference_prompts(const LanguageModel& dense, std::string_view text, std::size_t count,
                                           std::size_t prompt_bytes, std::size_t gen_len) {
  const auto prompts = story_prompts(text, count, prompt_bytes);
  std::vector<CalibPrompt> out(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    out[i] = {prompts[i], greedy_generate(dense, prompts[i], gen_len)};
  });
  return out;
}

double schedule_perplexity(const CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& schedule,
                           std::string_view corpus, std::size_t seq_len) {
  const auto windows = eval_windows(corpus, seq_len);
  std::vector<double> nll(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    CompressedLM local = model;
    const std::span<const Token> w(windows[i]);
    nll[i] = schedule_nll(local, cost, w.first(1), w.subspan(1), schedule) * static_cast<double>(w.size() - 1);
  });
  double total = 0.0;
  for (double v : nll) total += v;
  return std::exp(total / static_cast<double>(windows.size() * (seq_len - 1)));
}

nlohmann::json train(const PipelineConfig& c, const Log& log) {
  c.validate();
  const CorpusSplits s = load_splits(c);
  std::filesystem::create_directories(c.out_dir);
  const std::size_t every = std::max<std::size_t>(1, c.train.steps / 10);
  const TrainResult r = lowrank::train(c.model, c.train, s.train, [&](std::size_t step, double loss) {
    if (step % every == 0 || step + 1 == c.train.steps) {
      say(log, "step " + std::to_string(step) + " loss " + fmt("%.4f", loss));
    }
  });
  nlohmann::json extra = stamp(c);
  extra["train"] = c.train;
  extra["final_loss"] = r.losses.back();
  save_checkpoint(r.model, artifact(c, kModelFile), extra);
  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) csv << i << ',' << fmt("%.6f", r.losses[i]) << '\n';
  io::write_file_atomic(artifact(c, kTrainLogFile), csv.str());
  return {{"final_loss", r.losses.back()}, {"steps", r.losses.size()}};
}

nlohmann::json calibrate(const PipelineConfig& c, const Log& log) {
  c.validate();
  TinyLM model = load_model(c);
  const auto calib = calib_set(c, load_splits(c));
  const double loss = backward(model, calib);
  say(log, "calibration loss " + fmt("%.4f", loss));
  nlohmann::json extra = stamp(c);
  extra["calibration"] = {{"windows", c.calib_windows}, {"len", c.calib_len}, {"loss", loss}};
  save_gradients(model, artifact(c, kGradientsFile), extra);
  return {{"calibration_loss", loss}};
}

nlohmann::json allocate(const PipelineConfig& c, const Log& log) {
  c.validate();
  TinyLM model = load_model(c);
  if (c.metric != ImportanceMetric::kWeightOnly) {
    const auto g = artifact(c, kGradientsFile);
    require_file(g, "gradient artifact", "calibrate");
    load_gradients(model, g);
  }
  const ImportanceMap imp = compute_importance(model, c.metric);
  const RankAllocation alloc = allocate_for_rate(imp, model.config(), c.allocation_rate(), c.floor);
  const std::size_t params = factorized_params(model.config(), alloc.ranks);
  const std::size_t dense = dense_projection_params(model.config());
  const double achieved = 1.0 - static_cast<double>(params) / static_cast<double>(dense);

  nlohmann::json ij = stamp(c);
  ij["metric"] = metric_name(c.metric);
  ij["importance"] = imp;
  write_json(artifact(c, kImportanceFile), ij);
  nlohmann::json aj = stamp(c);
  aj["metric"] = metric_name(c.metric);
  aj["rate"] = c.allocation_rate();
  aj["target_rate"] = c.rate;
  aj["achieved_rate"] = achieved;
  aj["params"] = params;
  aj["dense_params"] = dense;
  aj["allocation"] = alloc;
  write_json(artifact(c, kAllocationFile), aj);
  const std::string report = importance_report(imp, alloc, model.config());
  io::write_file_atomic(artifact(c, kReportFile), report);
  say(log, report);
  return {{"budget", alloc.budget}, {"achieved_rate", achieved}};
}

nlohmann::json compress(const PipelineConfig& c, const Log& log) {
  c.validate();
  const TinyLM model = load_model(c);
  const auto ap = artifact(c, kAllocationFile);
  const auto ip = artifact(c, kImportanceFile);
  require_file(ap, "allocation", "allocate");
  require_file(ip, "importance map", "allocate");
  const RankAllocation alloc = allocation_from_json(read_json(ap).at("allocation"), model.config());
  const nlohmann::json imp = read_json(ip).at("importance");
  std::optional<ActivationStats> stats;
  if (c.whitening) stats = collect_activation_stats(model, calib_set(c, load_splits(c)));
  const CompressedLM cm = compress_model(model, alloc, stats ? &*stats : nullptr, c.damping);
  nlohmann::json extra = stamp(c);
  extra["allocation"] = alloc;
  extra["importance"] = imp;
  extra["whitening"] = c.whitening;
  extra["damping"] = c.damping;
  save_compressed(cm, artifact(c, kCompressedFile), extra);
  say(log, "factorized " + std::to_string(alloc.ranks.size()) + " projections, budget " +
               std::to_string(alloc.budget));
  return {{"budget", alloc.budget}, {"params", cm.active_projection_params()}};
}

nlohmann::json schedule_search(const PipelineConfig& c, const Log& log) {
  c.validate();
  const TinyLM dense = load_model(c);
  const Compressed cm = load_compressed_artifact(c);
  const BudgetCost cost(cm.importance, cm.model.config(), cm.allocation.ranks, c.floor);
  const CorpusSplits s = load_splits(c);
  const auto prompts = reference_prompts(dense, s.calibration, c.search_prompts, c.prompt_bytes, c.gen_len);
  const Searched found = search_for(c, cm.model, cost, cm.allocation.budget, prompts, c.form);
  const double rate = overall_compression_rate(found.schedule, c.gen_len, cost);

  nlohmann::json j = stamp(c);
  j["schedule"] = found.schedule;
  j["target_rate"] = c.rate;
  j["achieved_rate"] = rate;
  j["horizon"] = c.gen_len;
  j["scorer"] = scorer_name(c.scorer);
  j["candidates"] = found.record;
  write_json(artifact(c, kScheduleFile), j);
  if (c.form != ScheduleForm::kStatic) {
    const DecodeSchedule dec = c.form == ScheduleForm::kDecreased
                                   ? found.schedule
                                   : search_for(c, cm.model, cost, cm.allocation.budget, prompts,
                                                ScheduleForm::kDecreased)
                                         .schedule;
    const FormsReport forms = compare_decoding_forms(cm.model, cost, dec, prompts);
    nlohmann::json fj = stamp(c);
    fj["forms"] = forms;
    write_json(artifact(c, kFormsFile), fj);
    say(log, forms.table());
  }
  say(log, "schedule " + nlohmann::json(found.schedule).dump() + " rate " + fmt("%.4f", rate));
  return {{"schedule", found.schedule}, {"achieved_rate", rate}};
}

nlohmann::json generate(const PipelineConfig& c, const std::optional<std::string>& prompt, const Log& log) {
  c.validate();
  Compressed cm = load_compressed_artifact(c);
  const DecodeSchedule schedule = load_schedule(c);
  const BudgetCost cost(cm.importance, cm.model.config(), cm.allocation.ranks, c.floor);
  std::vector<std::vector<Token>> prompts;
  if (prompt) {
    prompts.push_back(tokenizer::encode(*prompt));
  } else {
    prompts = story_prompts(load_splits(c).eval, c.eval_prompts, c.prompt_bytes);
  }
  nlohmann::json items = nlohmann::json::array();
  std::vector<TraceRow> first_trace;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const GenerationResult g = progressive_generate(cm.model, cost, prompts[i], schedule, c.gen_len);
    if (i == 0) first_trace = g.trace;
    items.push_back({{"prompt", tokenizer::decode(prompts[i])},
                     {"text", tokenizer::decode(g.tokens)},
                     {"tokens", g.tokens},
                     {"rate", trace_rate(g.trace, cost.dense_params())}});
    if (prompt) say(log, tokenizer::decode(prompts[i]) + tokenizer::decode(g.tokens));
  }
  nlohmann::json j = stamp(c);
  j["schedule"] = schedule;
  j["generations"] = items;
  write_json(artifact(c, kGenerationsFile), j);
  io::write_file_atomic(artifact(c, kTraceFile), trace_csv(first_trace));
  return {{"generations", items.size()}, {"rate", overall_compression_rate(schedule, c.gen_len, cost)}};
}

nlohmann::json eval(const PipelineConfig& c, const Log& log) {
  c.validate();
  const TinyLM dense = load_model(c);
  Compressed cm = load_compressed_artifact(c);
  const DecodeSchedule schedule = load_schedule(c);
  const BudgetCost cost(cm.importance, cm.model.config(), cm.allocation.ranks, c.floor);
  const CorpusSplits s = load_splits(c);
  EvalReport r;
  auto timed = [&](const char* phase, auto&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    r.wall_clock.emplace_back(phase, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  double dense_ppl = 0.0;
  timed("perplexity", [&] {
    r.perplexity = schedule_perplexity(cm.model, cost, schedule, s.eval);
    dense_ppl = perplexity(dense, s.eval);
  });
  std::vector<CalibPrompt> prompts;
  timed("references", [&] { prompts = reference_prompts(dense, s.eval, c.eval_prompts, c.prompt_bytes, c.gen_len); });
  timed("rouge_l", [&] {
    RougeScore sum;
    std::size_t scored = 0;
    for (const auto& p : prompts) {
      const auto g = progressive_generate(cm.model, cost, p.prompt, schedule, c.gen_len);
      const std::string ref = tokenizer::decode(p.reference);
      if (rouge_tokens(ref).empty()) continue;
      const RougeScore one = rouge_l(tokenizer::decode(g.tokens), ref);
      ++scored;
      sum.precision += one.precision;
      sum.recall += one.recall;
      sum.f += one.f;
    }
    if (scored == 0) throw ValidationError("eval: no reference continuation contains words");
    const double n = static_cast<double>(scored);
    r.rouge_l = {sum.precision / n, sum.recall / n, sum.f / n};
  });
  r.compression_rate = 100.0 * overall_compression_rate(schedule, c.gen_len, cost);
  timed("throughput", [&] {
    const ThreadLimit single(1);
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& p : prompts) progressive_generate(cm.model, cost, p.prompt, schedule, c.gen_len);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.throughput = static_cast<double>(prompts.size() * c.gen_len) / secs;
  });
  r.validate();
  nlohmann::json j = stamp(c);
  j["report"] = r;
  j["dense_perplexity"] = dense_ppl;
  j["schedule"] = schedule;
  write_json(artifact(c, kEvalFile), j);
  io::write_file_atomic(artifact(c, kEvalTableFile), r.table());
  say(log, r.table());
  return j["report"];
}

nlohmann::json bench(const PipelineConfig& c, const Log& log) {
  c.validate();
  const TinyLM dense = load_model(c);
  Compressed cm = load_compressed_artifact(c);
  const DecodeSchedule schedule = load_schedule(c);
  const BudgetCost cost(cm.importance, cm.model.config(), cm.allocation.ranks, c.floor);
  const CorpusSplits s = load_splits(c);

  // Static configuration at the schedule's average parameter count.
  const auto steps = step_budgets(schedule, c.gen_len);
  double avg = 0.0;
  for (std::size_t b : steps) avg += static_cast<double>(cost.params(b));
  avg /= static_cast<double>(steps.size());
  std::size_t static_budget = cost.max_budget();
  double best = 1e300;
  for (std::size_t b = cost.min_budget(); b <= cost.max_budget(); ++b) {
    const double d = std::abs(static_cast<double>(cost.params(b)) - avg);
    if (d < best) best = d, static_budget = b;
  }

  const auto prompts = story_prompts(s.eval, 4, c.prompt_bytes);
  ThroughputOptions opt;
  opt.gen_len = c.gen_len;
  opt.runs = c.bench_runs;
  const auto rows = throughput_bench(dense, cm.model, cost, static_budget, schedule, prompts, opt);
  io::write_file_atomic(artifact(c, kThroughputFile), throughput_csv(rows));
  say(log, throughput_csv(rows));

  const auto calib = calib_set(c, s);
  std::optional<ActivationStats> stats;
  if (c.whitening) stats = collect_activation_stats(dense, calib);
  BaselineOptions bo;
  bo.floor = c.floor;
  bo.whitening = stats ? &*stats : nullptr;
  const SearchTimeResult st = search_time_bench(dense, calib, c.rate, bo, 3);
  nlohmann::json j = stamp(c);
  j["search_time"] = st;
  write_json(artifact(c, kSearchTimeFile), j);
  say(log, "search time: fisher " + fmt("%.3f", st.fisher_seconds) + " s, baseline " +
               fmt("%.3f", st.baseline_seconds) + " s, ratio " + fmt("%.1f", st.ratio));
  nlohmann::json out = {{"throughput", rows}, {"search_time", st}};
  return out;
}

nlohmann::json ablate(const PipelineConfig& c, const Log& log) {
  c.validate();
  const TinyLM dense = load_model(c);
  const CorpusSplits s = load_splits(c);
  const auto calib = calib_set(c, s);
  const ActivationStats stats = collect_activation_stats(dense, calib);
  TinyLM graded = dense;
  const auto g = artifact(c, kGradientsFile);
  if (std::filesystem::exists(g)) {
    load_gradients(graded, g);
  } else {
    backward(graded, calib);
  }
  const ImportanceMap fisher = compute_importance(graded, ImportanceMetric::kFisher);
  const ImportanceMap uniform = uniform_importance(dense.config());
  const auto search = reference_prompts(dense, s.calibration, c.search_prompts, c.prompt_bytes, c.gen_len);
  const auto held = reference_prompts(dense, s.eval, c.eval_prompts, c.prompt_bytes, c.gen_len);

  struct Row {
    const char* name;
    const ImportanceMap* imp;
    ScheduleForm form;
  };
  const Row rows[] = {{"whitening", &uniform, ScheduleForm::kStatic},
                      {"whitening+flra", &fisher, ScheduleForm::kStatic},
                      {"whitening+flra+plrd", &fisher, ScheduleForm::kDecreased}};
  nlohmann::json out = nlohmann::json::array();
  std::ostringstream table;
  table << "configuration          perplexity   rouge_l    rate%  schedule\n";
  for (const Row& row : rows) {
    const double arate = row.form == ScheduleForm::kStatic ? c.rate : c.materialize_rate;
    const RankAllocation alloc = allocate_for_rate(*row.imp, dense.config(), arate, c.floor);
    const CompressedLM cm = compress_model(dense, alloc, &stats, c.damping);
    const BudgetCost cost(*row.imp, dense.config(), alloc.ranks, c.floor);
    const Searched found = search_for(c, cm, cost, alloc.budget, search, row.form);
    const double ppl = schedule_perplexity(cm, cost, found.schedule, s.eval);
    const double rouge = mean_rouge(cm, cost, found.schedule, held);
    const double rate = 100.0 * overall_compression_rate(found.schedule, c.gen_len, cost);
    out.push_back({{"configuration", row.name},
                   {"perplexity", ppl},
                   {"rouge_l", rouge},
                   {"compression_rate", rate},
                   {"schedule", found.schedule}});
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %12.4f %9.3f %8.3f  ", row.name, ppl, rouge, rate);
    std::string sched;
    for (const auto& st : found.schedule.steps) {
      sched += (sched.empty() ? "" : " ") + std::to_string(st.from_token) + ":" + std::to_string(st.budget);
    }
    table << line << sched << '\n';
    say(log, std::string(line) + sched);
  }
  nlohmann::json j = stamp(c);
  j["rows"] = out;
  write_json(artifact(c, kAblationFile), j);
  io::write_file_atomic(artifact(c, kAblationTableFile), table.str());
  return {{"rows", out}};
}

}  // namespace pipeline
}  // namespace lowrank
