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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"
#include "lowrank/compression.hpp"
#include "lowrank/decoding.hpp"
#include "lowrank/train.hpp"

namespace lowrank {

/// Everything one run needs. JSON keys match the field names.
struct PipelineConfig {
  std::filesystem::path corpus = "data/corpus.txt";
  std::filesystem::path out_dir = "run";
  ModelConfig model;
  TrainOptions train;
  ImportanceMetric metric = ImportanceMetric::kFisher;
  double rate = 0.2;              // target overall compression rate
  double materialize_rate = 0.0;  // factorized ranks for progressive decoding
  std::size_t floor = kDefaultRankFloor;
  bool whitening = true;
  double damping = kDefaultDampingRatio;
  ScheduleForm form = ScheduleForm::kDecreased;
  ScorerKind scorer = ScorerKind::kRougeL;
  std::size_t calib_windows = 16;
  std::size_t calib_len = 128;
  std::size_t search_prompts = 16;
  std::size_t eval_prompts = 16;
  std::size_t prompt_bytes = 32;
  std::size_t gen_len = 64;
  std::size_t bench_runs = 5;

  void validate() const;
  /// FNV-1a of the canonical JSON, out_dir excluded.
  std::string hash() const;
  /// Rate the projection factors are materialized at: `rate` for the static
  /// form, `materialize_rate` otherwise.
  double allocation_rate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, PipelineConfig& c);

namespace pipeline {

inline constexpr char kModelFile[] = "model.tlmc";
inline constexpr char kTrainLogFile[] = "train_log.csv";
inline constexpr char kGradientsFile[] = "gradients.tlmc";
inline constexpr char kImportanceFile[] = "importance.json";
inline constexpr char kAllocationFile[] = "allocation.json";
inline constexpr char kReportFile[] = "importance_report.txt";
inline constexpr char kCompressedFile[] = "compressed.tlmc";
inline constexpr char kScheduleFile[] = "schedule.json";
inline constexpr char kFormsFile[] = "forms.json";
inline constexpr char kGenerationsFile[] = "generations.json";
inline constexpr char kTraceFile[] = "trace.csv";
inline constexpr char kEvalFile[] = "eval.json";
inline constexpr char kEvalTableFile[] = "eval.txt";
inline constexpr char kThroughputFile[] = "throughput.csv";
inline constexpr char kSearchTimeFile[] = "search_time.json";
inline constexpr char kAblationFile[] = "ablation.json";
inline constexpr char kAblationTableFile[] = "ablation.txt";

std::filesystem::path artifact(const PipelineConfig& c, const char* name);

using Log = std::function<void(const std::string&)>;

/// Each stage reads its inputs from out_dir, writes its artifacts atomically
/// and returns a short JSON summary.
nlohmann::json train(const PipelineConfig& c, const Log& log = {});
nlohmann::json calibrate(const PipelineConfig& c, const Log& log = {});
nlohmann::json allocate(const PipelineConfig& c, const Log& log = {});
nlohmann::json compress(const PipelineConfig& c, const Log& log = {});
nlohmann::json schedule_search(const PipelineConfig& c, const Log& log = {});
/// With `prompt` set, generates for that text only.
nlohmann::json generate(const PipelineConfig& c, const std::optional<std::string>& prompt = {},
                        const Log& log = {});
nlohmann::json eval(const PipelineConfig& c, const Log& log = {});
nlohmann::json bench(const PipelineConfig& c, const Log& log = {});
/// Uniform + static, Fisher + static, Fisher + progressive; whitening on.
nlohmann::json ablate(const PipelineConfig& c, const Log& log = {});

/// Calibration prompts (first search_prompts stories of the split) with the
/// dense model's greedy continuations as references.
std::vector<CalibPrompt> reference_prompts(const LanguageModel& dense, std::string_view text, std::size_t count,
                                           std::size_t prompt_bytes, std::size_t gen_len);

/// exp of the mean NLL over eval windows, each decoded teacher-forced from BOS
/// under `schedule`.
double schedule_perplexity(const CompressedLM& model, const BudgetCost& cost, const DecodeSchedule& schedule,
                           std::string_view corpus, std::size_t seq_len = 256);

}  // namespace pipeline
}  // namespace lowrank
