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
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

struct NllSum {
  double total = 0.0;  // summed negative log-likelihood (nats)
  std::size_t count = 0;
};

/// Next-token NLL of every sequence (each predicts tokens[1..]).
NllSum sequence_nll(const LanguageModel& model, std::span<const std::vector<Token>> sequences);
double perplexity_of(const LanguageModel& model, std::span<const std::vector<Token>> sequences);

/// Non-overlapping windows of seq_len tokens: BOS followed by seq_len - 1
/// corpus bytes.
std::vector<std::vector<Token>> eval_windows(std::string_view corpus, std::size_t seq_len);

inline constexpr std::size_t kEvalSeqLen = 256;

/// exp(mean next-token NLL) over eval_windows(corpus, seq_len).
double perplexity(const LanguageModel& model, std::string_view corpus, std::size_t seq_len = kEvalSeqLen);

struct RougeScore {
  double precision = 0.0;  // percentages
  double recall = 0.0;
  double f = 0.0;
};

inline constexpr double kRougeBeta = 1.2;

/// Lowercased whitespace tokens.
std::vector<std::string> rouge_tokens(std::string_view text);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// Sentence-level ROUGE-L with recall-weighted F (beta = 1.2).
RougeScore rouge_l(std::string_view hypothesis, std::string_view reference);

struct ThroughputRow {
  std::string configuration;  // "dense", "static", "progressive"
  double tokens_per_second = 0.0;
  double speedup = 0.0;  // vs dense
  double compression_rate = 0.0;
  std::vector<double> runs;  // tokens/sec per timed run
};

struct EvalReport {
  double perplexity = 0.0;
  RougeScore rouge_l;
  double compression_rate = 0.0;  // percent
  double throughput = 0.0;        // tokens/sec
  std::vector<std::pair<std::string, double>> wall_clock;  // phase, seconds

  void validate() const;
  std::string table() const;
};

void to_json(nlohmann::json& j, const RougeScore& r);
void to_json(nlohmann::json& j, const EvalReport& r);
void to_json(nlohmann::json& j, const ThroughputRow& r);

/// One CSV row per configuration.
std::string throughput_csv(std::span<const ThroughputRow> rows);

/// Median of the values (mean of the middle pair for even counts).
double median(std::vector<double> values);

}  // namespace lowrank
