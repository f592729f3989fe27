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

#include "lowrank/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lowrank/error.hpp"
#include "lowrank/parallel.hpp"

namespace lowrank {

NllSum sequence_nll(const LanguageModel& model, std::span<const std::vector<Token>> sequences) {
  if (sequences.empty()) throw ValidationError("nll: no sequences");
  std::vector<double> totals(sequences.size(), 0.0);
  parallel_for(sequences.size(), [&](std::size_t s) {
    const auto& seq = sequences[s];
    if (seq.size() < 2) throw ValidationError("nll: every sequence needs at least two tokens");
    const DenseMatrix logits = model.forward(std::span(seq).first(seq.size() - 1));
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      const auto row = logits.row(t);
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - mx);
      total += mx + std::log(sum) - row[seq[t + 1]];
    }
    totals[s] = total;
  });
  NllSum r;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    r.total += totals[s];
    r.count += sequences[s].size() - 1;
  }
  return r;
}

double perplexity_of(const LanguageModel& model, std::span<const std::vector<Token>> sequences) {
  const NllSum nll = sequence_nll(model, sequences);
  return std::exp(nll.total / static_cast<double>(nll.count));
}

std::vector<std::vector<Token>> eval_windows(std::string_view corpus, std::size_t seq_len) {
  if (seq_len < 2) throw ValidationError("perplexity: seq_len must be >= 2");
  const std::size_t stride = seq_len - 1;
  std::vector<std::vector<Token>> windows;
  for (std::size_t off = 0; off + stride <= corpus.size(); off += stride) {
    std::vector<Token> w;
    w.reserve(seq_len);
    w.push_back(kBosToken);
    for (std::size_t i = 0; i < stride; ++i) w.push_back(static_cast<unsigned char>(corpus[off + i]));
    windows.push_back(std::move(w));
  }
  if (windows.empty()) {
    throw ValidationError("perplexity: corpus of " + std::to_string(corpus.size()) +
                          " bytes is shorter than one window of " + std::to_string(seq_len) + " tokens");
  }
  return windows;
}

double perplexity(const LanguageModel& model, std::string_view corpus, std::size_t seq_len) {
  if (seq_len > model.config().max_seq_len) throw ValidationError("perplexity: seq_len exceeds max_seq_len");
  return perplexity_of(model, eval_windows(corpus, seq_len));
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::string_view hypothesis, std::string_view reference) {
  const auto ref = rouge_tokens(reference);
  if (ref.empty()) throw ValidationError("rouge_l: reference is empty");
  const auto hyp = rouge_tokens(hypothesis);
  if (hyp.empty()) return {};
  const double lcs = static_cast<double>(lcs_length(hyp, ref));
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  RougeScore s;
  s.precision = 100.0 * p;
  s.recall = 100.0 * r;
  if (lcs > 0.0) {
    const double b2 = kRougeBeta * kRougeBeta;
    s.f = 100.0 * (1.0 + b2) * p * r / (r + b2 * p);
  }
  return s;
}

void EvalReport::validate() const {
  auto pct = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 100.0)) throw ValidationError(std::string("report: ") + what + " outside [0, 100]");
  };
  if (!(std::isfinite(perplexity) && perplexity >= 1.0)) throw ValidationError("report: perplexity must be >= 1");
  pct(rouge_l.precision, "rouge_l precision");
  pct(rouge_l.recall, "rouge_l recall");
  pct(rouge_l.f, "rouge_l f");
  if (!(compression_rate >= -100.0 && compression_rate <= 100.0)) {
    throw ValidationError("report: compression rate outside [-100, 100]");
  }
  if (!(throughput >= 0.0)) throw ValidationError("report: negative throughput");
  for (const auto& [phase, s] : wall_clock) {
    if (!(s > 0.0)) throw ValidationError("report: non-positive time for phase " + phase);
  }
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char line[128];
  auto row = [&](const std::string& k, const std::string& v) {
    std::snprintf(line, sizeof line, "%-24s %14s\n", k.c_str(), v.c_str());
    out << line;
  };
  auto num = [](double v, int prec) {
    char b[64];
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return std::string(b);
  };
  row("perplexity", num(perplexity, 4));
  row("rouge_l.precision", num(rouge_l.precision, 2));
  row("rouge_l.recall", num(rouge_l.recall, 2));
  row("rouge_l.f", num(rouge_l.f, 2));
  row("compression_rate%", num(compression_rate, 2));
  row("throughput_tok_s", num(throughput, 1));
  for (const auto& [phase, s] : wall_clock) row("time." + phase + "_s", num(s, 3));
  return out.str();
}

void to_json(nlohmann::json& j, const RougeScore& r) {
  j = nlohmann::json{{"precision", r.precision}, {"recall", r.recall}, {"f", r.f}};
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json wc = nlohmann::json::object();
  for (const auto& [phase, s] : r.wall_clock) wc[phase] = s;
  j = nlohmann::json{{"perplexity", r.perplexity},
                     {"rouge_l", r.rouge_l},
                     {"compression_rate", r.compression_rate},
                     {"throughput", r.throughput},
                     {"wall_clock", wc}};
}

void to_json(nlohmann::json& j, const ThroughputRow& r) {
  j = nlohmann::json{{"configuration", r.configuration},
                     {"tokens_per_second", r.tokens_per_second},
                     {"speedup", r.speedup},
                     {"compression_rate", r.compression_rate},
                     {"runs", r.runs}};
}

std::string throughput_csv(std::span<const ThroughputRow> rows) {
  std::string out = "configuration,tokens_per_second,speedup,compression_rate\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.3f,%.4f,%.4f\n", r.configuration.c_str(), r.tokens_per_second, r.speedup,
                  r.compression_rate);
    out += line;
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace lowrank
