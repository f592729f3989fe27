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

#include "doctest.h"
#include "lowrank/compression.hpp"
#include "lowrank/corpus.hpp"
#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/train.hpp"
#include "unit/test_util.hpp"

using namespace lowrank;
using lowrank::testing::random_tokens;
using lowrank::testing::small_config;

namespace {

double log_softmax_at(std::span<const double> row, std::size_t idx) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  return row[idx] - mx - std::log(s);
}

}  // namespace

TEST_CASE("uniform logits give perplexity equal to the vocabulary") {
  TinyLM model = TinyLM::initialize(small_config());
  model.mutable_params().lm_head = DenseMatrix(kByteVocabSize, 32, 0.0);
  const std::vector<std::vector<Token>> seqs = {random_tokens(20, 1), random_tokens(9, 2)};
  CHECK(perplexity_of(model, seqs) == doctest::Approx(static_cast<double>(kByteVocabSize)).epsilon(1e-12));
  CHECK(sequence_nll(model, seqs).count == 27);
}

TEST_CASE("sequence nll matches a direct log-softmax sum") {
  const TinyLM model = TinyLM::initialize(small_config());
  const std::vector<std::vector<Token>> seqs = {random_tokens(17, 3), random_tokens(30, 4), random_tokens(2, 5)};
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : seqs) {
    const DenseMatrix logits = model.forward(s);
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      total -= log_softmax_at(logits.row(t), s[t + 1]);
      ++count;
    }
  }
  const NllSum got = sequence_nll(model, seqs);
  CHECK(got.count == count);
  CHECK(got.total == doctest::Approx(total).epsilon(1e-12));
  CHECK(perplexity_of(model, seqs) == doctest::Approx(std::exp(total / static_cast<double>(count))).epsilon(1e-12));
  const std::vector<std::vector<Token>> too_short = {{kBosToken}};
  CHECK_THROWS_AS(perplexity_of(model, too_short), ValidationError);
}

TEST_CASE("a model trained on one repeated byte approaches perplexity 1") {
  const std::string corpus(70000, 'a');
  TrainOptions opt;
  opt.steps = 150;
  opt.batch_size = 2;
  opt.seq_len = 32;
  opt.learning_rate = 1e-2;
  const TrainResult r = train(small_config(), opt, corpus);
  CHECK(perplexity(r.model, std::string_view(corpus).substr(0, 2000), 32) < 1.05);
}

TEST_CASE("eval windows") {
  const std::string text = "abcdefghij";
  const auto w = eval_windows(text, 4);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == std::vector<Token>{kBosToken, 'a', 'b', 'c'});
  CHECK(w[2] == std::vector<Token>{kBosToken, 'g', 'h', 'i'});
  CHECK_THROWS_AS(eval_windows("ab", 4), ValidationError);
  CHECK_THROWS_AS(eval_windows(text, 1), ValidationError);
}

TEST_CASE("rouge-l examples") {
  const RougeScore s = rouge_l("police killed the gunman", "police kill the gunman");
  CHECK(s.precision == doctest::Approx(75.0));
  CHECK(s.recall == doctest::Approx(75.0));
  CHECK(s.f == doctest::Approx(75.0));

  const RougeScore same = rouge_l("The cat sat", "the  cat\nsat");
  CHECK(same.f == doctest::Approx(100.0));
  CHECK(rouge_l("a b c", "x y z").f == 0.0);
  CHECK(rouge_l("", "x y z").f == 0.0);
  CHECK_THROWS_AS(rouge_l("a", "  "), ValidationError);

  // LCS 2, |hyp| 4, |ref| 2: P 50, R 100.
  const RougeScore r = rouge_l("a x b y", "a b");
  CHECK(r.precision == doctest::Approx(50.0));
  CHECK(r.recall == doctest::Approx(100.0));
  const double b2 = kRougeBeta * kRougeBeta;
  CHECK(r.f == doctest::Approx(100.0 * (1 + b2) * 0.5 * 1.0 / (1.0 + b2 * 0.5)));
}

TEST_CASE("lcs against brute force subsequence enumeration") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> vocab = {"a", "b", "c"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a(rng() % 8), b(rng() % 8);
    for (auto& x : a) x = vocab[rng() % 3];
    for (auto& x : b) x = vocab[rng() % 3];
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
      std::vector<std::string> sub;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (mask & (1u << i)) sub.push_back(a[i]);
      std::size_t j = 0;
      for (std::size_t i = 0; i < b.size() && j < sub.size(); ++i)
        if (b[i] == sub[j]) ++j;
      if (j == sub.size()) best = std::max(best, sub.size());
    }
    CHECK(lcs_length(a, b) == best);
  }
}

TEST_CASE("appending a reference word never lowers recall") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> vocab = {"the", "dog", "ran", "far", "away"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string hyp, ref;
    for (int i = 0; i < 6; ++i) hyp += vocab[rng() % 5] + " ";
    for (int i = 0; i < 6; ++i) ref += vocab[rng() % 5] + " ";
    const auto refs = rouge_tokens(ref);
    const std::string word = refs[rng() % refs.size()];
    CHECK(rouge_l(hyp + word, ref).recall >= rouge_l(hyp, ref).recall);
  }
}

TEST_CASE("full-rank factorized model keeps the dense perplexity") {
  const ModelConfig c = small_config();
  const TinyLM dense = TinyLM::initialize(c);
  const ImportanceMap imp = compute_importance(dense, ImportanceMetric::kWeightOnly);
  const RankAllocation full = allocate_ranks(imp, 14 * 32, 1, projection_caps(c));
  const CompressedLM lossless = compress_model(dense, full);
  const std::vector<std::vector<Token>> seqs = {random_tokens(40, 11), random_tokens(40, 12)};
  const double pd = perplexity_of(dense, seqs);
  CHECK(std::abs(perplexity_of(lossless, seqs) - pd) <= 0.005 * pd);
}

TEST_CASE("median and report validation") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), ValidationError);

  EvalReport r;
  r.perplexity = 4.2;
  r.rouge_l = {40, 50, 45};
  r.compression_rate = 20;
  r.throughput = 100;
  CHECK_NOTHROW(r.validate());
  CHECK(r.table().find("perplexity") != std::string::npos);
  r.perplexity = 0.5;
  CHECK_THROWS_AS(r.validate(), ValidationError);
  r.perplexity = 4.2;
  r.rouge_l.f = 101;
  CHECK_THROWS_AS(r.validate(), ValidationError);

  const ThroughputRow row{"dense", 100.0, 1.0, 0.0, {99.0, 100.0, 101.0}};
  const std::string csv = throughput_csv(std::span(&row, 1));
  CHECK(csv.rfind("configuration,", 0) == 0);
  CHECK(csv.find("dense,") != std::string::npos);
}

TEST_CASE("corpus split keeps whole stories in order") {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "story " + std::to_string(i) + " text.\n\n";
  const auto stories = split_stories(text);
  CHECK(stories.size() == 20);
  CHECK(stories[3] == "story 3 text.");
  const CorpusSplits s = split_corpus(text);
  CHECK(split_stories(s.train).size() == 16);
  CHECK(split_stories(s.calibration).size() == 2);
  CHECK(split_stories(s.eval).size() == 2);
  CHECK(s.train.rfind("story 0", 0) == 0);
  CHECK(s.calibration.rfind("story 16", 0) == 0);
  CHECK(s.eval.rfind("story 18", 0) == 0);
  CHECK(s.train.find("story 16") == std::string::npos);
}

TEST_CASE("calibration windows and prompts") {
  std::string text;
  for (int i = 0; i < 50; ++i) text += "once upon a time number " + std::to_string(i) + ".\n\n";
  const auto w = calibration_windows(text, 4, 16);
  REQUIRE(w.size() == 4);
  for (const auto& x : w) {
    CHECK(x.size() == 16);
    CHECK(x[0] == kBosToken);
  }
  CHECK(w[0] == window_at(text, 0, 16));
  const auto p = story_prompts(text, 3, 9);
  REQUIRE(p.size() == 3);
  CHECK(tokenizer::decode(p[1]) == "once upon");
  CHECK(p[1][0] == kBosToken);
}
