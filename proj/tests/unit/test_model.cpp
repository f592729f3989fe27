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
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "lowrank/checkpoint.hpp"
#include "lowrank/error.hpp"
#include "lowrank/io.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/model.hpp"
#include "lowrank/train.hpp"
#include "unit/test_util.hpp"

using namespace lowrank;
using lowrank::testing::random_tokens;
using lowrank::testing::small_config;

namespace {

std::string synthetic_corpus(std::size_t bytes) {
  static const char* words[] = {"the ", "cat ", "sat ", "on ", "a ", "mat ", "and ", "dog ", "ran ", ". "};
  std::string s;
  std::mt19937_64 rng(3);
  while (s.size() < bytes) s += words[rng() % 10];
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lowrank_test_" + name);
}

}  // namespace

TEST_CASE("tokenizer round trip") {
  const auto t = tokenizer::encode("hi!");
  CHECK(t == std::vector<Token>{kBosToken, 'h', 'i', '!'});
  CHECK(tokenizer::decode(t) == "hi!");
}

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config();
  c.d_model = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("single token forward has the right shape and finite logits") {
  const TinyLM model = TinyLM::initialize(small_config());
  const Token tok[] = {kBosToken};
  const DenseMatrix logits = model.forward(tok);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == kByteVocabSize);
  CHECK(logits.all_finite());
  double sum = 0.0;
  for (double p : softmax(logits.row(0))) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("forward rejects bad tokens and overflow") {
  const TinyLM model = TinyLM::initialize(small_config());
  const Token bad[] = {kBosToken, 999};
  CHECK_THROWS_AS(model.forward(bad), ValidationError);
  const auto too_long = random_tokens(65, 1);
  CHECK_THROWS_AS(model.forward(too_long), ValidationError);
}

TEST_CASE("cached incremental forward matches the full forward") {
  const TinyLM model = TinyLM::initialize(small_config());
  const auto tokens = random_tokens(16, 2);
  const DenseMatrix full = model.forward(tokens);
  KvCache cache(model.config());
  // Prefill 5 tokens, then one at a time.
  DenseMatrix first = model.forward(std::span(tokens).first(5), &cache);
  double worst = 0.0;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < full.cols(); ++c) worst = std::max(worst, std::abs(first(t, c) - full(t, c)));
  for (std::size_t t = 5; t < tokens.size(); ++t) {
    const DenseMatrix step = model.forward(std::span(tokens).subspan(t, 1), &cache);
    for (std::size_t c = 0; c < full.cols(); ++c) worst = std::max(worst, std::abs(step(0, c) - full(t, c)));
  }
  CHECK(worst < 1e-5);
  CHECK(cache.length == 16);
}

TEST_CASE("training graph loss agrees with the inference forward") {
  const TinyLM model = TinyLM::initialize(small_config());
  const auto seq = random_tokens(20, 4);
  const DenseMatrix logits = model.forward(std::span(seq).first(19));
  double nll = 0.0;
  for (std::size_t t = 0; t < 19; ++t) nll -= std::log(softmax(logits.row(t))[seq[t + 1]]);
  const std::vector<std::vector<Token>> batch = {seq};
  CHECK(evaluate_loss(model, batch) == doctest::Approx(nll / 19.0).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences on every projection kind") {
  ModelConfig c = small_config();
  TinyLM model = TinyLM::initialize(c);
  std::mt19937_64 rng(123);
  for (int b = 0; b < 2; ++b) {
    std::vector<std::vector<Token>> batch = {random_tokens(12, 50 + b), random_tokens(9, 60 + b)};
    backward(model, batch);
    const ParameterSet grads = *model.grads();
    double worst = 0.0;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      for (ProjectionKind kind : kProjectionKinds) {
        const ProjectionId id{l, kind};
        DenseMatrix& w = model.mutable_params().projection(id);
        for (int s = 0; s < 2; ++s) {
          const std::size_t i = rng() % w.size();
          const double orig = w.data()[i];
          const double h = 1e-4;
          w.data()[i] = orig + h;
          const double up = evaluate_loss(model, batch);
          w.data()[i] = orig - h;
          const double down = evaluate_loss(model, batch);
          w.data()[i] = orig;
          const double fd = (up - down) / (2 * h);
          const double an = grads.projection(id).data()[i];
          const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
          worst = std::max(worst, rel);
        }
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("non-projection gradients match finite differences") {
  TinyLM model = TinyLM::initialize(small_config());
  std::vector<std::vector<Token>> batch = {random_tokens(10, 7, 40)};
  backward(model, batch);
  const ParameterSet grads = *model.grads();
  auto check = [&](DenseMatrix& w, const DenseMatrix& g, std::size_t i) {
    const double orig = w.data()[i];
    w.data()[i] = orig + 1e-4;
    const double up = evaluate_loss(model, batch);
    w.data()[i] = orig - 1e-4;
    const double down = evaluate_loss(model, batch);
    w.data()[i] = orig;
    const double fd = (up - down) / 2e-4;
    CHECK(std::abs(fd - g.data()[i]) <= 1e-4 * std::max({std::abs(fd), 1e-6}));
  };
  ParameterSet& p = model.mutable_params();
  check(p.layers[0].attn_norm, grads.layers[0].attn_norm, 3);
  check(p.layers[1].ffn_norm, grads.layers[1].ffn_norm, 5);
  check(p.final_norm, grads.final_norm, 7);
  check(p.lm_head, grads.lm_head, 12 * 32 + 4);
  check(p.embedding, grads.embedding, batch[0][2] * 32 + 1);
}

TEST_CASE("unused embedding rows get exactly zero gradient; backward is deterministic") {
  TinyLM model = TinyLM::initialize(small_config());
  std::vector<std::vector<Token>> batch = {random_tokens(12, 8, 100)};
  backward(model, batch);
  const ParameterSet g1 = *model.grads();
  for (std::size_t c = 0; c < 32; ++c) CHECK(g1.embedding(200, c) == 0.0);
  backward(model, batch);
  CHECK(*model.grads() == g1);
}

TEST_CASE("backward validates its batch") {
  TinyLM model = TinyLM::initialize(small_config());
  std::vector<std::vector<Token>> empty;
  CHECK_THROWS_AS(backward(model, empty), ValidationError);
  std::vector<std::vector<Token>> short_seq = {{kBosToken}};
  CHECK_THROWS_AS(backward(model, short_seq), ValidationError);
}

TEST_CASE("training lowers the loss and is deterministic") {
  ModelConfig c = small_config();
  TrainOptions o;
  o.steps = 60;
  o.batch_size = 2;
  o.seq_len = 32;
  const std::string corpus = synthetic_corpus(kMinCorpusBytes + 10);
  const TrainResult a = train(c, o, corpus);
  CHECK(a.losses.back() < a.losses.front());
  const TrainResult b = train(c, o, corpus);
  CHECK(a.model.params() == b.model.params());

  o.steps = 0;
  const TrainResult z = train(c, o, corpus);
  CHECK(z.model.params() == TinyLM::initialize(c).params());

  CHECK_THROWS_AS(train(c, o, corpus.substr(0, 1000)), ValidationError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const TinyLM model = TinyLM::initialize(small_config());
  const auto path = temp_path("roundtrip.tlmc");
  save_checkpoint(model, path, {{"note", "x"}});
  const TinyLM back = load_checkpoint(path);
  CHECK(back.params() == model.params());
  CHECK(back.config() == model.config());
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption is detected") {
  const TinyLM model = TinyLM::initialize(small_config());
  std::string bytes = encode_tensor_file(checkpoint_file(model));

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensor_file(bad_magic), FormatError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_tensor_file(bad_version), FormatError);

  CHECK_THROWS_AS(decode_tensor_file(std::string_view(bytes).substr(0, bytes.size() - 3)), FormatError);

  TensorFile missing = checkpoint_file(model);
  std::erase_if(missing.tensors, [](const TensorRecord& r) { return r.name == "layers.1.o_proj"; });
  try {
    model_from_file(decode_tensor_file(encode_tensor_file(missing)));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("layers.1.o_proj") != std::string::npos);
  }

  TensorFile wrong_shape = checkpoint_file(model);
  wrong_shape.tensors[1].value = DenseMatrix(1, 3);
  CHECK_THROWS_AS(model_from_file(wrong_shape), FormatError);
}

TEST_CASE("gradient artifacts round trip") {
  TinyLM model = TinyLM::initialize(small_config());
  std::vector<std::vector<Token>> batch = {random_tokens(12, 8)};
  backward(model, batch);
  const auto path = temp_path("grads.tlmc");
  save_gradients(model, path);
  TinyLM other = TinyLM::initialize(small_config());
  load_gradients(other, path);
  CHECK(*other.grads() == *model.grads());
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
