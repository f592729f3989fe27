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

#include "lowrank/train.hpp"

#include <cmath>
#include <random>
#include <string>

#include "lowrank/error.hpp"

namespace lowrank {

void TrainOptions::validate(const ModelConfig& config) const {
  if (batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
  if (seq_len < 2) throw ValidationError("train: seq_len must be >= 2");
  if (seq_len > config.max_seq_len) {
    throw ValidationError("train: seq_len " + std::to_string(seq_len) + " exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
  }
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
}

void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = nlohmann::json{{"steps", o.steps},       {"batch_size", o.batch_size},
                     {"seq_len", o.seq_len},   {"learning_rate", o.learning_rate},
                     {"beta1", o.beta1},       {"beta2", o.beta2},
                     {"epsilon", o.epsilon},   {"data_seed", o.data_seed}};
}

void from_json(const nlohmann::json& j, TrainOptions& o) {
  TrainOptions d;
  o.steps = j.value("steps", d.steps);
  o.batch_size = j.value("batch_size", d.batch_size);
  o.seq_len = j.value("seq_len", d.seq_len);
  o.learning_rate = j.value("learning_rate", d.learning_rate);
  o.beta1 = j.value("beta1", d.beta1);
  o.beta2 = j.value("beta2", d.beta2);
  o.epsilon = j.value("epsilon", d.epsilon);
  o.data_seed = j.value("data_seed", d.data_seed);
}

std::vector<Token> window_at(std::string_view text, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length - 1 > text.size()) {
    throw ValidationError("window_at: window exceeds text");
  }
  std::vector<Token> seq;
  seq.reserve(length);
  seq.push_back(kBosToken);
  for (std::size_t i = 0; i + 1 < length; ++i) seq.push_back(static_cast<unsigned char>(text[offset + i]));
  return seq;
}

TrainResult train(const ModelConfig& config, const TrainOptions& options, std::string_view corpus,
                  const TrainProgress& progress) {
  config.validate();
  options.validate(config);
  if (corpus.size() < kMinCorpusBytes) {
    throw ValidationError("train: corpus has " + std::to_string(corpus.size()) + " bytes, need at least " +
                          std::to_string(kMinCorpusBytes));
  }

  TrainResult result{TinyLM::initialize(config), {}};
  TinyLM& model = result.model;
  ParameterSet m1 = ParameterSet::zeros(config);
  ParameterSet m2 = ParameterSet::zeros(config);
  std::mt19937_64 rng(options.data_seed);
  // Each sequence is BOS + (seq_len) bytes, i.e. seq_len inputs.
  const std::size_t span = corpus.size() - options.seq_len;

  for (std::size_t step = 0; step < options.steps; ++step) {
    std::vector<std::vector<Token>> batch;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      batch.push_back(window_at(corpus, rng() % span, options.seq_len + 1));
    }
    const double loss = backward(model, batch);
    if (!std::isfinite(loss)) {
      throw NumericalError("train: loss diverged at step " + std::to_string(step));
    }
    result.losses.push_back(loss);
    if (progress) progress(step, loss);

    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    std::vector<DenseMatrix*> ms1, ms2, gs;
    m1.for_each([&](const std::string&, DenseMatrix& m) { ms1.push_back(&m); });
    m2.for_each([&](const std::string&, DenseMatrix& m) { ms2.push_back(&m); });
    model.mutable_grads()->for_each([&](const std::string&, DenseMatrix& m) { gs.push_back(&m); });
    std::size_t idx = 0;
    model.mutable_params().for_each([&](const std::string&, DenseMatrix& w) {
      double* wp = w.data();
      double* a = ms1[idx]->data();
      double* v = ms2[idx]->data();
      const double* g = gs[idx]->data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        a[i] = options.beta1 * a[i] + (1.0 - options.beta1) * g[i];
        v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
        wp[i] -= options.learning_rate * (a[i] / c1) / (std::sqrt(v[i] / c2) + options.epsilon);
      }
      ++idx;
    });
  }
  model.mutable_grads().reset();
  return result;
}

}  // namespace lowrank
