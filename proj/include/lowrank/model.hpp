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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/matrix.hpp"

namespace lowrank {

using Token = std::uint32_t;

inline constexpr Token kBosToken = 256;
inline constexpr Token kEosToken = 257;
inline constexpr std::size_t kByteVocabSize = 258;

namespace tokenizer {
/// Raw bytes, optionally preceded by BOS.
std::vector<Token> encode(std::string_view text, bool add_bos = true);
/// Inverse of encode; special tokens are dropped.
std::string decode(std::span<const Token> tokens);
}  // namespace tokenizer

enum class ProjectionKind : std::uint8_t {
  kQ = 0,
  kK,
  kV,
  kO,
  kGate,
  kUp,
  kDown,
};

inline constexpr std::size_t kProjectionsPerLayer = 7;
inline constexpr std::array<ProjectionKind, kProjectionsPerLayer> kProjectionKinds = {
    ProjectionKind::kQ,    ProjectionKind::kK,  ProjectionKind::kV,   ProjectionKind::kO,
    ProjectionKind::kGate, ProjectionKind::kUp, ProjectionKind::kDown};

std::string_view projection_name(ProjectionKind kind);
/// Accepts "q_proj", ..., "down_proj"; throws ValidationError otherwise.
ProjectionKind parse_projection_kind(std::string_view name);

struct ProjectionId {
  std::size_t layer = 0;
  ProjectionKind kind = ProjectionKind::kQ;

  /// Position in the canonical (layer-major, kind-minor) ordering.
  std::size_t flat() const { return layer * kProjectionsPerLayer + static_cast<std::size_t>(kind); }
  static ProjectionId from_flat(std::size_t index) {
    return {index / kProjectionsPerLayer, kProjectionKinds[index % kProjectionsPerLayer]};
  }
  std::string name() const;

  auto operator<=>(const ProjectionId&) const = default;
};

struct ModelConfig {
  std::size_t vocab_size = kByteVocabSize;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t max_seq_len = 256;
  std::uint64_t seed = 1234;
  double init_scale = 1.0;  // multiplies the default fan-in init
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t num_projections() const { return n_layers * kProjectionsPerLayer; }
  /// (out_features, in_features) of a projection weight.
  std::pair<std::size_t, std::size_t> projection_shape(ProjectionKind kind) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LayerParams {
  DenseMatrix attn_norm;  // 1 x d_model
  std::array<DenseMatrix, kProjectionsPerLayer> proj;  // each out x in
  DenseMatrix ffn_norm;   // 1 x d_model

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ParameterSet {
  DenseMatrix embedding;  // vocab x d_model
  std::vector<LayerParams> layers;
  DenseMatrix final_norm;  // 1 x d_model
  DenseMatrix lm_head;     // vocab x d_model

  static ParameterSet zeros(const ModelConfig& config);

  DenseMatrix& projection(ProjectionId id) { return layers[id.layer].proj[static_cast<std::size_t>(id.kind)]; }
  const DenseMatrix& projection(ProjectionId id) const {
    return layers[id.layer].proj[static_cast<std::size_t>(id.kind)];
  }

  /// Visits every tensor with its canonical name, in checkpoint order.
  template <typename F>
  void for_each(F&& f) {
    f(std::string("tok_embedding"), embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layers." + std::to_string(l) + ".";
      f(prefix + "attn_norm", layers[l].attn_norm);
      for (ProjectionKind kind : kProjectionKinds) {
        f(prefix + std::string(projection_name(kind)), layers[l].proj[static_cast<std::size_t>(kind)]);
      }
      f(prefix + "ffn_norm", layers[l].ffn_norm);
    }
    f(std::string("final_norm"), final_norm);
    f(std::string("lm_head"), lm_head);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ParameterSet*>(this)->for_each(
        [&](const std::string& name, DenseMatrix& m) { f(name, static_cast<const DenseMatrix&>(m)); });
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// Post-rotary keys and values for every layer, filled front to back.
struct KvCache {
  explicit KvCache(const ModelConfig& config);
  void clear() { length = 0; }

  std::vector<DenseMatrix> keys;    // per layer: max_seq_len x d_model
  std::vector<DenseMatrix> values;  // per layer: max_seq_len x d_model
  std::size_t length = 0;
};

/// Which projection inputs share a captured activation stream.
enum class ActivationSlot : std::uint8_t { kAttnInput = 0, kAttnOutput, kFfnInput, kFfnHidden };
ActivationSlot activation_slot(ProjectionKind kind);

/// Accumulates X^T X of every projection input stream during forward passes.
class ActivationStats {
 public:
  explicit ActivationStats(const ModelConfig& config);

  void add(std::size_t layer, ActivationSlot slot, const DenseMatrix& x);
  const DenseMatrix& gram(ProjectionId id) const;
  std::size_t samples(ProjectionId id) const;

 private:
  static constexpr std::size_t kSlots = 4;
  std::vector<DenseMatrix> grams_;
  std::vector<std::size_t> counts_;
};

/// Anything that can run the decoder stack. Subclasses supply the seven
/// projection kinds; embeddings, norms, rotary attention and the output head
/// are shared.
class LanguageModel {
 public:
  explicit LanguageModel(const ModelConfig& config);
  virtual ~LanguageModel() = default;

  const ModelConfig& config() const { return config_; }
  std::span<const double> rope_cos() const { return rope_cos_; }
  std::span<const double> rope_sin() const { return rope_sin_; }

  /// Logits (tokens.size() x vocab) for `tokens` appended after whatever the
  /// cache already holds. Without a cache the tokens start at position 0.
  DenseMatrix forward(std::span<const Token> tokens, KvCache* cache = nullptr,
                      ActivationStats* stats = nullptr) const;

 protected:
  virtual void project(ProjectionId id, const DenseMatrix& x, DenseMatrix& y) const = 0;
  virtual const ParameterSet& shared_params() const = 0;

  ModelConfig config_;
  std::vector<double> rope_cos_;  // max_seq_len x head_dim/2
  std::vector<double> rope_sin_;
};

class TinyLM final : public LanguageModel {
 public:
  TinyLM(const ModelConfig& config, ParameterSet params);

  /// Seeded random initialization; identical seeds give identical bits.
  static TinyLM initialize(const ModelConfig& config);

  const ParameterSet& params() const { return params_; }
  ParameterSet& mutable_params() { return params_; }
  const std::optional<ParameterSet>& grads() const { return grads_; }
  std::optional<ParameterSet>& mutable_grads() { return grads_; }

 protected:
  void project(ProjectionId id, const DenseMatrix& x, DenseMatrix& y) const override;
  const ParameterSet& shared_params() const override { return params_; }

 private:
  ParameterSet params_;
  std::optional<ParameterSet> grads_;
};

/// Mean next-token cross-entropy over every position of every sequence
/// (each sequence predicts tokens[1..]). Uses the training graph.
double evaluate_loss(const TinyLM& model, std::span<const std::vector<Token>> batch);

/// Overwrites model.grads with d(mean next-token cross-entropy)/d(param) for
/// every tensor and returns the loss.
double backward(TinyLM& model, std::span<const std::vector<Token>> batch);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace lowrank
