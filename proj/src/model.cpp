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

#include "lowrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lowrank/error.hpp"
#include "lowrank/linalg.hpp"
#include "model_internal.hpp"

namespace lowrank {

namespace tokenizer {

std::vector<Token> encode(std::string_view text, bool add_bos) {
  std::vector<Token> out;
  out.reserve(text.size() + 1);
  if (add_bos) out.push_back(kBosToken);
  for (char c : text) out.push_back(static_cast<unsigned char>(c));
  return out;
}

std::string decode(std::span<const Token> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t < 256) out.push_back(static_cast<char>(t));
  }
  return out;
}

}  // namespace tokenizer

std::string_view projection_name(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kQ: return "q_proj";
    case ProjectionKind::kK: return "k_proj";
    case ProjectionKind::kV: return "v_proj";
    case ProjectionKind::kO: return "o_proj";
    case ProjectionKind::kGate: return "gate_proj";
    case ProjectionKind::kUp: return "up_proj";
    case ProjectionKind::kDown: return "down_proj";
  }
  return "unknown";
}

ProjectionKind parse_projection_kind(std::string_view name) {
  for (ProjectionKind kind : kProjectionKinds) {
    if (projection_name(kind) == name) return kind;
  }
  throw ValidationError("unknown projection kind '" + std::string(name) + "'");
}

std::string ProjectionId::name() const {
  return "layers." + std::to_string(layer) + "." + std::string(projection_name(kind));
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("model config: " + msg);
  };
  require(vocab_size >= kByteVocabSize, "vocab_size must cover 256 bytes + BOS/EOS");
  require(d_model >= 1 && n_layers >= 1 && n_heads >= 1 && d_ff >= 1 && max_seq_len >= 1,
          "all counts must be >= 1");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(head_dim() % 2 == 0, "head_dim must be even for rotary embeddings");
  require(init_scale > 0.0 && rope_theta > 0.0 && norm_eps > 0.0, "scales must be positive");
}

std::pair<std::size_t, std::size_t> ModelConfig::projection_shape(ProjectionKind kind) const {
  switch (kind) {
    case ProjectionKind::kGate:
    case ProjectionKind::kUp: return {d_ff, d_model};
    case ProjectionKind::kDown: return {d_model, d_ff};
    default: return {d_model, d_model};
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
                     {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
                     {"seed", c.seed},             {"init_scale", c.init_scale},
                     {"rope_theta", c.rope_theta}, {"norm_eps", c.norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.seed = j.value("seed", d.seed);
  c.init_scale = j.value("init_scale", d.init_scale);
  c.rope_theta = j.value("rope_theta", d.rope_theta);
  c.norm_eps = j.value("norm_eps", d.norm_eps);
}

ParameterSet ParameterSet::zeros(const ModelConfig& config) {
  ParameterSet p;
  p.embedding = DenseMatrix(config.vocab_size, config.d_model);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.attn_norm = DenseMatrix(1, config.d_model);
    layer.ffn_norm = DenseMatrix(1, config.d_model);
    for (ProjectionKind kind : kProjectionKinds) {
      const auto [out, in] = config.projection_shape(kind);
      layer.proj[static_cast<std::size_t>(kind)] = DenseMatrix(out, in);
    }
  }
  p.final_norm = DenseMatrix(1, config.d_model);
  p.lm_head = DenseMatrix(config.vocab_size, config.d_model);
  return p;
}

KvCache::KvCache(const ModelConfig& config) {
  keys.assign(config.n_layers, DenseMatrix(config.max_seq_len, config.d_model));
  values.assign(config.n_layers, DenseMatrix(config.max_seq_len, config.d_model));
}

ActivationSlot activation_slot(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kO: return ActivationSlot::kAttnOutput;
    case ProjectionKind::kGate:
    case ProjectionKind::kUp: return ActivationSlot::kFfnInput;
    case ProjectionKind::kDown: return ActivationSlot::kFfnHidden;
    default: return ActivationSlot::kAttnInput;
  }
}

ActivationStats::ActivationStats(const ModelConfig& config) {
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    grams_.emplace_back(config.d_model, config.d_model);
    grams_.emplace_back(config.d_model, config.d_model);
    grams_.emplace_back(config.d_model, config.d_model);
    grams_.emplace_back(config.d_ff, config.d_ff);
  }
  counts_.assign(grams_.size(), 0);
}

void ActivationStats::add(std::size_t layer, ActivationSlot slot, const DenseMatrix& x) {
  const std::size_t idx = layer * kSlots + static_cast<std::size_t>(slot);
  DenseMatrix& g = grams_.at(idx);
  if (x.cols() != g.cols()) throw ValidationError("ActivationStats: feature dimension mismatch");
  linalg::gemm_tn(x.data(), x.cols(), x.cols(), x.data(), x.cols(), x.cols(), x.rows(), g.data(),
                  g.cols(), true);
  counts_[idx] += x.rows();
}

const DenseMatrix& ActivationStats::gram(ProjectionId id) const {
  return grams_.at(id.layer * kSlots + static_cast<std::size_t>(activation_slot(id.kind)));
}

std::size_t ActivationStats::samples(ProjectionId id) const {
  return counts_.at(id.layer * kSlots + static_cast<std::size_t>(activation_slot(id.kind)));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace detail {

void rmsnorm_rows(const DenseMatrix& x, const DenseMatrix& gain, double eps, DenseMatrix& out,
                  std::vector<double>* inv_rms) {
  const std::size_t d = x.cols();
  out = DenseMatrix(x.rows(), d);
  if (inv_rms) inv_rms->resize(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const double* xr = x.data() + t * d;
    double ms = 0.0;
    for (std::size_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
    const double r = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    if (inv_rms) (*inv_rms)[t] = r;
    double* o = out.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) o[i] = xr[i] * r * gain.data()[i];
  }
}

void apply_rope(DenseMatrix& x, std::size_t start_pos, std::size_t n_heads,
                std::span<const double> cos_table, std::span<const double> sin_table, bool inverse) {
  const std::size_t hd = x.cols() / n_heads;
  const std::size_t half = hd / 2;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const double* c = cos_table.data() + (start_pos + t) * half;
    const double* s = sin_table.data() + (start_pos + t) * half;
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* v = x.data() + t * x.cols() + h * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const double x0 = v[2 * i];
        const double x1 = v[2 * i + 1];
        const double sn = inverse ? -s[i] : s[i];
        v[2 * i] = x0 * c[i] - x1 * sn;
        v[2 * i + 1] = x0 * sn + x1 * c[i];
      }
    }
  }
}

double silu(double g) { return g / (1.0 + std::exp(-g)); }

}  // namespace detail

LanguageModel::LanguageModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t half = config_.head_dim() / 2;
  rope_cos_.resize(config_.max_seq_len * half);
  rope_sin_.resize(config_.max_seq_len * half);
  for (std::size_t p = 0; p < config_.max_seq_len; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq =
          std::pow(config_.rope_theta, -2.0 * static_cast<double>(i) / static_cast<double>(config_.head_dim()));
      const double angle = static_cast<double>(p) * freq;
      rope_cos_[p * half + i] = std::cos(angle);
      rope_sin_[p * half + i] = std::sin(angle);
    }
  }
}

DenseMatrix LanguageModel::forward(std::span<const Token> tokens, KvCache* cache,
                                   ActivationStats* stats) const {
  const ParameterSet& p = shared_params();
  const std::size_t d = config_.d_model;
  const std::size_t n = tokens.size();
  const std::size_t hd = config_.head_dim();
  std::optional<KvCache> local;
  if (!cache) {
    local.emplace(config_);
    cache = &*local;
  }
  const std::size_t start = cache->length;
  if (n == 0) throw ValidationError("forward: empty token sequence");
  if (start + n > config_.max_seq_len) {
    throw ValidationError("forward: sequence of " + std::to_string(start + n) +
                          " tokens exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  }

  DenseMatrix x(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    if (tokens[t] >= config_.vocab_size) {
      throw ValidationError("forward: token id " + std::to_string(tokens[t]) + " out of range");
    }
    std::copy_n(p.embedding.data() + tokens[t] * d, d, x.data() + t * d);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  DenseMatrix a, q, k, v, att(n, d), tmp, g, u;
  std::vector<double> scores(config_.max_seq_len);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const LayerParams& lp = p.layers[l];
    detail::rmsnorm_rows(x, lp.attn_norm, config_.norm_eps, a, nullptr);
    if (stats) stats->add(l, ActivationSlot::kAttnInput, a);
    project({l, ProjectionKind::kQ}, a, q);
    project({l, ProjectionKind::kK}, a, k);
    project({l, ProjectionKind::kV}, a, v);
    detail::apply_rope(q, start, config_.n_heads, rope_cos_, rope_sin_, false);
    detail::apply_rope(k, start, config_.n_heads, rope_cos_, rope_sin_, false);
    DenseMatrix& kc = cache->keys[l];
    DenseMatrix& vc = cache->values[l];
    std::copy_n(k.data(), n * d, kc.data() + start * d);
    std::copy_n(v.data(), n * d, vc.data() + start * d);

    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t ctx = start + t + 1;
      for (std::size_t h = 0; h < config_.n_heads; ++h) {
        const double* qv = q.data() + t * d + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ctx; ++j) {
          const double* kv = kc.data() + j * d + h * hd;
          double s = 0.0;
          for (std::size_t i = 0; i < hd; ++i) s += qv[i] * kv[i];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < ctx; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        double* o = att.data() + t * d + h * hd;
        std::fill(o, o + hd, 0.0);
        for (std::size_t j = 0; j < ctx; ++j) {
          const double w = scores[j] / sum;
          const double* vv = vc.data() + j * d + h * hd;
          for (std::size_t i = 0; i < hd; ++i) o[i] += w * vv[i];
        }
      }
    }
    if (stats) stats->add(l, ActivationSlot::kAttnOutput, att);
    project({l, ProjectionKind::kO}, att, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];

    detail::rmsnorm_rows(x, lp.ffn_norm, config_.norm_eps, a, nullptr);
    if (stats) stats->add(l, ActivationSlot::kFfnInput, a);
    project({l, ProjectionKind::kGate}, a, g);
    project({l, ProjectionKind::kUp}, a, u);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = detail::silu(g.data()[i]) * u.data()[i];
    if (stats) stats->add(l, ActivationSlot::kFfnHidden, g);
    project({l, ProjectionKind::kDown}, g, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];
  }
  cache->length = start + n;

  detail::rmsnorm_rows(x, p.final_norm, config_.norm_eps, a, nullptr);
  DenseMatrix logits(n, config_.vocab_size);
  linalg::gemm_nt(a.data(), n, d, p.lm_head.data(), config_.vocab_size, d, d, logits.data(),
                  config_.vocab_size, false);
  return logits;
}

TinyLM::TinyLM(const ModelConfig& config, ParameterSet params)
    : LanguageModel(config), params_(std::move(params)) {
  // Shape check against the config, tensor by tensor.
  ParameterSet expect = ParameterSet::zeros(config_);
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
  expect.for_each([&](const std::string& name, const DenseMatrix& m) {
    shapes.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  if (params_.layers.size() != config_.n_layers) {
    throw ValidationError("TinyLM: expected " + std::to_string(config_.n_layers) + " layers, got " +
                          std::to_string(params_.layers.size()));
  }
  params_.for_each([&](const std::string& name, const DenseMatrix& m) {
    const auto& [ename, eshape] = shapes[i++];
    if (m.rows() != eshape.first || m.cols() != eshape.second) {
      throw ValidationError("TinyLM: tensor " + name + " has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + std::to_string(eshape.first) +
                            "x" + std::to_string(eshape.second));
    }
  });
}

namespace {

// Box-Muller on top of mt19937_64 so the stream is identical on every
// standard library.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(rng_() >> 11) * kScale;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng_() >> 11) * kScale;
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586;
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void fill_normal(DenseMatrix& m, double stddev, NormalSampler& sample) {
  for (double& v : m.values()) v = stddev * sample();
}

}  // namespace

TinyLM TinyLM::initialize(const ModelConfig& config) {
  config.validate();
  ParameterSet p = ParameterSet::zeros(config);
  NormalSampler sample(config.seed);
  const double s = config.init_scale;
  fill_normal(p.embedding, 0.5 * s, sample);
  const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  for (auto& layer : p.layers) {
    std::fill(layer.attn_norm.values().begin(), layer.attn_norm.values().end(), 1.0);
    std::fill(layer.ffn_norm.values().begin(), layer.ffn_norm.values().end(), 1.0);
    for (ProjectionKind kind : kProjectionKinds) {
      DenseMatrix& w = layer.proj[static_cast<std::size_t>(kind)];
      double stddev = s / std::sqrt(static_cast<double>(w.cols()));
      if (kind == ProjectionKind::kO || kind == ProjectionKind::kDown) stddev *= residual;
      fill_normal(w, stddev, sample);
    }
  }
  std::fill(p.final_norm.values().begin(), p.final_norm.values().end(), 1.0);
  fill_normal(p.lm_head, s / std::sqrt(static_cast<double>(config.d_model)), sample);
  return TinyLM(config, std::move(p));
}

void TinyLM::project(ProjectionId id, const DenseMatrix& x, DenseMatrix& y) const {
  const DenseMatrix& w = params_.projection(id);
  y = DenseMatrix(x.rows(), w.rows());
  linalg::gemm_nt(x.data(), x.rows(), x.cols(), w.data(), w.rows(), w.cols(), w.cols(), y.data(),
                  y.cols(), false);
}

}  // namespace lowrank
