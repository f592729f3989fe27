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

#include "lowrank/compression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/parallel.hpp"

namespace lowrank {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> projection_shapes(const ModelConfig& config) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (std::size_t i = 0; i < config.num_projections(); ++i) {
    shapes.push_back(config.projection_shape(ProjectionId::from_flat(i).kind));
  }
  return shapes;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string_view metric_name(ImportanceMetric metric) {
  switch (metric) {
    case ImportanceMetric::kFisher:
      return "fisher";
    case ImportanceMetric::kWeightOnly:
      return "weight_only";
    case ImportanceMetric::kGradOnly:
      return "grad_only";
  }
  return "fisher";
}

ImportanceMetric parse_metric(std::string_view name) {
  if (name == "fisher") return ImportanceMetric::kFisher;
  if (name == "weight_only") return ImportanceMetric::kWeightOnly;
  if (name == "grad_only") return ImportanceMetric::kGradOnly;
  throw ValidationError("unknown importance metric '" + std::string(name) +
                        "' (expected fisher, weight_only or grad_only)");
}

ImportanceMap ImportanceMap::from_values(std::size_t n_layers, std::vector<double> alpha) {
  if (alpha.size() != n_layers * kProjectionsPerLayer) {
    throw ValidationError("importance map needs " + std::to_string(n_layers * kProjectionsPerLayer) +
                          " entries, got " + std::to_string(alpha.size()));
  }
  ImportanceMap m;
  m.n_layers = n_layers;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!std::isfinite(alpha[i]) || alpha[i] < 0.0) {
      throw ValidationError("importance of " + ProjectionId::from_flat(i).name() + " must be finite and >= 0");
    }
  }
  m.total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  m.alpha = std::move(alpha);
  return m;
}

void to_json(nlohmann::json& j, const ImportanceMap& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < m.alpha.size(); ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    entries.push_back({{"layer", id.layer}, {"proj", projection_name(id.kind)}, {"alpha", m.alpha[i]}});
  }
  j = nlohmann::json{{"n_layers", m.n_layers}, {"total", m.total}, {"alpha", entries}};
}

void from_json(const nlohmann::json& j, ImportanceMap& m) {
  const std::size_t n_layers = j.at("n_layers").get<std::size_t>();
  std::vector<double> alpha(n_layers * kProjectionsPerLayer, -1.0);
  for (const auto& e : j.at("alpha")) {
    const ProjectionId id{e.at("layer").get<std::size_t>(), parse_projection_kind(e.at("proj").get<std::string>())};
    if (id.layer >= n_layers) throw ValidationError("importance entry for layer out of range: " + id.name());
    alpha[id.flat()] = e.at("alpha").get<double>();
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] < 0.0) throw ValidationError("importance map is missing " + ProjectionId::from_flat(i).name());
  }
  m = ImportanceMap::from_values(n_layers, std::move(alpha));
}

double importance_score(ImportanceMetric metric, std::span<const double> w, std::span<const double> g) {
  if (metric != ImportanceMetric::kWeightOnly && g.size() != w.size()) {
    throw ValidationError("importance: gradient and weight sizes differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double v = 0.0;
    switch (metric) {
      case ImportanceMetric::kFisher:
        v = g[i] * w[i];
        break;
      case ImportanceMetric::kWeightOnly:
        v = w[i];
        break;
      case ImportanceMetric::kGradOnly:
        v = g[i];
        break;
    }
    s += v * v;
  }
  return s;
}

ImportanceMap compute_importance(const TinyLM& model, ImportanceMetric metric) {
  const ModelConfig& c = model.config();
  if (metric != ImportanceMetric::kWeightOnly && !model.grads()) {
    throw ValidationError(std::string("importance metric ") + std::string(metric_name(metric)) +
                          " needs gradients; run backward (calibrate) first");
  }
  std::vector<double> alpha(c.num_projections());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    const DenseMatrix& w = model.params().projection(id);
    std::span<const double> g;
    if (model.grads()) g = model.grads()->projection(id).values();
    alpha[i] = importance_score(metric, w.values(), g);
  }
  return ImportanceMap::from_values(c.n_layers, std::move(alpha));
}

std::vector<std::size_t> projection_caps(const ModelConfig& config) {
  std::vector<std::size_t> caps;
  for (const auto& [m, n] : projection_shapes(config)) caps.push_back(std::min(m, n));
  return caps;
}

std::size_t dense_projection_params(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& [m, n] : projection_shapes(config)) total += m * n;
  return total;
}

std::size_t factorized_params(const ModelConfig& config, std::span<const std::size_t> ranks) {
  const auto shapes = projection_shapes(config);
  if (ranks.size() != shapes.size()) throw ValidationError("rank vector does not match the projection count");
  std::size_t total = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) total += ranks[i] * (shapes[i].first + shapes[i].second);
  return total;
}

void to_json(nlohmann::json& j, const RankAllocation& a) {
  nlohmann::json ranks = nlohmann::json::array();
  for (std::size_t i = 0; i < a.ranks.size(); ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    ranks.push_back({{"layer", id.layer}, {"proj", projection_name(id.kind)}, {"rank", a.ranks[i]}});
  }
  j = nlohmann::json{{"budget", a.budget}, {"floor", a.floor}, {"ranks", ranks}};
}

RankAllocation allocation_from_json(const nlohmann::json& j, const ModelConfig& config) {
  RankAllocation a;
  a.n_layers = config.n_layers;
  a.budget = j.at("budget").get<std::size_t>();
  a.floor = j.at("floor").get<std::size_t>();
  a.caps = projection_caps(config);
  a.ranks.assign(config.num_projections(), 0);
  std::vector<bool> seen(a.ranks.size(), false);
  for (const auto& e : j.at("ranks")) {
    const ProjectionId id{e.at("layer").get<std::size_t>(), parse_projection_kind(e.at("proj").get<std::string>())};
    if (id.layer >= config.n_layers) throw ValidationError("allocation names a layer out of range: " + id.name());
    if (seen[id.flat()]) throw ValidationError("allocation lists " + id.name() + " twice");
    seen[id.flat()] = true;
    a.ranks[id.flat()] = e.at("rank").get<std::size_t>();
  }
  std::size_t sum = 0;
  for (std::size_t i = 0; i < a.ranks.size(); ++i) {
    const std::string name = ProjectionId::from_flat(i).name();
    if (!seen[i]) throw ValidationError("allocation is missing " + name);
    if (a.ranks[i] < a.floor || a.ranks[i] > a.caps[i]) {
      throw ValidationError("allocation rank of " + name + " outside [floor, cap]");
    }
    sum += a.ranks[i];
  }
  if (sum != a.budget) throw ValidationError("allocation ranks sum to " + std::to_string(sum) + ", not the budget");
  return a;
}

std::vector<std::size_t> proportional_ranks(std::span<const double> alpha, std::size_t budget, std::size_t floor,
                                            std::span<const std::size_t> caps) {
  const std::size_t n = alpha.size();
  if (n == 0) throw ValidationError("allocate_ranks: no projections");
  if (caps.size() != n) throw ValidationError("allocate_ranks: caps and importance sizes differ");
  if (floor == 0) throw ValidationError("allocate_ranks: floor must be >= 1");
  std::size_t cap_total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (caps[i] < floor) {
      throw ValidationError("allocate_ranks: cap " + std::to_string(caps[i]) + " of entry " + std::to_string(i) +
                            " is below the floor " + std::to_string(floor));
    }
    if (!std::isfinite(alpha[i]) || alpha[i] < 0.0) throw ValidationError("allocate_ranks: importance must be >= 0");
    cap_total += caps[i];
  }
  if (budget < floor * n) {
    throw ValidationError("allocate_ranks: budget " + std::to_string(budget) + " is below floor x count = " +
                          std::to_string(floor * n));
  }
  if (budget > cap_total) {
    throw ValidationError("allocate_ranks: budget " + std::to_string(budget) + " exceeds the sum of caps " +
                          std::to_string(cap_total));
  }

  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double share = total > 0.0 ? alpha[i] / total : 1.0 / static_cast<double>(n);
    target[i] = share * static_cast<double>(budget);
  }
  std::vector<std::size_t> r(n);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rounded = std::round(target[i]);
    r[i] = std::clamp(static_cast<std::size_t>(rounded), floor, caps[i]);
    sum += r[i];
  }
  while (sum < budget) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] >= caps[i]) continue;
      if (best == n || target[i] - static_cast<double>(r[i]) > target[best] - static_cast<double>(r[best])) best = i;
    }
    ++r[best];
    ++sum;
  }
  while (sum > budget) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] <= floor) continue;
      if (best == n || target[i] - static_cast<double>(r[i]) <= target[best] - static_cast<double>(r[best])) best = i;
    }
    --r[best];
    --sum;
  }
  return r;
}

RankAllocation allocate_ranks(const ImportanceMap& imp, std::size_t budget, std::size_t floor,
                              std::span<const std::size_t> caps) {
  RankAllocation a;
  a.n_layers = imp.n_layers;
  a.budget = budget;
  a.floor = floor;
  a.caps.assign(caps.begin(), caps.end());
  a.ranks = proportional_ranks(imp.alpha, budget, floor, caps);
  return a;
}

std::size_t budget_for_rate(const ImportanceMap& imp, const ModelConfig& config, double rate, std::size_t floor) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("compression rate must be in [0, 1)");
  if (imp.n_layers != config.n_layers) throw ValidationError("importance map does not match the model");
  const auto caps = projection_caps(config);
  const double limit = (1.0 - rate) * static_cast<double>(dense_projection_params(config));
  const std::size_t lo = floor * caps.size();
  const std::size_t hi = std::accumulate(caps.begin(), caps.end(), std::size_t{0});
  std::size_t best = 0;
  bool found = false;
  for (std::size_t b = lo; b <= hi; ++b) {
    const auto r = proportional_ranks(imp.alpha, b, floor, caps);
    if (static_cast<double>(factorized_params(config, r)) <= limit) {
      best = b;
      found = true;
    }
  }
  if (!found) {
    throw ValidationError("compression rate " + std::to_string(rate) +
                          " is unreachable even with every projection at the rank floor");
  }
  return best;
}

RankAllocation allocate_for_rate(const ImportanceMap& imp, const ModelConfig& config, double rate,
                                 std::size_t floor) {
  return allocate_ranks(imp, budget_for_rate(imp, config, rate, floor), floor, projection_caps(config));
}

ImportanceMap uniform_importance(const ModelConfig& config) {
  std::vector<double> alpha;
  for (const auto& [m, n] : projection_shapes(config)) {
    alpha.push_back(static_cast<double>(m * n) / static_cast<double>(m + n));
  }
  return ImportanceMap::from_values(config.n_layers, std::move(alpha));
}

std::string importance_report(const ImportanceMap& imp, const RankAllocation& alloc, const ModelConfig& config) {
  const auto shapes = projection_shapes(config);
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %14s %8s %6s %5s %9s\n", "projection", "alpha", "share%", "rank", "cap",
                "breakeven");
  out << line;
  for (std::size_t i = 0; i < imp.alpha.size(); ++i) {
    const auto [m, n] = shapes[i];
    const double breakeven = static_cast<double>(m * n) / static_cast<double>(m + n);
    const double share = imp.total > 0.0 ? 100.0 * imp.alpha[i] / imp.total : 0.0;
    const std::size_t r = i < alloc.ranks.size() ? alloc.ranks[i] : 0;
    std::snprintf(line, sizeof line, "%-18s %14.6e %8.3f %6zu %5zu %8.1f%s\n",
                  ProjectionId::from_flat(i).name().c_str(), imp.alpha[i], share, r, std::min(m, n), breakeven,
                  static_cast<double>(r) > breakeven ? " above" : "");
    out << line;
  }
  const std::size_t dense = dense_projection_params(config);
  const std::size_t used = factorized_params(config, alloc.ranks);
  std::snprintf(line, sizeof line, "budget %zu  params %zu / %zu dense  rate %.2f%%\n", alloc.budget, used, dense,
                100.0 * (1.0 - static_cast<double>(used) / static_cast<double>(dense)));
  out << line;
  return out.str();
}

Whitener make_whitener(const DenseMatrix& gram, double damping_ratio) {
  if (gram.rows() != gram.cols() || gram.rows() == 0) throw ValidationError("whitening: Gram matrix must be square");
  if (damping_ratio < 0.0) throw ValidationError("whitening: damping must be >= 0");
  const std::size_t d = gram.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += gram(i, i);
  const double damping = damping_ratio * trace / static_cast<double>(d);
  DenseMatrix g = gram;
  for (std::size_t i = 0; i < d; ++i) g(i, i) += damping;
  Whitener w;
  try {
    w.s = linalg::cholesky(g);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("whitening: ") + e.what() + " after damping " + std::to_string(damping) +
                         "; use a larger damping ratio");
  }
  w.s_inv = linalg::invert_lower_triangular(w.s);
  return w;
}

WhitenResult whiten(const DenseMatrix& w, const DenseMatrix& activations, double damping_ratio) {
  if (activations.rows() == 0) throw ValidationError("whitening: need at least one activation sample");
  if (activations.cols() != w.cols()) {
    throw ValidationError("whitening: activation dimension " + std::to_string(activations.cols()) +
                          " does not match weight input dimension " + std::to_string(w.cols()));
  }
  DenseMatrix gram = linalg::matmul_tn(activations, activations);
  for (double& v : gram.values()) v /= static_cast<double>(activations.rows());
  Whitener wh = make_whitener(gram, damping_ratio);
  return {linalg::matmul(w, wh.s), std::move(wh.s), std::move(wh.s_inv)};
}

FactorizedProjection::FactorizedProjection(DenseMatrix a, DenseMatrix b, std::vector<double> singular_values)
    : a_(std::move(a)), b_(std::move(b)), sigma_(std::move(singular_values)) {
  if (a_.cols() == 0 || a_.cols() != b_.rows() || sigma_.size() != a_.cols()) {
    throw ValidationError("factorized projection: factor shapes disagree");
  }
  active_ = a_.cols();
  a_t_ = linalg::transpose(a_);
}

void FactorizedProjection::set_active_rank(std::size_t k) {
  if (k < 1 || k > full_rank()) {
    throw ValidationError("active rank " + std::to_string(k) + " outside [1, " + std::to_string(full_rank()) + "]");
  }
  active_ = k;
}

void FactorizedProjection::apply(const DenseMatrix& x, DenseMatrix& y) const {
  const std::size_t t = x.rows();
  const std::size_t m = out_features();
  const std::size_t n = in_features();
  if (x.cols() != n) throw ValidationError("factorized projection: input width mismatch");
  DenseMatrix tmp(t, active_);
  linalg::gemm_nt(x.data(), t, n, b_.data(), active_, n, n, tmp.data(), active_, false);
  y = DenseMatrix(t, m);
  linalg::gemm_nn(tmp.data(), t, active_, a_t_.data(), m, m, active_, y.data(), m, false);
}

DenseMatrix FactorizedProjection::reconstruct() const {
  const std::size_t m = out_features();
  const std::size_t n = in_features();
  DenseMatrix w(m, n);
  linalg::gemm_nn(a_.data(), m, full_rank(), b_.data(), n, n, active_, w.data(), n, false);
  return w;
}

FactorizedProjection factorize(const DenseMatrix& w, std::size_t rank, const Whitener* whitener, std::string_view id) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  if (rank < 1 || rank > std::min(m, n)) {
    throw ValidationError("factorize " + std::string(id) + ": rank " + std::to_string(rank) + " outside [1, " +
                          std::to_string(std::min(m, n)) + "]");
  }
  if (whitener && whitener->s.rows() != n) {
    throw ValidationError("factorize " + std::string(id) + ": whitener dimension does not match input width");
  }
  const linalg::SvdResult s = linalg::svd(whitener ? linalg::matmul(w, whitener->s) : w, id);
  DenseMatrix a(m, rank);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < rank; ++k) a(i, k) = s.u(i, k) * s.singular_values[k];
  DenseMatrix b(rank, n);
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < n; ++j) b(k, j) = s.vt(k, j);
  if (whitener) b = linalg::matmul(b, whitener->s_inv);
  std::vector<double> sigma(s.singular_values.begin(), s.singular_values.begin() + static_cast<std::ptrdiff_t>(rank));
  return FactorizedProjection(std::move(a), std::move(b), std::move(sigma));
}

CompressedLM::CompressedLM(const ModelConfig& config, ParameterSet shared,
                           std::vector<FactorizedProjection> projections)
    : LanguageModel(config), shared_(std::move(shared)), projections_(std::move(projections)) {
  if (projections_.size() != config.num_projections()) {
    throw ValidationError("compressed model needs " + std::to_string(config.num_projections()) + " projections");
  }
  for (std::size_t i = 0; i < projections_.size(); ++i) {
    const auto [m, n] = config.projection_shape(ProjectionId::from_flat(i).kind);
    if (projections_[i].out_features() != m || projections_[i].in_features() != n) {
      throw ValidationError("compressed model: factor shapes of " + ProjectionId::from_flat(i).name() +
                            " do not match the config");
    }
  }
  for (auto& layer : shared_.layers)
    for (auto& p : layer.proj) p = DenseMatrix();
}

std::vector<std::size_t> CompressedLM::full_ranks() const {
  std::vector<std::size_t> r;
  for (const auto& p : projections_) r.push_back(p.full_rank());
  return r;
}

std::vector<std::size_t> CompressedLM::active_ranks() const {
  std::vector<std::size_t> r;
  for (const auto& p : projections_) r.push_back(p.active_rank());
  return r;
}

void CompressedLM::set_active_ranks(std::span<const std::size_t> ranks) {
  if (ranks.size() != projections_.size()) throw ValidationError("set_active_ranks: wrong number of ranks");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1 || ranks[i] > projections_[i].full_rank()) {
      throw ValidationError("rank " + std::to_string(ranks[i]) + " for " + ProjectionId::from_flat(i).name() +
                            " exceeds the materialized rank " + std::to_string(projections_[i].full_rank()));
    }
  }
  for (std::size_t i = 0; i < ranks.size(); ++i) projections_[i].set_active_rank(ranks[i]);
}

std::size_t CompressedLM::active_projection_params() const {
  std::size_t total = 0;
  for (const auto& p : projections_) total += p.active_params();
  return total;
}

void CompressedLM::project(ProjectionId id, const DenseMatrix& x, DenseMatrix& y) const {
  projections_[id.flat()].apply(x, y);
}

ActivationStats collect_activation_stats(const LanguageModel& model, std::span<const std::vector<Token>> calib) {
  if (calib.empty()) throw ValidationError("activation statistics need at least one calibration sequence");
  ActivationStats stats(model.config());
  for (const auto& seq : calib) model.forward(seq, nullptr, &stats);
  return stats;
}

namespace {

Whitener whitener_for(const ActivationStats& stats, ProjectionId id, double damping_ratio) {
  const std::size_t n = stats.samples(id);
  if (n == 0) throw ValidationError("whitening: no activation samples for " + id.name());
  DenseMatrix gram = stats.gram(id);
  for (double& v : gram.values()) v /= static_cast<double>(n);
  return make_whitener(gram, damping_ratio);
}

}  // namespace

CompressedLM compress_model(const TinyLM& model, const RankAllocation& alloc, const ActivationStats* whitening,
                            double damping_ratio) {
  const ModelConfig& c = model.config();
  if (alloc.ranks.size() != c.num_projections()) {
    for (std::size_t i = alloc.ranks.size(); i < c.num_projections(); ++i) {
      throw ValidationError("allocation has no rank for " + ProjectionId::from_flat(i).name());
    }
    throw ValidationError("allocation covers more projections than the model has");
  }
  std::vector<FactorizedProjection> projections(c.num_projections());
  // Whitening Gram matrices are shared by projections reading the same input.
  parallel_for(projections.size(), [&](std::size_t i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    std::optional<Whitener> wh;
    if (whitening) wh = whitener_for(*whitening, id, damping_ratio);
    projections[i] = factorize(model.params().projection(id), alloc.ranks[i], wh ? &*wh : nullptr, id.name());
  });
  return CompressedLM(c, model.params(), std::move(projections));
}

TensorFile compressed_file(const CompressedLM& model, const nlohmann::json& extra) {
  TensorFile file;
  if (extra.is_object()) file.header = extra;
  file.header["kind"] = "factorized";
  file.header["config"] = model.config();
  model.shared().for_each([&](const std::string& name, const DenseMatrix& m) {
    if (!m.empty()) file.tensors.push_back({name, m});
  });
  for (std::size_t i = 0; i < model.config().num_projections(); ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    const FactorizedProjection& p = model.projection(id);
    const std::string base = "layers." + std::to_string(id.layer) + "." + std::string(projection_name(id.kind));
    file.tensors.push_back({base + ".a", p.a()});
    file.tensors.push_back({base + ".b", p.b()});
    file.tensors.push_back({base + ".sigma", DenseMatrix(1, p.full_rank(), p.singular_values())});
  }
  return file;
}

CompressedLM compressed_from_file(const TensorFile& file) {
  if (file.header.value("kind", "") != "factorized") throw FormatError("not a factorized model checkpoint");
  if (!file.header.contains("config")) throw FormatError("checkpoint header has no config block");
  const ModelConfig c = file.header.at("config").get<ModelConfig>();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  ParameterSet shared = ParameterSet::zeros(c);
  shared.for_each([&](const std::string& name, DenseMatrix& m) {
    if (name.ends_with("_proj")) return;
    const DenseMatrix& src = file.require(name);
    if (src.rows() != m.rows() || src.cols() != m.cols()) throw FormatError("tensor " + name + " has the wrong shape");
    m = src;
  });
  std::vector<FactorizedProjection> projections;
  for (std::size_t i = 0; i < c.num_projections(); ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    const std::string base = "layers." + std::to_string(id.layer) + "." + std::string(projection_name(id.kind));
    const DenseMatrix& sigma = file.require(base + ".sigma");
    try {
      projections.emplace_back(file.require(base + ".a"), file.require(base + ".b"),
                               std::vector<double>(sigma.values().begin(), sigma.values().end()));
    } catch (const FormatError&) {
      throw;
    } catch (const ValidationError& e) {
      throw FormatError(base + ": " + e.what());
    }
  }
  try {
    return CompressedLM(c, std::move(shared), std::move(projections));
  } catch (const FormatError&) {
    throw;
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
}

void save_compressed(const CompressedLM& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  write_tensor_file(path, compressed_file(model, extra));
}

CompressedLM load_compressed(const std::filesystem::path& path) { return compressed_from_file(read_tensor_file(path)); }

std::vector<std::size_t> cheapest_admissible(const std::vector<std::vector<double>>& deltas, double threshold) {
  std::vector<std::size_t> choice;
  for (const auto& row : deltas) {
    if (row.empty()) throw ValidationError("baseline: empty candidate grid");
    std::size_t pick = row.size() - 1;
    for (std::size_t g = 0; g + 1 < row.size(); ++g) {
      if (row[g] <= threshold) {
        pick = g;
        break;
      }
    }
    choice.push_back(pick);
  }
  return choice;
}

BaselineResult baseline_allocate_perplexity(const TinyLM& model, std::span<const std::vector<Token>> calib,
                                            double target_rate, const BaselineOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig& c = model.config();
  if (!(target_rate >= 0.0 && target_rate < 1.0)) throw ValidationError("compression rate must be in [0, 1)");
  if (calib.empty()) throw ValidationError("baseline allocator needs calibration sequences");
  if (options.grid.empty()) throw ValidationError("baseline: empty candidate grid");
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    if (!(options.grid[g] > 0.0 && options.grid[g] <= 1.0) || (g > 0 && options.grid[g] <= options.grid[g - 1])) {
      throw ValidationError("baseline: grid fractions must be increasing within (0, 1]");
    }
  }
  if (options.grid.back() != 1.0) throw ValidationError("baseline: grid must end at full rank (1.0)");

  const auto caps = projection_caps(c);
  const std::size_t np = caps.size();
  BaselineResult result;
  result.grid_ranks.assign(np, {});
  for (std::size_t i = 0; i < np; ++i) {
    for (double f : options.grid) {
      const auto r = static_cast<std::size_t>(std::round(f * static_cast<double>(caps[i])));
      result.grid_ranks[i].push_back(std::clamp(r, options.floor, caps[i]));
    }
  }

  auto finish = [&](std::vector<std::size_t> ranks) {
    result.allocation.n_layers = c.n_layers;
    result.allocation.floor = options.floor;
    result.allocation.caps = caps;
    result.allocation.budget = std::accumulate(ranks.begin(), ranks.end(), std::size_t{0});
    result.allocation.ranks = std::move(ranks);
    result.seconds = seconds_since(start);
    return result;
  };

  if (target_rate == 0.0) return finish(caps);

  result.base_perplexity = perplexity_of(model, calib);
  result.perplexity.assign(np, std::vector<double>(options.grid.size(), result.base_perplexity));
  TinyLM probe = model;
  for (std::size_t i = 0; i < np; ++i) {
    const ProjectionId id = ProjectionId::from_flat(i);
    const DenseMatrix& w = model.params().projection(id);
    std::optional<Whitener> wh;
    if (options.whitening) wh = whitener_for(*options.whitening, id, kDefaultDampingRatio);
    FactorizedProjection f = factorize(w, caps[i], wh ? &*wh : nullptr, id.name());
    for (std::size_t g = 0; g + 1 < options.grid.size(); ++g) {
      f.set_active_rank(result.grid_ranks[i][g]);
      probe.mutable_params().projection(id) = f.reconstruct();
      result.perplexity[i][g] = perplexity_of(probe, calib);
    }
    probe.mutable_params().projection(id) = w;
  }

  std::vector<std::vector<double>> deltas(np);
  std::vector<double> thresholds = {0.0};
  for (std::size_t i = 0; i < np; ++i) {
    for (double p : result.perplexity[i]) {
      deltas[i].push_back(p - result.base_perplexity);
      thresholds.push_back(p - result.base_perplexity);
    }
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double limit = (1.0 - target_rate) * static_cast<double>(dense_projection_params(c));
  for (double tau : thresholds) {
    const auto pick = cheapest_admissible(deltas, tau);
    std::vector<std::size_t> ranks(np);
    for (std::size_t i = 0; i < np; ++i) ranks[i] = result.grid_ranks[i][pick[i]];
    if (static_cast<double>(factorized_params(c, ranks)) <= limit) {
      result.threshold = tau;
      return finish(std::move(ranks));
    }
  }
  throw ValidationError("baseline: compression rate " + std::to_string(target_rate) +
                        " is unreachable with the smallest grid ranks");
}

FisherAllocationResult fisher_allocate(TinyLM& model, std::span<const std::vector<Token>> calib, double target_rate,
                                       ImportanceMetric metric, std::size_t floor) {
  const auto start = std::chrono::steady_clock::now();
  if (calib.empty()) throw ValidationError("fisher allocation needs calibration sequences");
  FisherAllocationResult r;
  if (metric != ImportanceMetric::kWeightOnly) r.calibration_loss = backward(model, calib);
  r.importance = compute_importance(model, metric);
  r.allocation = allocate_for_rate(r.importance, model.config(), target_rate, floor);
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace lowrank
