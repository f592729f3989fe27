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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/checkpoint.hpp"
#include "lowrank/matrix.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

enum class ImportanceMetric { kFisher, kWeightOnly, kGradOnly };

std::string_view metric_name(ImportanceMetric metric);
/// "fisher", "weight_only" or "grad_only".
ImportanceMetric parse_metric(std::string_view name);

/// One importance value per projection, indexed by ProjectionId::flat().
struct ImportanceMap {
  std::size_t n_layers = 0;
  std::vector<double> alpha;
  double total = 0.0;

  /// Validates (non-negative, finite) and computes the total.
  static ImportanceMap from_values(std::size_t n_layers, std::vector<double> alpha);

  double at(ProjectionId id) const { return alpha.at(id.flat()); }
  friend bool operator==(const ImportanceMap&, const ImportanceMap&) = default;
};

void to_json(nlohmann::json& j, const ImportanceMap& m);
void from_json(const nlohmann::json& j, ImportanceMap& m);

/// Per-entry score of one weight tensor: sum (g*w)^2, sum w^2 or sum g^2.
double importance_score(ImportanceMetric metric, std::span<const double> w, std::span<const double> g);

/// Needs model.grads() for fisher and grad_only.
ImportanceMap compute_importance(const TinyLM& model, ImportanceMetric metric);

/// min(m, n) for every projection, in flat order.
std::vector<std::size_t> projection_caps(const ModelConfig& config);
/// m * n summed over the seven projection kinds of every layer.
std::size_t dense_projection_params(const ModelConfig& config);
/// sum r * (m + n) over projections.
std::size_t factorized_params(const ModelConfig& config, std::span<const std::size_t> ranks);

inline constexpr std::size_t kDefaultRankFloor = 1;

struct RankAllocation {
  std::size_t n_layers = 0;
  std::size_t budget = 0;
  std::size_t floor = kDefaultRankFloor;
  std::vector<std::size_t> ranks;  // flat order
  std::vector<std::size_t> caps;   // flat order

  std::size_t rank(ProjectionId id) const { return ranks.at(id.flat()); }
  friend bool operator==(const RankAllocation&, const RankAllocation&) = default;
};

void to_json(nlohmann::json& j, const RankAllocation& a);
/// Caps are not stored; they come from the model shapes.
RankAllocation allocation_from_json(const nlohmann::json& j, const ModelConfig& config);

/// Proportional allocation with exact budget. Raw ranks round(alpha/S * B)
/// (half away from zero) are clamped to [floor, cap]; the residual is then
/// moved one rank at a time. A positive residual goes to the entry with the
/// largest alpha/S*B - r among those below cap (ties: lower index first); a
/// negative one comes from the entry with the smallest such remainder among
/// those above floor (ties: higher index first). When every alpha is zero the
/// shares are equal.
std::vector<std::size_t> proportional_ranks(std::span<const double> alpha, std::size_t budget,
                                            std::size_t floor, std::span<const std::size_t> caps);

RankAllocation allocate_ranks(const ImportanceMap& imp, std::size_t budget, std::size_t floor,
                              std::span<const std::size_t> caps);

/// Largest budget whose allocation keeps factorized parameters at or below
/// (1 - rate) of the dense projection parameters.
std::size_t budget_for_rate(const ImportanceMap& imp, const ModelConfig& config, double rate,
                            std::size_t floor = kDefaultRankFloor);
RankAllocation allocate_for_rate(const ImportanceMap& imp, const ModelConfig& config, double rate,
                                 std::size_t floor = kDefaultRankFloor);

/// Weights proportional to the breakeven rank m*n/(m+n), so every projection
/// keeps about the same fraction of its own parameters.
ImportanceMap uniform_importance(const ModelConfig& config);

/// Formatted per-projection table of alpha, share, rank and breakeven flag.
std::string importance_report(const ImportanceMap& imp, const RankAllocation& alloc,
                              const ModelConfig& config);

struct Whitener {
  DenseMatrix s;      // lower triangular, s * s^T = gram + damping * I
  DenseMatrix s_inv;
};

inline constexpr double kDefaultDampingRatio = 1e-4;

/// gram is the mean outer product X^T X / N. damping = ratio * trace / dim.
Whitener make_whitener(const DenseMatrix& gram, double damping_ratio = kDefaultDampingRatio);

struct WhitenResult {
  DenseMatrix w_scaled;
  DenseMatrix s;
  DenseMatrix s_inv;
};

/// activations: N x in samples of the projection input.
WhitenResult whiten(const DenseMatrix& w, const DenseMatrix& activations,
                    double damping_ratio = kDefaultDampingRatio);

/// W ~= a * b with a = U_r diag(sigma_r) (m x r) and b = V_r^T (r x n). Only the
/// leading active_rank columns of a and rows of b take part in apply().
class FactorizedProjection {
 public:
  FactorizedProjection() = default;
  FactorizedProjection(DenseMatrix a, DenseMatrix b, std::vector<double> singular_values);

  std::size_t out_features() const { return a_.rows(); }
  std::size_t in_features() const { return b_.cols(); }
  std::size_t full_rank() const { return a_.cols(); }
  std::size_t active_rank() const { return active_; }
  void set_active_rank(std::size_t k);

  const DenseMatrix& a() const { return a_; }
  const DenseMatrix& b() const { return b_; }
  const std::vector<double>& singular_values() const { return sigma_; }

  /// y = x * (a_k b_k)^T for x of shape T x in.
  void apply(const DenseMatrix& x, DenseMatrix& y) const;
  /// a_k * b_k as a dense out x in matrix.
  DenseMatrix reconstruct() const;
  std::size_t active_params() const { return active_ * (out_features() + in_features()); }

 private:
  DenseMatrix a_;
  DenseMatrix a_t_;  // a transposed, for the decode-time product
  DenseMatrix b_;
  std::vector<double> sigma_;
  std::size_t active_ = 0;
};

/// Best rank-r factorization of w, or of w * s when a whitener is given (then
/// b carries the s_inv factor).
FactorizedProjection factorize(const DenseMatrix& w, std::size_t rank, const Whitener* whitener = nullptr,
                               std::string_view id = "projection");

class CompressedLM final : public LanguageModel {
 public:
  CompressedLM(const ModelConfig& config, ParameterSet shared, std::vector<FactorizedProjection> projections);

  const FactorizedProjection& projection(ProjectionId id) const { return projections_.at(id.flat()); }
  FactorizedProjection& mutable_projection(ProjectionId id) { return projections_.at(id.flat()); }
  const ParameterSet& shared() const { return shared_; }

  std::vector<std::size_t> full_ranks() const;
  std::vector<std::size_t> active_ranks() const;
  void set_active_ranks(std::span<const std::size_t> ranks);
  std::size_t active_projection_params() const;

 protected:
  void project(ProjectionId id, const DenseMatrix& x, DenseMatrix& y) const override;
  const ParameterSet& shared_params() const override { return shared_; }

 private:
  ParameterSet shared_;  // projection slots left empty
  std::vector<FactorizedProjection> projections_;
};

/// Accumulated X^T X of every projection input over forward passes on
/// `calib`.
ActivationStats collect_activation_stats(const LanguageModel& model, std::span<const std::vector<Token>> calib);

/// Factorizes every projection at its allocated rank, in parallel. With
/// `whitening` non-null each projection is whitened by its input Gram.
CompressedLM compress_model(const TinyLM& model, const RankAllocation& alloc,
                            const ActivationStats* whitening = nullptr,
                            double damping_ratio = kDefaultDampingRatio);

/// Factorized checkpoint: shared tensors plus "<proj>.a", "<proj>.b",
/// "<proj>.sigma" per projection; header kind "factorized".
TensorFile compressed_file(const CompressedLM& model, const nlohmann::json& extra = {});
CompressedLM compressed_from_file(const TensorFile& file);
void save_compressed(const CompressedLM& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = {});
CompressedLM load_compressed(const std::filesystem::path& path);

// Perplexity-probing baseline allocator.

struct BaselineOptions {
  std::vector<double> grid = {0.25, 0.5, 0.75, 1.0};  // fractions of cap
  std::size_t floor = kDefaultRankFloor;
  const ActivationStats* whitening = nullptr;
};

/// For each projection pick the cheapest candidate whose ppl increase is at
/// most `threshold`; the last candidate (full rank) is always admissible.
/// deltas: projections x candidates.
std::vector<std::size_t> cheapest_admissible(const std::vector<std::vector<double>>& deltas, double threshold);

struct BaselineResult {
  RankAllocation allocation;
  std::vector<std::vector<std::size_t>> grid_ranks;  // projections x candidates
  std::vector<std::vector<double>> perplexity;       // projections x candidates
  double base_perplexity = 0.0;
  double threshold = 0.0;
  double seconds = 0.0;
};

BaselineResult baseline_allocate_perplexity(const TinyLM& model, std::span<const std::vector<Token>> calib,
                                            double target_rate, const BaselineOptions& options = {});

struct FisherAllocationResult {
  RankAllocation allocation;
  ImportanceMap importance;
  double calibration_loss = 0.0;
  double seconds = 0.0;
};

/// Backward over `calib`, importance, allocation. `model` keeps the grads.
FisherAllocationResult fisher_allocate(TinyLM& model, std::span<const std::vector<Token>> calib,
                                       double target_rate, ImportanceMetric metric = ImportanceMetric::kFisher,
                                       std::size_t floor = kDefaultRankFloor);

}  // namespace lowrank
