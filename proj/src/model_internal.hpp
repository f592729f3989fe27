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
#include <vector>

#include "lowrank/matrix.hpp"

namespace lowrank::detail {

// out = x / rms(x) * gain, row by row; optionally records 1/rms per row.
void rmsnorm_rows(const DenseMatrix& x, const DenseMatrix& gain, double eps, DenseMatrix& out,
                  std::vector<double>* inv_rms);

// Rotates (2i, 2i+1) pairs of every head; rows are positions start_pos, ...
void apply_rope(DenseMatrix& x, std::size_t start_pos, std::size_t n_heads,
                std::span<const double> cos_table, std::span<const double> sin_table, bool inverse);

double silu(double g);

}  // namespace lowrank::detail
