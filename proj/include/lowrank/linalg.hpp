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
#include <string_view>
#include <vector>

#include "lowrank/matrix.hpp"

namespace lowrank::linalg {

// C[m x n] (+)= A[m x inner] * B[n x inner]^T. Leading dimensions are row
// strides, so `inner` may be shorter than a row (prefix of the columns).
void gemm_nt(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate);

// C[m x n] (+)= A[m x inner] * B[inner x n].
void gemm_nn(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate);

// C[m x n] (+)= A[inner x m]^T * B[inner x n].
void gemm_tn(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
/// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

struct SvdResult {
  DenseMatrix u;                       // m x p, orthonormal columns
  std::vector<double> singular_values; // p = min(m, n), descending
  DenseMatrix vt;                      // p x n, orthonormal rows
};

inline constexpr int kSvdMaxSweeps = 100;
inline constexpr double kSvdTolerance = 1e-12;

/// Thin SVD by one-sided Jacobi rotations.
///
/// Columns are ordered by descending singular value (ties keep their original
/// order) and signs are fixed so that the first nonzero entry of every column
/// of U is non-negative. The result is a pure function of the input bits.
/// Throws ValidationError for empty or non-finite input; NumericalError naming
/// `matrix_id` if the sweep cap is reached.
SvdResult svd(const DenseMatrix& a, std::string_view matrix_id = "matrix");

/// Lower-triangular L with L * L^T = a. Requires a square, symmetric matrix;
/// throws NumericalError naming the failing pivot when a is not positive
/// definite.
DenseMatrix cholesky(const DenseMatrix& a);

/// Inverse of a lower-triangular matrix with nonzero diagonal.
DenseMatrix invert_lower_triangular(const DenseMatrix& l);

}  // namespace lowrank::linalg
