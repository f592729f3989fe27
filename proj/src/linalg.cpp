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

#include "lowrank/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lowrank/error.hpp"

namespace lowrank::linalg {

void gemm_nt(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * lda;
    double* ci = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t k = 0; k < inner; ++k) {
        const double x = ai[k];
        s0 += x * b0[k];
        s1 += x * b1[k];
        s2 += x * b2[k];
        s3 += x * b3[k];
      }
      if (accumulate) {
        ci[j] += s0;
        ci[j + 1] += s1;
        ci[j + 2] += s2;
        ci[j + 3] += s3;
      } else {
        ci[j] = s0;
        ci[j + 1] = s1;
        ci[j + 2] = s2;
        ci[j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      const double* bj = b + j * ldb;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t k = 0; k < inner; ++k) s += ai[k] * bj[k];
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

void gemm_nn(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * lda;
    for (std::size_t k = 0; k < inner; ++k) {
      const double x = ai[k];
      if (x == 0.0) continue;
      const double* bk = b + k * ldb;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += x * bk[j];
    }
  }
}

void gemm_tn(const double* a, std::size_t m, std::size_t lda, const double* b,
             std::size_t n, std::size_t ldb, std::size_t inner, double* c,
             std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
  }
  for (std::size_t k = 0; k < inner; ++k) {
    const double* ak = a + k * lda;
    const double* bk = b + k * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = ak[i];
      if (x == 0.0) continue;
      double* ci = c + i * ldc;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += x * bk[j];
    }
  }
}

namespace {

void require_shape(bool ok, const char* op, const DenseMatrix& a, const DenseMatrix& b) {
  if (!ok) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()));
  }
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.rows(), "matmul", a, b);
  DenseMatrix c(a.rows(), b.cols());
  gemm_nn(a.data(), a.rows(), a.cols(), b.data(), b.cols(), b.cols(), a.cols(), c.data(),
          c.cols(), false);
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt", a, b);
  DenseMatrix c(a.rows(), b.rows());
  gemm_nt(a.data(), a.rows(), a.cols(), b.data(), b.rows(), b.cols(), a.cols(), c.data(),
          c.cols(), false);
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.rows() == b.rows(), "matmul_tn", a, b);
  DenseMatrix c(a.cols(), b.cols());
  gemm_tn(a.data(), a.cols(), a.cols(), b.data(), b.cols(), b.cols(), a.rows(), c.data(),
          c.cols(), false);
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "frobenius_distance", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// Jacobi on the columns of a tall (m >= n) matrix. Columns are stored as
// separate vectors so each rotation touches two contiguous arrays.
SvdResult jacobi_tall(const DenseMatrix& a, std::string_view matrix_id) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<std::vector<double>> w(n, std::vector<double>(m));
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  // Columns whose norm falls below this are numerically zero: they cannot be
  // made orthogonal to the rest and get a completed basis vector in U.
  double fro_sq = 0.0;
  for (const auto& col : w) fro_sq += dot(col, col);
  const double negligible_sq = 1e-28 * fro_sq;

  bool converged = false;
  for (int sweep = 0; sweep < kSvdMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (alpha <= negligible_sq || beta <= negligible_sq) continue;
        if (gamma == 0.0 || std::abs(gamma) <= kSvdTolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    throw NumericalError("svd: no convergence after " + std::to_string(kSvdMaxSweeps) +
                         " sweeps for " + std::string(matrix_id));
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(w[j], w[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
  std::vector<std::vector<double>> ucols;
  ucols.reserve(n);
  std::vector<bool> degenerate(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    std::vector<double> u(m, 0.0);
    if (sigma[j] >= std::numeric_limits<double>::min() && sigma[j] * sigma[j] > negligible_sq) {
      for (std::size_t i = 0; i < m; ++i) u[i] = w[j][i] / sigma[j];
    } else {
      degenerate[k] = true;
    }
    ucols.push_back(std::move(u));
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v[j][i];
  }

  // Columns for zero singular values: complete the basis by Gram-Schmidt over
  // the unit vectors.
  std::size_t next_unit = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!degenerate[k]) continue;
    for (; next_unit < m; ++next_unit) {
      std::vector<double> e(m, 0.0);
      e[next_unit] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < n; ++o) {
          if (o == k || (degenerate[o] && o > k)) continue;
          const double proj = dot(ucols[o], e);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * ucols[o][i];
        }
      }
      const double norm = std::sqrt(dot(e, e));
      if (norm > 0.5) {
        for (double& x : e) x /= norm;
        ucols[k] = std::move(e);
        ++next_unit;
        break;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    double sign = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(ucols[k][i]) > 1e-14) {
        sign = ucols[k][i] < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = sign * ucols[k][i];
    if (sign < 0.0) {
      for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = -out.vt(k, i);
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const DenseMatrix& a, std::string_view matrix_id) {
  if (a.empty()) throw ValidationError("svd: empty matrix " + std::string(matrix_id));
  a.require_finite("svd(" + std::string(matrix_id) + ")");
  if (a.rows() >= a.cols()) return jacobi_tall(a, matrix_id);

  // Wide input: factor the transpose, then swap roles. The sign convention is
  // re-applied on the resulting U.
  SvdResult t = jacobi_tall(transpose(a), matrix_id);
  SvdResult out{transpose(t.vt), std::move(t.singular_values), transpose(t.u)};
  const std::size_t p = out.singular_values.size();
  for (std::size_t k = 0; k < p; ++k) {
    double sign = 1.0;
    for (std::size_t i = 0; i < out.u.rows(); ++i) {
      if (std::abs(out.u(i, k)) > 1e-14) {
        sign = out.u(i, k) < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    if (sign < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t i = 0; i < out.vt.cols(); ++i) out.vt(k, i) = -out.vt(k, i);
    }
  }
  return out;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  if (a.rows() != a.cols() || a.empty()) {
    throw ValidationError("cholesky: expected a non-empty square matrix, got " +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  a.require_finite("cholesky");
  const std::size_t n = a.rows();
  double scale = 1.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) {
        throw ValidationError("cholesky: matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }

  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw NumericalError("cholesky: matrix is not positive definite (pivot " +
                           std::to_string(j) + " = " + std::to_string(d) + ")");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

DenseMatrix invert_lower_triangular(const DenseMatrix& l) {
  if (l.rows() != l.cols()) throw ValidationError("invert_lower_triangular: matrix is not square");
  const std::size_t n = l.rows();
  DenseMatrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    if (l(j, j) == 0.0) {
      throw NumericalError("invert_lower_triangular: zero diagonal at " + std::to_string(j));
    }
    inv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += l(i, k) * inv(k, j);
      inv(i, j) = -s / l(i, i);
    }
  }
  return inv;
}

}  // namespace lowrank::linalg
