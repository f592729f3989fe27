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
#include <limits>

#include "doctest.h"
#include "lowrank/error.hpp"
#include "lowrank/linalg.hpp"
#include "unit/test_util.hpp"

using namespace lowrank;
using lowrank::testing::random_matrix;

namespace {

DenseMatrix reconstruct(const linalg::SvdResult& s, std::size_t rank) {
  DenseMatrix us(s.u.rows(), rank);
  for (std::size_t i = 0; i < s.u.rows(); ++i)
    for (std::size_t k = 0; k < rank; ++k) us(i, k) = s.u(i, k) * s.singular_values[k];
  DenseMatrix vt(rank, s.vt.cols());
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < s.vt.cols(); ++j) vt(k, j) = s.vt(k, j);
  return linalg::matmul(us, vt);
}

double orthonormality_error(const DenseMatrix& q_columns) {
  const DenseMatrix g = linalg::matmul_tn(q_columns, q_columns);
  return linalg::max_abs_diff(g, DenseMatrix::identity(g.rows()));
}

}  // namespace

TEST_CASE("svd of a diagonal matrix") {
  const double d[] = {3.0, 2.0, 1.0};
  const auto s = linalg::svd(DenseMatrix::diagonal(d));
  CHECK(s.singular_values == std::vector<double>{3.0, 2.0, 1.0});
  CHECK(linalg::max_abs_diff(s.u, DenseMatrix::identity(3)) == 0.0);
  CHECK(linalg::max_abs_diff(s.vt, DenseMatrix::identity(3)) == 0.0);
}

TEST_CASE("svd orders an unsorted diagonal and fixes signs") {
  const double d[] = {-1.0, 5.0, 2.0};
  const auto s = linalg::svd(DenseMatrix::diagonal(d));
  CHECK(s.singular_values == std::vector<double>{5.0, 2.0, 1.0});
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (std::abs(s.u(i, k)) > 1e-14) {
        CHECK(s.u(i, k) > 0.0);
        break;
      }
    }
  }
  CHECK(linalg::frobenius_distance(reconstruct(s, 3), DenseMatrix::diagonal(d)) < 1e-14);
}

TEST_CASE("svd of the identity") {
  const auto s = linalg::svd(DenseMatrix::identity(4));
  CHECK(s.singular_values == std::vector<double>{1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("svd reconstructs random matrices of several shapes") {
  const std::pair<std::size_t, std::size_t> shapes[] = {{8, 5}, {5, 8}, {1, 7}, {7, 1}, {33, 33}, {64, 20}};
  std::uint64_t seed = 11;
  for (const auto& [m, n] : shapes) {
    CAPTURE(m);
    CAPTURE(n);
    const DenseMatrix a = random_matrix(m, n, seed++);
    const auto s = linalg::svd(a);
    const std::size_t p = std::min(m, n);
    REQUIRE(s.singular_values.size() == p);
    CHECK(s.u.rows() == m);
    CHECK(s.u.cols() == p);
    CHECK(s.vt.rows() == p);
    CHECK(s.vt.cols() == n);
    for (std::size_t k = 0; k + 1 < p; ++k) CHECK(s.singular_values[k] >= s.singular_values[k + 1]);
    CHECK(s.singular_values.back() >= 0.0);
    CHECK(orthonormality_error(s.u) <= 1e-10);
    CHECK(orthonormality_error(linalg::transpose(s.vt)) <= 1e-10);
    CHECK(linalg::frobenius_distance(reconstruct(s, p), a) <= 1e-8 * linalg::frobenius_norm(a));
  }
}

TEST_CASE("singular values agree with eigenvalues of the Gram matrix") {
  const DenseMatrix a = random_matrix(20, 12, 99);
  const auto s = linalg::svd(a);
  const auto ev = lowrank::testing::symmetric_eigenvalues(linalg::matmul_tn(a, a));
  for (std::size_t k = 0; k < ev.size(); ++k) CHECK(s.singular_values[k] == doctest::Approx(std::sqrt(ev[k])).epsilon(1e-10));
}

TEST_CASE("rank-deficient inputs still give orthonormal factors") {
  // Rank one outer product, and an all-zero matrix.
  DenseMatrix a(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) a(i, j) = static_cast<double>(i + 1) * static_cast<double>(j + 2);
  auto s = linalg::svd(a);
  CHECK(orthonormality_error(s.u) <= 1e-10);
  CHECK(linalg::frobenius_distance(reconstruct(s, 4), a) <= 1e-8 * linalg::frobenius_norm(a));

  s = linalg::svd(DenseMatrix(5, 3));
  CHECK(s.singular_values == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(orthonormality_error(s.u) <= 1e-10);
  CHECK(orthonormality_error(linalg::transpose(s.vt)) <= 1e-10);
}

TEST_CASE("svd is bit-for-bit deterministic") {
  const DenseMatrix a = random_matrix(17, 23, 5);
  const auto s1 = linalg::svd(a);
  const auto s2 = linalg::svd(a);
  CHECK(s1.u == s2.u);
  CHECK(s1.vt == s2.vt);
  CHECK(s1.singular_values == s2.singular_values);
}

TEST_CASE("svd rejects empty and non-finite input") {
  CHECK_THROWS_AS(linalg::svd(DenseMatrix()), ValidationError);
  DenseMatrix a = DenseMatrix::identity(3);
  a(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(linalg::svd(a), ValidationError);
}

TEST_CASE("truncation error matches the singular value tail") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseMatrix a = random_matrix(10 + seed, 14 - seed, seed + 300);
    const auto s = linalg::svd(a);
    for (std::size_t r = 0; r <= s.singular_values.size(); ++r) {
      double tail = 0.0;
      for (std::size_t k = r; k < s.singular_values.size(); ++k) tail += s.singular_values[k] * s.singular_values[k];
      const double err = r == 0 ? linalg::frobenius_norm(a) : linalg::frobenius_distance(reconstruct(s, r), a);
      CHECK(std::abs(err * err - tail) <= 1e-10);
    }
  }
}

TEST_CASE("cholesky of simple SPD matrices") {
  CHECK(linalg::cholesky(DenseMatrix::identity(3)) == DenseMatrix::identity(3));
  const double d[] = {4.0, 9.0};
  const double e[] = {2.0, 3.0};
  CHECK(linalg::cholesky(DenseMatrix::diagonal(d)) == DenseMatrix::diagonal(e));
}

TEST_CASE("cholesky reconstructs a random SPD matrix") {
  const DenseMatrix m = random_matrix(6, 6, 42);
  DenseMatrix b = linalg::matmul_tn(m, m);
  for (std::size_t i = 0; i < 6; ++i) b(i, i) += 0.1;
  const DenseMatrix l = linalg::cholesky(b);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) CHECK(l(i, j) == 0.0);
  CHECK(linalg::frobenius_distance(linalg::matmul_nt(l, l), b) <= 1e-8 * linalg::frobenius_norm(b));
}

TEST_CASE("cholesky recovers a lower-triangular factor") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DenseMatrix l = random_matrix(8, 8, seed + 1000);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = i + 1; j < 8; ++j) l(i, j) = 0.0;
      l(i, i) = std::abs(l(i, i)) + 0.5;
    }
    const DenseMatrix back = linalg::cholesky(linalg::matmul_nt(l, l));
    CHECK(linalg::max_abs_diff(back, l) <= 1e-8);
  }
}

TEST_CASE("cholesky failures") {
  const double d[] = {1.0, -2.0, 3.0};
  try {
    linalg::cholesky(DenseMatrix::diagonal(d));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("pivot 1") != std::string::npos);
  }
  DenseMatrix asym = DenseMatrix::identity(2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(linalg::cholesky(asym), ValidationError);
  CHECK_THROWS_AS(linalg::cholesky(DenseMatrix(2, 3)), ValidationError);
}

TEST_CASE("lower-triangular inverse") {
  DenseMatrix l = random_matrix(7, 7, 3);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = i + 1; j < 7; ++j) l(i, j) = 0.0;
    l(i, i) = 1.0 + std::abs(l(i, i));
  }
  const DenseMatrix inv = linalg::invert_lower_triangular(l);
  CHECK(linalg::max_abs_diff(linalg::matmul(l, inv), DenseMatrix::identity(7)) < 1e-12);
}

TEST_CASE("gemm variants agree with a naive triple loop") {
  const DenseMatrix a = random_matrix(5, 7, 1);
  const DenseMatrix b = random_matrix(7, 6, 2);
  DenseMatrix naive(5, 6);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t k = 0; k < 7; ++k) naive(i, j) += a(i, k) * b(k, j);
  CHECK(linalg::max_abs_diff(linalg::matmul(a, b), naive) < 1e-13);
  CHECK(linalg::max_abs_diff(linalg::matmul_nt(a, linalg::transpose(b)), naive) < 1e-13);
  CHECK(linalg::max_abs_diff(linalg::matmul_tn(linalg::transpose(a), b), naive) < 1e-13);
  CHECK_THROWS_AS(linalg::matmul(a, a), ValidationError);
}
