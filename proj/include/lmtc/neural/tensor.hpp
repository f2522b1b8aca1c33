// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace lmtc::neural {

// Row-major dense matrix of doubles. Vectors are n x 1 matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }
  void zero();

  bool operator==(const Matrix&) const = default;
};

// y = A x (+ y when accumulate)
void gemv(const Matrix& a, std::span<const double> x, std::span<double> y,
          bool accumulate = false);
// y += A^T x
void gemv_t_acc(const Matrix& a, std::span<const double> x, std::span<double> y);
// G += a b^T
void outer_acc(std::span<const double> a, std::span<const double> b, Matrix& g);

// Glorot-uniform initialization.
void glorot_uniform(Matrix& m, std::mt19937_64& rng);

}  // namespace lmtc::neural
