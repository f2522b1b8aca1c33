// SPDX-License-Identifier: Apache-2.0
#include "lmtc/neural/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lmtc/simd/kernels.hpp"

namespace lmtc::neural {

void Matrix::zero() { std::fill(data.begin(), data.end(), 0.0); }

void gemv(const Matrix& a, std::span<const double> x, std::span<double> y, bool accumulate) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double v = simd::dot(a.row(i), x);
    y[i] = accumulate ? y[i] + v : v;
  }
}

void gemv_t_acc(const Matrix& a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < a.rows; ++i)
    if (x[i] != 0.0) simd::axpy(x[i], a.row(i), y);
}

void outer_acc(std::span<const double> a, std::span<const double> b, Matrix& g) {
  for (std::size_t i = 0; i < g.rows; ++i)
    if (a[i] != 0.0) simd::axpy(a[i], b, g.row(i));
}

void glorot_uniform(Matrix& m, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  std::uniform_real_distribution<double> d(-limit, limit);
  for (double& v : m.data) v = d(rng);
}

}  // namespace lmtc::neural
