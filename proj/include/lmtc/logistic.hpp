// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary L2-regularized logistic regression on sparse rows, solved in the
// primal with Newton-CG and Armijo backtracking:
//
//   f(w, b) = l2/2 (|w|^2 + b^2) + sum_i log(1 + exp(-y_i (w.x_i + b)))
//
// The bias is regularized like an ordinary weight.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lmtc/corpus.hpp"

namespace lmtc {

struct LogisticConfig {
  double l2 = 1.0;
  double tolerance = 1e-4;  // stop when |grad| <= tolerance * |grad at 0|
  int max_newton_iter = 50;
  int max_cg_iter = 200;
};

struct DenseLinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  int newton_iterations = 0;
  double final_gradient_ratio = 0.0;
};

// rows[i] uses feature indices < dim; labels[i] is +1 or -1.
DenseLinearModel train_logistic(std::span<const SparseVector* const> rows,
                                std::span<const std::int8_t> labels,
                                std::size_t dim, const LogisticConfig& config);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace lmtc
