// SPDX-License-Identifier: Apache-2.0
#include "lmtc/simd/kernels.hpp"

namespace lmtc::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_scalar(double alpha, const double* x, double beta, double* y,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

template <typename T>
double gather_dot_scalar(const std::uint32_t* idx, const T* val, std::size_t n,
                         const double* dense) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += static_cast<double>(val[i]) * dense[idx[i]];
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{dot_scalar, axpy_scalar,
                             gather_dot_scalar<float>,
                             gather_dot_scalar<double>, axpby_scalar};
  return t;
}

}  // namespace lmtc::simd
