// SPDX-License-Identifier: Apache-2.0
#pragma once

// Arithmetic inner loops shared by the sparse linear models and the neural
// code. Each kernel has a scalar reference implementation and, on x86-64
// builds, an AVX2/FMA variant. The active table is chosen once at startup
// from CPUID and can be forced with LMTC_SIMD=scalar|avx2.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace lmtc::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i val[i] * dense[idx[i]]
  double (*gather_dot_f32)(const std::uint32_t* idx, const float* val,
                           std::size_t n, const double* dense);
  double (*gather_dot_f64)(const std::uint32_t* idx, const double* val,
                           std::size_t n, const double* dense);
  // y[i] = alpha * x[i] + beta * y[i]
  void (*axpby)(double alpha, const double* x, double beta, double* y,
                std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

Isa active_isa();
std::string_view isa_name(Isa isa);
// Forces a table. Throws if the requested ISA is unavailable. Not thread
// safe with respect to concurrent kernel calls.
void set_isa(Isa isa);
bool isa_available(Isa isa);

const KernelTable& table();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return table().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  table().axpy(alpha, x.data(), y.data(), x.size());
}

inline void axpby(double alpha, std::span<const double> x, double beta,
                  std::span<double> y) {
  table().axpby(alpha, x.data(), beta, y.data(), x.size());
}

inline double gather_dot(std::span<const std::uint32_t> idx,
                         std::span<const float> val,
                         std::span<const double> dense) {
  return table().gather_dot_f32(idx.data(), val.data(), idx.size(),
                                dense.data());
}

inline double gather_dot(std::span<const std::uint32_t> idx,
                         std::span<const double> val,
                         std::span<const double> dense) {
  return table().gather_dot_f64(idx.data(), val.data(), idx.size(),
                                dense.data());
}

// Scatter-add has no profitable AVX2 form; scalar everywhere.
inline void scatter_axpy(double alpha, std::span<const std::uint32_t> idx,
                         std::span<const double> val, std::span<double> dense) {
  for (std::size_t i = 0; i < idx.size(); ++i) dense[idx[i]] += alpha * val[i];
}

}  // namespace lmtc::simd
