// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lmtc/simd/kernels.hpp"

namespace lmtc::simd {

#if defined(LMTC_BUILD_AVX2)
const KernelTable& avx2_kernels();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(LMTC_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct State {
  const KernelTable* table;
  Isa isa;
};

State initial_state() {
  const char* env = std::getenv("LMTC_SIMD");
  const std::string want = env ? env : "";
  if (want != "scalar" && cpu_has_avx2()) {
    if (const KernelTable* t = avx2_table()) return {t, Isa::kAvx2};
  }
  return {&scalar_table(), Isa::kScalar};
}

State& state() {
  static State s = initial_state();
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(LMTC_BUILD_AVX2)
  if (cpu_has_avx2()) return &avx2_kernels();
#endif
  return nullptr;
}

bool isa_available(Isa isa) {
  return isa == Isa::kScalar || avx2_table() != nullptr;
}

Isa active_isa() { return state().isa; }

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

void set_isa(Isa isa) {
  if (isa == Isa::kScalar) {
    state() = {&scalar_table(), Isa::kScalar};
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw std::runtime_error("AVX2 kernels unavailable");
  state() = {t, Isa::kAvx2};
}

const KernelTable& table() { return *state().table; }

}  // namespace lmtc::simd
