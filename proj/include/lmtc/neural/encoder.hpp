// SPDX-License-Identifier: Apache-2.0
#pragma once

// Token encoders: a stacked bidirectional GRU and a linear projection used
// as a test fixture. Forward passes record what the backward pass needs.

#include <cstddef>
#include <vector>

#include "lmtc/neural/tensor.hpp"

namespace lmtc::neural {

// One GRU direction. Gates are ordered [update z, reset r, candidate n] and
// the reset gate applies after the recurrent projection:
//   z = s(Wx_z x + bx_z + Wh_z h + bh_z)
//   r = s(Wx_r x + bx_r + Wh_r h + bh_r)
//   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
//   h' = (1 - z) * n + z * h
struct GruWeights {
  const Matrix* wx;  // 3H x in
  const Matrix* wh;  // 3H x H
  const Matrix* bx;  // 3H x 1
  const Matrix* bh;  // 3H x 1
};

struct GruGrads {
  Matrix* wx;
  Matrix* wh;
  Matrix* bx;
  Matrix* bh;
};

struct GruCache {
  Matrix z, r, n, ghn, hprev;  // T x H each
};

// Output row t is the state after reading x_t (reverse: after x_{T-1}..x_t).
Matrix gru_forward(const Matrix& x, const GruWeights& w, bool reverse, GruCache& cache);

// Accumulates parameter gradients and adds dL/dx into dx.
void gru_backward(const Matrix& x, const Matrix& dout, const GruWeights& w,
                  const GruCache& cache, bool reverse, GruGrads g, Matrix& dx);

}  // namespace lmtc::neural
