// SPDX-License-Identifier: Apache-2.0
#include "lmtc/neural/encoder.hpp"

#include <cmath>
#include <span>

#include "lmtc/logistic.hpp"
#include "lmtc/simd/kernels.hpp"

namespace lmtc::neural {

Matrix gru_forward(const Matrix& x, const GruWeights& w, bool reverse, GruCache& cache) {
  const std::size_t T = x.rows, H = w.wh->cols;
  Matrix out(T, H);
  cache = {Matrix(T, H), Matrix(T, H), Matrix(T, H), Matrix(T, H), Matrix(T, H)};
  std::vector<double> h(H, 0.0), gx(3 * H), gh(3 * H);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    gemv(*w.wx, x.row(t), gx);
    gemv(*w.wh, h, gh);
    for (std::size_t i = 0; i < 3 * H; ++i) {
      gx[i] += w.bx->data[i];
      gh[i] += w.bh->data[i];
    }
    for (std::size_t i = 0; i < H; ++i) {
      const double z = sigmoid(gx[i] + gh[i]);
      const double r = sigmoid(gx[H + i] + gh[H + i]);
      const double n = std::tanh(gx[2 * H + i] + r * gh[2 * H + i]);
      cache.z(t, i) = z;
      cache.r(t, i) = r;
      cache.n(t, i) = n;
      cache.ghn(t, i) = gh[2 * H + i];
      cache.hprev(t, i) = h[i];
      out(t, i) = (1.0 - z) * n + z * h[i];
    }
    auto o = out.row(t);
    std::copy(o.begin(), o.end(), h.begin());
  }
  return out;
}

void gru_backward(const Matrix& x, const Matrix& dout, const GruWeights& w,
                  const GruCache& cache, bool reverse, GruGrads g, Matrix& dx) {
  const std::size_t T = x.rows, H = w.wh->cols;
  std::vector<double> dh_next(H, 0.0), dh(H), dgx(3 * H), dgh(3 * H);
  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = reverse ? T - 1 - s : s;
    for (std::size_t i = 0; i < H; ++i) dh[i] = dout(t, i) + dh_next[i];
    for (std::size_t i = 0; i < H; ++i) {
      const double z = cache.z(t, i), r = cache.r(t, i), n = cache.n(t, i);
      const double hp = cache.hprev(t, i);
      const double dn_pre = dh[i] * (1.0 - z) * (1.0 - n * n);
      const double dz_pre = dh[i] * (hp - n) * z * (1.0 - z);
      const double dr_pre = dn_pre * cache.ghn(t, i) * r * (1.0 - r);
      dgx[i] = dz_pre;
      dgx[H + i] = dr_pre;
      dgx[2 * H + i] = dn_pre;
      dgh[i] = dz_pre;
      dgh[H + i] = dr_pre;
      dgh[2 * H + i] = dn_pre * r;
      dh_next[i] = dh[i] * z;
    }
    outer_acc(dgx, x.row(t), *g.wx);
    outer_acc(dgh, cache.hprev.row(t), *g.wh);
    simd::axpy(1.0, dgx, g.bx->data);
    simd::axpy(1.0, dgh, g.bh->data);
    gemv_t_acc(*w.wx, dgx, dx.row(t));
    gemv_t_acc(*w.wh, dgh, dh_next);
  }
}

}  // namespace lmtc::neural
