// SPDX-License-Identifier: Apache-2.0
#include "lmtc/logistic.hpp"

#include <algorithm>

#include "lmtc/error.hpp"
#include "lmtc/simd/kernels.hpp"

namespace lmtc {
namespace {

class Objective {
 public:
  Objective(std::span<const SparseVector* const> rows,
            std::span<const std::int8_t> y, std::size_t dim, double l2)
      : rows_(rows), y_(y), dim_(dim), l2_(l2), z_(rows.size()), d_(rows.size()) {}

  // Parameters are packed as [w (dim) ; b].
  double value(std::span<const double> p) {
    double f = 0.5 * l2_ * simd::dot(p, p);
    const double b = p[dim_];
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      z_[i] = margin(i, p, b);
      f += softplus(-y_[i] * z_[i]);
    }
    return f;
  }

  // Uses z_ from the last value() call at the same point.
  void gradient(std::span<const double> p, std::span<double> g) {
    std::copy(p.begin(), p.end(), g.begin());
    for (double& v : g) v *= l2_;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double s = sigmoid(z_[i]);
      d_[i] = s * (1.0 - s);
      const double coef = s - (y_[i] > 0 ? 1.0 : 0.0);
      simd::scatter_axpy(coef, rows_[i]->indices, rows_[i]->values, g.first(dim_));
      g[dim_] += coef;
    }
  }

  // Hessian at the last gradient() point times v.
  void hessian_vec(std::span<const double> v, std::span<double> out) {
    std::copy(v.begin(), v.end(), out.begin());
    for (double& x : out) x *= l2_;
    const double vb = v[dim_];
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double xv = simd::gather_dot(rows_[i]->indices,
                                         std::span<const double>(rows_[i]->values), v) + vb;
      const double c = d_[i] * xv;
      simd::scatter_axpy(c, rows_[i]->indices, rows_[i]->values, out.first(dim_));
      out[dim_] += c;
    }
  }

 private:
  double margin(std::size_t i, std::span<const double> p, double b) const {
    return simd::gather_dot(rows_[i]->indices, std::span<const double>(rows_[i]->values), p) + b;
  }

  std::span<const SparseVector* const> rows_;
  std::span<const std::int8_t> y_;
  std::size_t dim_;
  double l2_;
  std::vector<double> z_;
  std::vector<double> d_;
};

double norm2(std::span<const double> v) { return std::sqrt(simd::dot(v, v)); }

}  // namespace

DenseLinearModel train_logistic(std::span<const SparseVector* const> rows,
                                std::span<const std::int8_t> labels,
                                std::size_t dim, const LogisticConfig& config) {
  if (rows.size() != labels.size()) throw Error("train_logistic: rows/labels size mismatch");
  if (!(config.l2 > 0.0)) throw Error("train_logistic: l2 must be > 0");
  const std::size_t n = dim + 1;
  Objective obj(rows, labels, dim, config.l2);
  std::vector<double> p(n, 0.0), g(n), step(n), r(n), dir(n), hd(n), trial(n);

  double f = obj.value(p);
  obj.gradient(p, g);
  const double g0 = norm2(g);
  DenseLinearModel model;
  double gnorm = g0;
  int iter = 0;
  while (iter < config.max_newton_iter && gnorm > config.tolerance * g0 && g0 > 0.0) {
    ++iter;
    // Conjugate gradient on H step = -g.
    std::fill(step.begin(), step.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) r[i] = -g[i];
    dir = r;
    double rr = simd::dot(r, r);
    const double cg_tol = std::min(0.1, std::sqrt(gnorm)) * gnorm;
    for (int k = 0; k < config.max_cg_iter && std::sqrt(rr) > cg_tol; ++k) {
      obj.hessian_vec(dir, hd);
      const double alpha = rr / simd::dot(dir, hd);
      simd::axpy(alpha, dir, step);
      simd::axpy(-alpha, hd, r);
      const double rr_new = simd::dot(r, r);
      simd::axpby(1.0, r, rr_new / rr, dir);
      rr = rr_new;
    }
    // Armijo backtracking.
    const double slope = simd::dot(g, step);
    double t = 1.0;
    double f_new = f;
    for (int ls = 0; ls < 30; ++ls) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = p[i] + t * step[i];
      f_new = obj.value(trial);
      if (f_new <= f + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    if (!(f_new <= f)) {
      obj.value(p);  // restore cached margins
      break;
    }
    p.swap(trial);
    f = f_new;
    obj.gradient(p, g);
    gnorm = norm2(g);
  }
  model.newton_iterations = iter;
  model.final_gradient_ratio = g0 > 0.0 ? gnorm / g0 : 0.0;
  model.bias = p[dim];
  p.resize(dim);
  model.weights = std::move(p);
  return model;
}

}  // namespace lmtc
