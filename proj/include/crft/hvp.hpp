#pragma once

#include <vector>

#include "optim.hpp"
#include "param.hpp"

namespace crft {

// Central-difference Hessian-vector product:
//   H v  ~=  ||v|| * (grad L(w + h*u) - grad L(w - h*u)) / (2h),   u = v/||v||.
// The direction is unit-normalized internally so h controls the true step
// size; the result is rescaled to the caller's v. Weights are restored
// bit-exactly. A zero v yields a zero product.
inline std::vector<Tensor> hvp(const LossGradFn& fn, ParamSet& w, const std::vector<Tensor>& v,
                               double h) {
  if (v.size() != w.size()) throw ShapeError("hvp: direction not aligned with weights");
  if (h <= 0.0) throw ConfigError("hvp: finite-difference step must be positive");
  const double vnorm = global_norm(v);
  if (vnorm == 0.0) {
    std::vector<Tensor> zero;
    zero.reserve(v.size());
    for (const Tensor& t : v) zero.push_back(Tensor::zeros(t.shape));
    return zero;
  }
  const std::vector<Tensor> saved = tensors_of(w);
  const double step = h / vnorm;

  axpy(w, step, v);
  std::vector<Tensor> g_plus;
  fn(w, &g_plus);
  assign_tensors(w, saved);

  axpy(w, -step, v);
  std::vector<Tensor> g_minus;
  fn(w, &g_minus);
  assign_tensors(w, saved);

  const double scale = vnorm / (2.0 * h);
  std::vector<Tensor> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    Tensor t(v[i].shape);
    for (std::size_t j = 0; j < t.size(); ++j) {
      t.data[j] = scale * (g_plus[i].data[j] - g_minus[i].data[j]);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace crft
