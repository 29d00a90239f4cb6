#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hvp.hpp"
#include "numfmt.hpp"
#include "rng.hpp"

namespace crft {

struct SharpnessReport {
  double lambda_max = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> rayleigh_history;
  std::string eval_set_id;
  std::uint64_t seed = 0;
};

struct SharpnessOptions {
  double tol = 1e-3;   // relative Rayleigh change
  int max_iters = 100;
  double fd_h = 0.0;   // 0 = auto: 1e-3 * (1 + ||w|| / sqrt(dim))
};

// Largest-|eigenvalue| estimate of the loss Hessian at w via power iteration
// on finite-difference Hessian-vector products. The Rayleigh quotient of the
// final iterate is reported even when negative (saddle region); near a
// minimum it is the top positive eigenvalue.
inline SharpnessReport lambda_max(const LossGradFn& loss_on_eval_set, ParamSet& w,
                                  const SharpnessOptions& opt, const std::string& eval_set_id,
                                  std::uint64_t seed) {
  if (opt.tol <= 0.0) throw ConfigError("lambda_max: tol must be positive");
  if (opt.max_iters < 1) throw ConfigError("lambda_max: max_iters must be positive");
  SharpnessReport rep;
  rep.eval_set_id = eval_set_id;
  rep.seed = seed;

  const std::size_t dim = flat_size(w);
  double h = opt.fd_h;
  if (h == 0.0) {
    h = 1e-3 * (1.0 + global_norm(tensors_of(w)) / std::sqrt(static_cast<double>(dim)));
  }

  Rng rng = Rng::derive(seed, "powerit");
  std::vector<Tensor> v;
  v.reserve(w.size());
  for (const Param& p : w) v.push_back(Tensor::gaussian(p.tensor.shape, 0.0, 1.0, rng));
  {
    const double n = global_norm(v);
    for (Tensor& t : v)
      for (double& x : t.data) x /= n;
  }

  for (int k = 0; k < opt.max_iters; ++k) {
    std::vector<Tensor> hv = hvp(loss_on_eval_set, w, v, h);
    const double hv_norm = global_norm(hv);
    if (hv_norm < 1e-12) {
      // flat in every direction probed
      rep.rayleigh_history.push_back(0.0);
      rep.lambda_max = 0.0;
      rep.converged = true;
      rep.iterations = static_cast<int>(rep.rayleigh_history.size());
      return rep;
    }
    const double rayleigh = global_dot(v, hv);  // v is unit
    rep.rayleigh_history.push_back(rayleigh);
    rep.lambda_max = rayleigh;
    rep.iterations = static_cast<int>(rep.rayleigh_history.size());
    const std::size_t n = rep.rayleigh_history.size();
    if (n >= 2) {
      const double prev = rep.rayleigh_history[n - 2];
      const double rel = std::fabs(rayleigh - prev) / std::max(std::fabs(rayleigh), 1e-12);
      if (rel < opt.tol) {
        rep.converged = true;
        return rep;
      }
    }
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v[i].size(); ++j) v[i].data[j] = hv[i].data[j] / hv_norm;
  }
  return rep;
}

inline std::string sharpness_report_json(const SharpnessReport& r) {
  std::string s = "{";
  s += "\"lambda_max\": " + fmt_double(r.lambda_max);
  s += ", \"iterations\": " + std::to_string(r.iterations);
  s += std::string(", \"converged\": ") + (r.converged ? "true" : "false");
  s += ", \"eval_set_id\": \"" + r.eval_set_id + "\"";
  s += ", \"seed\": " + std::to_string(r.seed);
  s += "}";
  return s;
}

}  // namespace crft

