#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "param.hpp"

namespace crft {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SamConfig {
  double rho = 0.05;
  std::variant<SgdConfig, AdamConfig> base = AdamConfig{};
};

struct SgdState {
  std::vector<Tensor> velocity;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;
};

using BaseState = std::variant<SgdState, AdamState>;

// Applied perturbation: epsilon_hat = rho * g / ||g||_2 over the whole
// parameter vector; all-zero when the gradient vanishes.
struct PerturbationState {
  std::vector<Tensor> epsilon_hat;
  double grad_norm = 0.0;
};

// Evaluates the loss at w; fills d(loss)/dw (aligned with w) when grads != nullptr.
using LossGradFn = std::function<double(const ParamSet&, std::vector<Tensor>*)>;

inline PerturbationState sam_perturb(const ParamSet& w, const std::vector<Tensor>& grads,
                                     double rho) {
  if (grads.size() != w.size()) throw ShapeError("sam_perturb: gradients not aligned with weights");
  PerturbationState st;
  st.grad_norm = global_norm(grads);
  st.epsilon_hat.reserve(grads.size());
  const double scale = st.grad_norm > 0.0 ? rho / st.grad_norm : 0.0;
  for (const Tensor& g : grads) {
    Tensor e(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) e.data[i] = scale * g.data[i];
    st.epsilon_hat.push_back(std::move(e));
  }
  return st;
}

inline void sgd_step(ParamSet& w, const std::vector<Tensor>& grads, const SgdConfig& cfg,
                     SgdState& st) {
  if (cfg.lr <= 0.0) throw ConfigError("sgd: lr must be positive");
  if (st.velocity.empty() && cfg.momentum != 0.0) st.velocity = zeros_like(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor& t = w[i].tensor;
    if (cfg.momentum != 0.0) {
      Tensor& v = st.velocity[i];
      for (std::size_t j = 0; j < t.size(); ++j) {
        v.data[j] = cfg.momentum * v.data[j] + grads[i].data[j];
        t.data[j] -= cfg.lr * v.data[j];
      }
    } else {
      for (std::size_t j = 0; j < t.size(); ++j) t.data[j] -= cfg.lr * grads[i].data[j];
    }
  }
}

inline void adam_step(ParamSet& w, const std::vector<Tensor>& grads, const AdamConfig& cfg,
                      AdamState& st) {
  if (cfg.lr <= 0.0) throw ConfigError("adam: lr must be positive");
  if (st.m.empty()) {
    st.m = zeros_like(w);
    st.v = zeros_like(w);
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor& t = w[i].tensor;
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double g = grads[i].data[j];
      m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g;
      v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g * g;
      const double mh = m.data[j] / bc1;
      const double vh = v.data[j] / bc2;
      t.data[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

inline void base_step(ParamSet& w, const std::vector<Tensor>& grads,
                      const std::variant<SgdConfig, AdamConfig>& cfg, BaseState& st) {
  if (std::holds_alternative<SgdConfig>(cfg)) {
    sgd_step(w, grads, std::get<SgdConfig>(cfg), std::get<SgdState>(st));
  } else {
    adam_step(w, grads, std::get<AdamConfig>(cfg), std::get<AdamState>(st));
  }
}

struct SamStepInfo {
  double loss = 0.0;            // loss at the unperturbed weights
  double loss_perturbed = 0.0;  // loss at w + epsilon_hat
  double grad_norm = 0.0;
};

// One SAM update: gradient at w, climb to w + epsilon_hat, gradient there,
// restore w exactly, then base update with the perturbed-point gradient.
// Exactly two forward-backward passes.
inline SamStepInfo sam_step(const LossGradFn& fn, ParamSet& w, const SamConfig& cfg,
                            BaseState& st) {
  if (cfg.rho < 0.0) throw ConfigError("sam: rho must be nonnegative");
  SamStepInfo info;
  std::vector<Tensor> grads;
  info.loss = fn(w, &grads);
  PerturbationState pert = sam_perturb(w, grads, cfg.rho);
  info.grad_norm = pert.grad_norm;
  std::vector<Tensor> saved = tensors_of(w);
  axpy(w, 1.0, pert.epsilon_hat);
  std::vector<Tensor> grads_sam;
  info.loss_perturbed = fn(w, &grads_sam);
  assign_tensors(w, saved);  // bit-exact restore
  base_step(w, grads_sam, cfg.base, st);
  return info;
}

// ---- training-loop driver ---------------------------------------------------

// Flat optimizer description, serializable into run manifests.
struct OptimizerConfig {
  std::string kind = "adam";  // "sgd" | "adam" | "sam"
  std::string sam_base = "adam";
  double lr = 1e-3;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double rho = 0.05;

  void validate() const {
    if (kind != "sgd" && kind != "adam" && kind != "sam")
      throw ConfigError("optimizer kind must be sgd|adam|sam, got " + kind);
    if (kind == "sam" && sam_base != "sgd" && sam_base != "adam")
      throw ConfigError("sam base must be sgd|adam, got " + sam_base);
    if (lr <= 0.0) throw ConfigError("optimizer lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (beta1 >= 1.0 || beta2 >= 1.0) throw ConfigError("adam betas must be < 1");
    if (rho <= 0.0 && kind == "sam") throw ConfigError("sam rho must be positive");
  }

  SgdConfig sgd(double lr_scale = 1.0) const { return SgdConfig{lr * lr_scale, momentum}; }
  AdamConfig adam(double lr_scale = 1.0) const {
    return AdamConfig{lr * lr_scale, beta1, beta2, eps};
  }
  SamConfig sam(double lr_scale = 1.0) const {
    SamConfig c;
    c.rho = rho;
    if (sam_base == "sgd") {
      c.base = sgd(lr_scale);
    } else {
      c.base = adam(lr_scale);
    }
    return c;
  }
};

// Owns optimizer state across steps; `lr_scale` carries the LR schedule.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const ParamSet& /*shape template*/) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const bool sgd_like = cfg_.kind == "sgd" || (cfg_.kind == "sam" && cfg_.sam_base == "sgd");
    if (sgd_like) {
      state_ = SgdState{};
    } else {
      state_ = AdamState{};
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

  // Returns the loss at the (pre-step) weights.
  double step(const LossGradFn& fn, ParamSet& w, double lr_scale = 1.0) {
    if (cfg_.kind == "sam") {
      return sam_step(fn, w, cfg_.sam(lr_scale), state_).loss;
    }
    std::vector<Tensor> grads;
    const double loss = fn(w, &grads);
    if (cfg_.kind == "sgd") {
      sgd_step(w, grads, cfg_.sgd(lr_scale), std::get<SgdState>(state_));
    } else {
      adam_step(w, grads, cfg_.adam(lr_scale), std::get<AdamState>(state_));
    }
    return loss;
  }

 private:
  OptimizerConfig cfg_;
  BaseState state_;
};

}  // namespace crft
