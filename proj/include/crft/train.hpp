#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace crft {

struct PassStats {
  std::size_t forwards = 0;
  std::size_t backwards = 0;
};

// Loss closure over a fixed batch. Gradients align with the ParamSet; the
// pass counter (optional) grounds the SAM 2x-overhead accounting.
inline LossGradFn batch_loss_fn(const ModelSpec& spec, const Tensor& xb,
                                const std::vector<int>& yb, PassStats* stats = nullptr) {
  return [&spec, &xb, &yb, stats](const ParamSet& w, std::vector<Tensor>* grads) -> double {
    Tape tape(grads != nullptr);
    std::vector<Var> vars = leaf_params(tape, w);
    Var logits = forward_logits(spec, w, vars, tape, xb);
    Var loss = tape.cross_entropy(logits, yb);
    if (stats) stats->forwards += 1;
    const double value = tape.val(loss).data[0];
    if (grads) {
      tape.backward(loss);
      if (stats) stats->backwards += 1;
      grads->clear();
      grads->reserve(vars.size());
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };
}

// Loss over a whole dataset slice as one fixed batch concatenation
// (sharpness evaluation uses this).
inline LossGradFn dataset_loss_fn(const ModelSpec& spec, const Dataset& ds,
                                  PassStats* stats = nullptr) {
  return [&spec, &ds, stats](const ParamSet& w, std::vector<Tensor>* grads) -> double {
    return batch_loss_fn(spec, ds.images, ds.labels, stats)(w, grads);
  };
}

// Top-1 accuracy; ties resolve to the lowest class index. `limit` of 0 means
// the full set. Evaluation is pure: params stay untouched.
inline double accuracy(const ModelSpec& spec, const ParamSet& params, const Dataset& ds,
                       std::size_t batch = 64, const ForwardHooks* hooks = nullptr,
                       std::size_t limit = 0) {
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  if (n == 0) throw ConfigError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  const std::size_t sv = ds.sample_values();
  for (std::size_t off = 0; off < n; off += batch) {
    const std::size_t b = std::min(batch, n - off);
    std::vector<std::size_t> shape = ds.images.shape;
    shape[0] = b;
    Tensor xb(shape, std::vector<double>(ds.images.data.begin() + off * sv,
                                         ds.images.data.begin() + (off + b) * sv));
    const Tensor logits = eval_logits(spec, params, xb, hooks);
    const std::size_t C = logits.shape[1];
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = logits.data.data() + i * C;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < C; ++j) {
        if (row[j] > row[arg]) arg = j;
      }
      if (static_cast<int>(arg) == ds.labels[off + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

struct EpochRecord {
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainConfig {
  int epochs = 5;
  std::size_t batch_size = 8;
  std::string lr_schedule = "cosine";  // "cosine" | "constant"
  std::uint64_t seed = 0;
  std::size_t eval_limit = 2048;  // per-epoch test evaluation cap; 0 = full
};

struct TrainOutput {
  ParamSet params;
  std::vector<EpochRecord> history;
  double mean_step_ms = 0.0;
  PassStats passes;
};

inline double cosine_lr_scale(std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return 1.0;
  constexpr double pi = 3.14159265358979323846;
  return 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) /
                               static_cast<double>(total_steps)));
}

// Full-network fine-tuning: epochs x batches with the configured optimizer
// and LR decay; deterministic given (init, datasets, configs, seed).
inline TrainOutput finetune(const ModelSpec& spec, ParamSet init, const Dataset& train,
                            const Dataset& test, const OptimizerConfig& opt_cfg,
                            const TrainConfig& tc) {
  if (train.size() == 0) throw ConfigError("finetune: empty training set");
  if (tc.epochs < 0) throw ConfigError("finetune: epochs must be nonnegative");
  if (tc.batch_size == 0) throw ConfigError("finetune: batch size must be positive");
  TrainOutput out;
  out.params = std::move(init);
  if (tc.epochs == 0) return out;

  Optimizer opt(opt_cfg, out.params);
  const std::size_t n = train.size();
  const std::size_t batches = (n + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = static_cast<std::size_t>(tc.epochs) * batches;
  std::size_t step = 0;
  double total_ms = 0.0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        shuffled_indices(n, Rng::derive(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * tc.batch_size;
      const std::size_t hi = std::min(n, lo + tc.batch_size);
      const std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
      const Tensor xb = train.batch_images(idx);
      const std::vector<int> yb = train.batch_labels(idx);
      const double scale =
          tc.lr_schedule == "cosine" ? cosine_lr_scale(step, total_steps) : 1.0;
      const auto t0 = std::chrono::steady_clock::now();
      loss_sum += opt.step(batch_loss_fn(spec, xb, yb, &out.passes), out.params, scale);
      const auto t1 = std::chrono::steady_clock::now();
      total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
      ++step;
    }
    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.test_accuracy =
        test.size() > 0 ? accuracy(spec, out.params, test, 64, nullptr, tc.eval_limit) : 0.0;
    out.history.push_back(rec);
  }
  out.mean_step_ms = total_ms / static_cast<double>(total_steps);
  return out;
}

}  // namespace crft
