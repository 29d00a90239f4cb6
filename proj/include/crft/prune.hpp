#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "model.hpp"
#include "param.hpp"

namespace crft {

enum class PruneScoring { magnitude, wanda };
enum class PruneScope { per_layer, per_output_row };

inline const char* scoring_name(PruneScoring s) {
  return s == PruneScoring::magnitude ? "magnitude" : "wanda";
}

struct MaskStructure {
  enum Kind { unstructured, nm } kind = unstructured;
  std::size_t n = 0, m = 0;

  static MaskStructure make_nm(std::size_t n, std::size_t m) { return {nm, n, m}; }
  std::string str() const {
    return kind == unstructured ? "unstructured" : std::to_string(n) + ":" + std::to_string(m);
  }
};

// Binary keep-masks aligned to weight tensors (1 = keep).
struct PruneMask {
  std::map<std::string, Tensor> masks;
  MaskStructure structure;
  double target_sparsity = 0.0;
  PruneScoring scoring = PruneScoring::magnitude;
};

// Per-layer column norms ||X_j||_2 of the calibration activation matrices.
struct WandaCalib {
  std::map<std::string, std::vector<double>> col_norms;
};

inline WandaCalib wanda_calib_from_activations(const std::map<std::string, Tensor>& acts) {
  WandaCalib c;
  for (const auto& [name, mat] : acts) {
    const std::size_t rows = mat.shape[0], cols = mat.shape[1];
    std::vector<double> norms(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* r = mat.data.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) norms[j] += r[j] * r[j];
    }
    for (double& v : norms) v = std::sqrt(v);
    c.col_norms.emplace(name, std::move(norms));
  }
  return c;
}

inline Tensor magnitude_scores(const Tensor& w) {
  Tensor s = w;
  for (double& v : s.data) v = std::fabs(v);
  return s;
}

// score[i][j] = |w[i][j]| * ||X_j||_2 on the out x in matricization.
inline Tensor wanda_scores(const Tensor& w, const std::vector<double>& col_norms) {
  const std::size_t rows = w.rows(), cols = w.cols();
  if (col_norms.size() != cols) {
    throw CalibError("wanda_scores: " + std::to_string(col_norms.size()) +
                     " calibration norms for input width " + std::to_string(cols));
  }
  Tensor s(w.shape);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      s.data[i * cols + j] = std::fabs(w.data[i * cols + j]) * col_norms[j];
  return s;
}

namespace detail {

// Zeros the floor(sparsity * len) lowest-scoring entries of mask[offset..offset+len).
// Ties prune the lowest flat index first.
inline void prune_group(const double* scores, double* mask, std::size_t offset, std::size_t len,
                        double sparsity) {
  const std::size_t k = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(len)));
  if (k == 0) return;
  std::vector<std::size_t> idx(len);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores[offset + a], sb = scores[offset + b];
    return sa != sb ? sa < sb : a < b;
  });
  for (std::size_t i = 0; i < k; ++i) mask[offset + idx[i]] = 0.0;
}

}  // namespace detail

inline Tensor unstructured_mask(const Tensor& scores, double sparsity, PruneScope scope) {
  if (sparsity < 0.0 || sparsity >= 1.0) {
    throw ConfigError("unstructured_mask: sparsity must be in [0,1)");
  }
  Tensor mask = Tensor::full(scores.shape, 1.0);
  if (scope == PruneScope::per_layer || scores.ndim() < 2) {
    detail::prune_group(scores.data.data(), mask.data.data(), 0, scores.size(), sparsity);
  } else {
    const std::size_t rows = scores.rows(), cols = scores.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      detail::prune_group(scores.data.data(), mask.data.data(), i * cols, cols, sparsity);
    }
  }
  return mask;
}

// Keep the n highest scores in every consecutive group of m along the input
// dimension of each output row. Ties keep the lowest flat index.
inline Tensor nm_mask(const Tensor& scores, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0 || n >= m) throw ConfigError("nm_mask: need 0 < n < m");
  const std::size_t rows = scores.rows(), cols = scores.cols();
  if (cols % m != 0) {
    throw StructureError("nm_mask: group size " + std::to_string(m) +
                         " does not divide input dimension " + std::to_string(cols));
  }
  Tensor mask = Tensor::zeros(scores.shape);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t g = 0; g < cols / m; ++g) {
      const std::size_t off = i * cols + g * m;
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.data[off + a], sb = scores.data[off + b];
        return sa != sb ? sa > sb : a < b;
      });
      for (std::size_t t = 0; t < n; ++t) mask.data[off + idx[t]] = 1.0;
    }
  }
  return mask;
}

struct PruneOptions {
  PruneScoring scoring = PruneScoring::magnitude;
  MaskStructure structure;          // unstructured or nm(N,M)
  double sparsity = 0.5;            // unstructured only; nm implies 1 - n/m
  PruneScope magnitude_scope = PruneScope::per_layer;
  // Wanda compares within output rows, matching the method it cites.
  PruneScope wanda_scope = PruneScope::per_output_row;
};

// One-shot masks over every role==weight tensor. Purely score-based: no
// gradients, no retraining.
inline PruneMask build_mask(const ParamSet& params, const PruneOptions& opt,
                            const WandaCalib* calib = nullptr) {
  if (opt.scoring == PruneScoring::wanda && calib == nullptr) {
    throw CalibError("build_mask: wanda scoring requires calibration norms");
  }
  PruneMask out;
  out.structure = opt.structure;
  out.scoring = opt.scoring;
  out.target_sparsity = opt.structure.kind == MaskStructure::nm
                            ? 1.0 - static_cast<double>(opt.structure.n) /
                                        static_cast<double>(opt.structure.m)
                            : opt.sparsity;
  for (const Param& p : params) {
    if (p.role != ParamRole::weight) continue;
    Tensor scores;
    if (opt.scoring == PruneScoring::magnitude) {
      scores = magnitude_scores(p.tensor);
    } else {
      auto it = calib->col_norms.find(p.name);
      if (it == calib->col_norms.end()) {
        throw CalibError("build_mask: no calibration norms for layer " + p.name);
      }
      scores = wanda_scores(p.tensor, it->second);
    }
    Tensor mask;
    if (opt.structure.kind == MaskStructure::nm) {
      mask = nm_mask(scores, opt.structure.n, opt.structure.m);
    } else {
      const PruneScope scope =
          opt.scoring == PruneScoring::wanda ? opt.wanda_scope : opt.magnitude_scope;
      mask = unstructured_mask(scores, opt.sparsity, scope);
    }
    out.masks.emplace(p.name, std::move(mask));
  }
  return out;
}

// Elementwise w * mask on weight tensors; biases and norms untouched.
inline ParamSet apply_mask(const ParamSet& params, const PruneMask& mask) {
  ParamSet out = params;
  for (Param& p : out) {
    if (p.role != ParamRole::weight) continue;
    auto it = mask.masks.find(p.name);
    if (it == mask.masks.end()) {
      throw StructureError("apply_mask: no mask for weight " + p.name);
    }
    if (!it->second.same_shape(p.tensor)) {
      throw StructureError("apply_mask: mask " + it->second.shape_str() + " misaligned with " +
                           p.name + " " + p.tensor.shape_str());
    }
    for (std::size_t i = 0; i < p.tensor.size(); ++i) p.tensor.data[i] *= it->second.data[i];
  }
  return out;
}

inline double mask_sparsity(const PruneMask& mask) {
  std::size_t total = 0, kept = 0;
  for (const auto& [name, m] : mask.masks) {
    total += m.size();
    for (double v : m.data) kept += v != 0.0 ? 1 : 0;
  }
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(total);
}

}  // namespace crft
