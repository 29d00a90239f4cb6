#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace crft {

enum class ParamRole { weight, bias, norm };

inline const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    default: return "norm";
  }
}

inline ParamRole role_from_name(const std::string& s) {
  if (s == "weight") return ParamRole::weight;
  if (s == "bias") return ParamRole::bias;
  if (s == "norm") return ParamRole::norm;
  throw ConfigError("unknown parameter role: " + s);
}

struct Param {
  std::string name;
  Tensor tensor;
  ParamRole role = ParamRole::weight;
};

// Named, ordered learnable state. Order is load-bearing: it defines the
// flattened optimization dimension and the gradient alignment.
using ParamSet = std::vector<Param>;

inline const Param* find_param(const ParamSet& ps, const std::string& name) {
  for (const Param& p : ps) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

inline Param* find_param(ParamSet& ps, const std::string& name) {
  for (Param& p : ps) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

inline std::size_t flat_size(const ParamSet& ps) {
  std::size_t n = 0;
  for (const Param& p : ps) n += p.tensor.size();
  return n;
}

inline std::vector<Tensor> zeros_like(const ParamSet& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (const Param& p : ps) out.push_back(Tensor::zeros(p.tensor.shape));
  return out;
}

inline std::vector<Tensor> tensors_of(const ParamSet& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (const Param& p : ps) out.push_back(p.tensor);
  return out;
}

inline double global_norm(const std::vector<Tensor>& ts) {
  double s = 0.0;
  for (const Tensor& t : ts)
    for (double x : t.data) s += x * x;
  return std::sqrt(s);
}

inline double global_dot(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += dot(a[i], b[i]);
  return s;
}

// w += alpha * v
inline void axpy(ParamSet& w, double alpha, const std::vector<Tensor>& v) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor& t = w[i].tensor;
    for (std::size_t j = 0; j < t.size(); ++j) t.data[j] += alpha * v[i].data[j];
  }
}

inline void assign_tensors(ParamSet& w, const std::vector<Tensor>& src) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i].tensor = src[i];
}

inline bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape != b[i].tensor.shape) return false;
    for (std::size_t j = 0; j < a[i].tensor.size(); ++j) {
      // bit-compare (treats -0.0 != 0.0, which is what "bit-exact" means)
      if (std::memcmp(&a[i].tensor.data[j], &b[i].tensor.data[j], sizeof(double)) != 0)
        return false;
    }
  }
  return true;
}

}  // namespace crft
