#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace crft {

// Dense row-major tensor of 64-bit reals. Everything on the training path is
// f64; low precision only exists as simulated quantization.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(count(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor uniform(std::vector<std::size_t> s, double lo, double hi, Rng& rng) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = rng.uniform(lo, hi);
    return t;
  }

  static Tensor gaussian(std::vector<std::size_t> s, double mean, double stddev, Rng& rng) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = mean + stddev * rng.normal();
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const { return shape_str(shape); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Row-major 2-D access; rows() treats everything after axis 0 as columns,
  // which is also the matricization pruning and analysis use for conv kernels.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 0 : size() / shape[0]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool all_finite() const {
    for (double x : data) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

inline double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double norm2(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data) s += x * x;
  return std::sqrt(s);
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.data) m = std::max(m, std::fabs(x));
  return m;
}

// --- raw GEMM kernels -------------------------------------------------------
//
// All accumulate into C (caller zeroes when needed). Loop orders are fixed so
// floating-point reduction order is deterministic. The axpy forms (nn, tn)
// vectorize without -ffast-math; the dot form (nt) is unrolled into four
// independent accumulators.

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ar[t];
      const double* br = b + t * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T   (dot products of contiguous rows)
inline void gemm_nt(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::size_t t = 0;
      for (; t + 4 <= k; t += 4) {
        s0 += ar[t] * br[t];
        s1 += ar[t + 1] * br[t + 1];
        s2 += ar[t + 2] * br[t + 2];
        s3 += ar[t + 3] * br[t + 3];
      }
      for (; t < k; ++t) s0 += ar[t] * br[t];
      cr[j] += ((s0 + s1) + (s2 + s3));
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]   (rank-1 accumulation per row of A/B)
inline void gemm_tn(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    const double* br = b + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ar[t];
      double* cr = c + t * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

}  // namespace crft
