#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (triple loops, dense eigensolvers, two-pass statistics)
// and must not share code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "crft/optim.hpp"
#include "crft/tensor.hpp"

namespace oracle {

using crft::ParamSet;
using crft::Tensor;

// plain triple-loop matmul
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.data[i * k + t] * b.data[t * n + j];
      c.data[i * n + j] = s;
    }
  return c;
}

// direct nested-loop cross-correlation, valid padding
inline Tensor conv2d_valid(const Tensor& x, const Tensor& w, std::size_t stride) {
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const std::size_t OH = (H - kh) / stride + 1, OW = (W - kw) / stride + 1;
  Tensor y({N, F, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double s = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b)
                s += x.data[((n * C + c) * H + oh * stride + a) * W + ow * stride + b] *
                     w.data[((f * C + c) * kh + a) * kw + b];
          y.data[((n * F + f) * OH + oh) * OW + ow] = s;
        }
  return y;
}

// per-sample -log softmax(logits)[label], averaged
inline double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t B = logits.shape[0], C = logits.shape[1];
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double* row = logits.data.data() + i * C;
    double mx = row[0];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < C; ++j) denom += std::exp(row[j] - mx);
    const double p = std::exp(row[labels[i]] - mx) / denom;
    total += -std::log(p);
  }
  return total / static_cast<double>(B);
}

// central finite differences of a scalar function of the ParamSet
inline std::vector<Tensor> fd_gradient(const std::function<double(const ParamSet&)>& f,
                                       const ParamSet& w, double h = 1e-5) {
  ParamSet wp = w;
  std::vector<Tensor> g;
  g.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor gi(w[i].tensor.shape);
    for (std::size_t j = 0; j < gi.size(); ++j) {
      const double orig = wp[i].tensor.data[j];
      wp[i].tensor.data[j] = orig + h;
      const double fp = f(wp);
      wp[i].tensor.data[j] = orig - h;
      const double fm = f(wp);
      wp[i].tensor.data[j] = orig;
      gi.data[j] = (fp - fm) / (2.0 * h);
    }
    g.push_back(std::move(gi));
  }
  return g;
}

// single-entry central difference (for sampled checks on larger models)
inline double fd_entry(const std::function<double(const ParamSet&)>& f, ParamSet& w,
                       std::size_t pi, std::size_t j, double h = 1e-5) {
  const double orig = w[pi].tensor.data[j];
  w[pi].tensor.data[j] = orig + h;
  const double fp = f(w);
  w[pi].tensor.data[j] = orig - h;
  const double fm = f(w);
  w[pi].tensor.data[j] = orig;
  return (fp - fm) / (2.0 * h);
}

// Classical two-sided Jacobi eigensolver for dense symmetric matrices.
// Returns eigenvalues (unsorted magnitude order not guaranteed).
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  return eig;
}

inline double max_abs_eigenvalue(const std::vector<double>& a, std::size_t n) {
  double best = 0.0;
  for (double e : symmetric_eigenvalues(a, n)) {
    if (std::fabs(e) > std::fabs(best)) best = e;
  }
  return best;
}

struct ChannelStats {
  double min, max, mean, stddev, max_abs;
};

// two-pass column statistics of a [rows x cols] matrix
inline std::vector<ChannelStats> column_stats(const Tensor& m) {
  const std::size_t rows = m.shape[0], cols = m.shape[1];
  std::vector<ChannelStats> out(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double mn = m.data[j], mx = m.data[j], sum = 0.0, ma = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double v = m.data[i * cols + j];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      ma = std::max(ma, std::fabs(v));
      sum += v;
    }
    const double mean = sum / rows;
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double d = m.data[i * cols + j] - mean;
      var += d * d;
    }
    out[j] = {mn, mx, mean, std::sqrt(var / rows), ma};
  }
  return out;
}

// random symmetric matrix with a prescribed spectrum: Q^T diag(eigs) Q where
// Q comes from Gram-Schmidt on a seeded Gaussian matrix
inline std::vector<double> symmetric_with_spectrum(const std::vector<double>& eigs,
                                                   crft::Rng& rng) {
  const std::size_t n = eigs.size();
  std::vector<double> q(n * n);
  for (double& v : q) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < n; ++k) d += q[i * n + k] * q[j * n + k];
      for (std::size_t k = 0; k < n; ++k) q[i * n + k] -= d * q[j * n + k];
    }
    double nrm = 0.0;
    for (std::size_t k = 0; k < n; ++k) nrm += q[i * n + k] * q[i * n + k];
    nrm = std::sqrt(nrm);
    for (std::size_t k = 0; k < n; ++k) q[i * n + k] /= nrm;
  }
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q[k * n + i] * eigs[k] * q[k * n + j];
      a[i * n + j] = s;
    }
  return a;
}

}  // namespace oracle
