#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace crft {

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

enum class Padding { valid, same };

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, Padding pad) {
  if (pad == Padding::same) return (in + stride - 1) / stride;
  if (k > in) {
    throw ShapeError("conv2d: kernel size " + std::to_string(k) +
                     " exceeds input size " + std::to_string(in) + " under valid padding");
  }
  return (in - k) / stride + 1;
}

// Reverse-mode tape. Primitives compute their value immediately and, when
// gradients are enabled, record a closure that scatters the output gradient
// back to the inputs. One backward pass consumes the tape.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var leaf(Tensor value) { return push(std::move(value)); }

  const Tensor& val(Var v) const { return vals_[v.id]; }

  // Gradient of the loss w.r.t. v; zeros if the loss never touched v.
  const Tensor& grad(Var v) {
    ensure_grad(v.id);
    return grads_[v.id];
  }

  void backward(Var loss) {
    if (!grad_enabled_) throw TapeError("backward: tape was created without gradients");
    if (consumed_) throw TapeError("backward: tape already consumed by a previous backward pass");
    if (val(loss).size() != 1) throw TapeError("backward: loss must be a scalar");
    consumed_ = true;
    ensure_grad(loss.id);
    grads_[loss.id].data[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  // ---- primitives ----------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0]) {
      throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out({m, n});
    gemm_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
    Var o = push(std::move(out));
    record([this, a, b, o, m, k, n] {
      const Tensor& g = grads_[o.id];
      ensure_grad(a.id);
      ensure_grad(b.id);
      gemm_nt(g.data.data(), vals_[b.id].data.data(), grads_[a.id].data.data(), m, n, k);
      gemm_tn(vals_[a.id].data.data(), g.data.data(), grads_[b.id].data.data(), m, k, n);
    });
    return o;
  }

  // y[r x out] = x[r x in] * w[out x in]^T (+ bias[out])
  Var linear(Var x, Var w, Var bias = {}) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tx.ndim() != 2 || tw.ndim() != 2 || tx.shape[1] != tw.shape[1]) {
      throw ShapeError("linear: incompatible shapes " + tx.shape_str() + " x " + tw.shape_str() + "^T");
    }
    const std::size_t r = tx.shape[0], in = tx.shape[1], out = tw.shape[0];
    Tensor y({r, out});
    gemm_nt(tx.data.data(), tw.data.data(), y.data.data(), r, in, out);
    if (bias.valid()) {
      const Tensor& tb = val(bias);
      if (tb.size() != out) {
        throw ShapeError("linear: bias length " + std::to_string(tb.size()) +
                         " does not match output width " + std::to_string(out));
      }
      for (std::size_t i = 0; i < r; ++i) {
        double* row = y.data.data() + i * out;
        for (std::size_t j = 0; j < out; ++j) row[j] += tb.data[j];
      }
    }
    Var o = push(std::move(y));
    record([this, x, w, bias, o, r, in, out] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      ensure_grad(w.id);
      gemm_nn(g.data.data(), vals_[w.id].data.data(), grads_[x.id].data.data(), r, out, in);
      gemm_tn(g.data.data(), vals_[x.id].data.data(), grads_[w.id].data.data(), r, out, in);
      if (bias.valid()) {
        ensure_grad(bias.id);
        double* gb = grads_[bias.id].data.data();
        for (std::size_t i = 0; i < r; ++i) {
          const double* row = g.data.data() + i * out;
          for (std::size_t j = 0; j < out; ++j) gb[j] += row[j];
        }
      }
    });
    return o;
  }

  // Batched matmul: [g x m x k] * [g x k x n] -> [g x m x n]
  Var bmm(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.ndim() != 3 || tb.ndim() != 3 || ta.shape[0] != tb.shape[0] || ta.shape[2] != tb.shape[1]) {
      throw ShapeError("bmm: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
    }
    const std::size_t g = ta.shape[0], m = ta.shape[1], k = ta.shape[2], n = tb.shape[2];
    Tensor out({g, m, n});
    for (std::size_t i = 0; i < g; ++i) {
      gemm_nn(ta.data.data() + i * m * k, tb.data.data() + i * k * n,
              out.data.data() + i * m * n, m, k, n);
    }
    Var o = push(std::move(out));
    record([this, a, b, o, g, m, k, n] {
      const Tensor& go = grads_[o.id];
      ensure_grad(a.id);
      ensure_grad(b.id);
      for (std::size_t i = 0; i < g; ++i) {
        const double* gi = go.data.data() + i * m * n;
        gemm_nt(gi, vals_[b.id].data.data() + i * k * n,
                grads_[a.id].data.data() + i * m * k, m, n, k);
        gemm_tn(vals_[a.id].data.data() + i * m * k, gi,
                grads_[b.id].data.data() + i * k * n, m, k, n);
      }
    });
    return o;
  }

  // Cross-correlation, NCHW x FCkk -> NFH'W'.
  Var conv2d(Var x, Var w, Var bias, std::size_t stride, Padding pad) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tx.ndim() != 4 || tw.ndim() != 4 || tx.shape[1] != tw.shape[1]) {
      throw ShapeError("conv2d: incompatible shapes " + tx.shape_str() + " vs kernel " + tw.shape_str());
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::size_t N = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
    const std::size_t F = tw.shape[0], kh = tw.shape[2], kw = tw.shape[3];
    const std::size_t OH = conv_out_dim(H, kh, stride, pad);
    const std::size_t OW = conv_out_dim(W, kw, stride, pad);
    // "same": pad so output covers ceil(in/stride), split evenly, extra at the end.
    const std::ptrdiff_t ph = pad == Padding::same
        ? static_cast<std::ptrdiff_t>(std::max<std::size_t>((OH - 1) * stride + kh, H) - H) / 2 : 0;
    const std::ptrdiff_t pw = pad == Padding::same
        ? static_cast<std::ptrdiff_t>(std::max<std::size_t>((OW - 1) * stride + kw, W) - W) / 2 : 0;
    Tensor out({N, F, OH, OW});
    const double* xb = tx.data.data();
    const double* wb = tw.data.data();
    const double* bb = bias.valid() ? val(bias).data.data() : nullptr;
    if (bb && val(bias).size() != F) throw ShapeError("conv2d: bias length must equal filter count");
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            double s = bb ? bb[f] : 0.0;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t a = 0; a < kh; ++a) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + a) - ph;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t b = 0; b < kw; ++b) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + b) - pw;
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  s += xb[((n * C + c) * H + ih) * W + iw] * wb[((f * C + c) * kh + a) * kw + b];
                }
              }
            out.data[((n * F + f) * OH + oh) * OW + ow] = s;
          }
    Var o = push(std::move(out));
    record([this, x, w, bias, o, stride, ph, pw, N, C, H, W, F, kh, kw, OH, OW] {
      const Tensor& go = grads_[o.id];
      ensure_grad(x.id);
      ensure_grad(w.id);
      double* gx = grads_[x.id].data.data();
      double* gw = grads_[w.id].data.data();
      double* gb = nullptr;
      if (bias.valid()) {
        ensure_grad(bias.id);
        gb = grads_[bias.id].data.data();
      }
      const double* xv = vals_[x.id].data.data();
      const double* wv = vals_[w.id].data.data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
              const double g = go.data[((n * F + f) * OH + oh) * OW + ow];
              if (gb) gb[f] += g;
              for (std::size_t c = 0; c < C; ++c)
                for (std::size_t a = 0; a < kh; ++a) {
                  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + a) - ph;
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t b = 0; b < kw; ++b) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + b) - pw;
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    const std::size_t xi = ((n * C + c) * H + ih) * W + iw;
                    const std::size_t wi = ((f * C + c) * kh + a) * kw + b;
                    gx[xi] += g * wv[wi];
                    gw[wi] += g * xv[xi];
                  }
                }
            }
    });
    return o;
  }

  Var add(Var a, Var b) {
    const Tensor& ta = val(a);
    require_same_shape(ta, val(b), "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += val(b).data[i];
    Var o = push(std::move(out));
    record([this, a, b, o] {
      const Tensor& g = grads_[o.id];
      ensure_grad(a.id);
      ensure_grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) {
        grads_[a.id].data[i] += g.data[i];
        grads_[b.id].data[i] += g.data[i];
      }
    });
    return o;
  }

  // x[(B*T) x d] + rows[T x d] tiled over the leading batch dimension.
  Var add_rows(Var x, Var rows) {
    const Tensor& tx = val(x);
    const Tensor& tr = val(rows);
    if (tx.ndim() != 2 || tr.ndim() != 2 || tx.shape[1] != tr.shape[1] ||
        tx.shape[0] % tr.shape[0] != 0) {
      throw ShapeError("add_rows: " + tx.shape_str() + " not tileable by " + tr.shape_str());
    }
    const std::size_t T = tr.shape[0], d = tr.shape[1], R = tx.shape[0];
    Tensor out = tx;
    for (std::size_t i = 0; i < R; ++i) {
      const double* pr = tr.data.data() + (i % T) * d;
      double* po = out.data.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) po[j] += pr[j];
    }
    Var o = push(std::move(out));
    record([this, x, rows, o, T, d, R] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      ensure_grad(rows.id);
      for (std::size_t i = 0; i < g.size(); ++i) grads_[x.id].data[i] += g.data[i];
      double* gr = grads_[rows.id].data.data();
      for (std::size_t i = 0; i < R; ++i) {
        const double* pg = g.data.data() + i * d;
        double* prow = gr + (i % T) * d;
        for (std::size_t j = 0; j < d; ++j) prow[j] += pg[j];
      }
    });
    return o;
  }

  Var scale(Var x, double c) {
    Tensor out = val(x);
    for (double& v : out.data) v *= c;
    Var o = push(std::move(out));
    record([this, x, o, c] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) grads_[x.id].data[i] += c * g.data[i];
    });
    return o;
  }

  Var mul(Var a, Var b) {
    const Tensor& ta = val(a);
    require_same_shape(ta, val(b), "mul");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= val(b).data[i];
    Var o = push(std::move(out));
    record([this, a, b, o] {
      const Tensor& g = grads_[o.id];
      ensure_grad(a.id);
      ensure_grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) {
        grads_[a.id].data[i] += g.data[i] * vals_[b.id].data[i];
        grads_[b.id].data[i] += g.data[i] * vals_[a.id].data[i];
      }
    });
    return o;
  }

  Var reshape(Var x, std::vector<std::size_t> shape) {
    const Tensor& tx = val(x);
    if (Tensor::count(shape) != tx.size()) {
      throw ShapeError("reshape: cannot view " + tx.shape_str() + " as " +
                       Tensor::shape_str(shape));
    }
    Tensor out(std::move(shape), tx.data);
    Var o = push(std::move(out));
    record([this, x, o] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) grads_[x.id].data[i] += g.data[i];
    });
    return o;
  }

  Var permute(Var x, std::vector<std::size_t> axes) {
    const Tensor& tx = val(x);
    if (axes.size() != tx.ndim()) throw ShapeError("permute: axes rank mismatch");
    Tensor out = permute_copy(tx, axes);
    Var o = push(std::move(out));
    std::vector<std::size_t> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
    record([this, x, o, inv] {
      ensure_grad(x.id);
      Tensor gx = permute_copy(grads_[o.id], inv);
      for (std::size_t i = 0; i < gx.size(); ++i) grads_[x.id].data[i] += gx.data[i];
    });
    return o;
  }

  // Sub-tensor at `index` along axis 0.
  Var slice0(Var x, std::size_t index) {
    const Tensor& tx = val(x);
    if (tx.ndim() < 1 || index >= tx.shape[0]) throw IndexError("slice0: index out of range");
    std::vector<std::size_t> shape(tx.shape.begin() + 1, tx.shape.end());
    const std::size_t stride = Tensor::count(shape);
    Tensor out(shape);
    std::copy(tx.data.begin() + index * stride, tx.data.begin() + (index + 1) * stride,
              out.data.begin());
    Var o = push(std::move(out));
    record([this, x, o, index, stride] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      double* gx = grads_[x.id].data.data() + index * stride;
      for (std::size_t i = 0; i < stride; ++i) gx[i] += g.data[i];
    });
    return o;
  }

  Var relu(Var x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    Var o = push(std::move(out));
    record([this, x, o] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (vals_[x.id].data[i] > 0.0) grads_[x.id].data[i] += g.data[i];
      }
    });
    return o;
  }

  // Exact GELU: x * Phi(x).
  Var gelu(Var x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v * normal_cdf(v);
    Var o = push(std::move(out));
    record([this, x, o] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = vals_[x.id].data[i];
        const double d = normal_cdf(v) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        grads_[x.id].data[i] += g.data[i] * d;
      }
    });
    return o;
  }

  // Row-wise softmax over the last dimension, max-subtracted.
  Var softmax(Var x) {
    const Tensor& tx = val(x);
    if (tx.ndim() < 1) throw ShapeError("softmax: rank-0 input");
    const std::size_t d = tx.shape.back();
    const std::size_t rows = tx.size() / d;
    Tensor out = tx;
    softmax_rows(out.data.data(), rows, d);
    Var o = push(std::move(out));
    record([this, x, o, rows, d] {
      const Tensor& g = grads_[o.id];
      const Tensor& y = vals_[o.id];
      ensure_grad(x.id);
      double* gx = grads_[x.id].data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data.data() + r * d;
        const double* yr = y.data.data() + r * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += gr[j] * yr[j];
        double* gxr = gx + r * d;
        for (std::size_t j = 0; j < d; ++j) gxr[j] += (gr[j] - s) * yr[j];
      }
    });
    return o;
  }

  // Per-row normalization over the last dimension d, scaled/shifted by gamma/beta[d].
  Var layernorm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    if (tx.ndim() < 1) throw ShapeError("layernorm: rank-0 input");
    const std::size_t d = tx.shape.back();
    if (tg.size() != d || tb.size() != d) {
      throw ShapeError("layernorm: gamma/beta length must be " + std::to_string(d));
    }
    if (eps <= 0.0) throw ShapeError("layernorm: eps must be positive");
    const std::size_t rows = tx.size() / d;
    Tensor out(tx.shape);
    Tensor xhat(tx.shape);
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = tx.data.data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xr[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[r] = is;
      double* hr = xhat.data.data() + r * d;
      double* orow = out.data.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        hr[j] = (xr[j] - mean) * is;
        orow[j] = tg.data[j] * hr[j] + tb.data[j];
      }
    }
    Var o = push(std::move(out));
    record([this, x, gamma, beta, o, rows, d, xhat = std::move(xhat),
            inv_std = std::move(inv_std)] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      ensure_grad(gamma.id);
      ensure_grad(beta.id);
      double* gx = grads_[x.id].data.data();
      double* gg = grads_[gamma.id].data.data();
      double* gb = grads_[beta.id].data.data();
      const double* gam = vals_[gamma.id].data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data.data() + r * d;
        const double* hr = xhat.data.data() + r * d;
        double sum_gy = 0.0, sum_gyh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gy = gr[j] * gam[j];
          sum_gy += gy;
          sum_gyh += gy * hr[j];
          gg[j] += gr[j] * hr[j];
          gb[j] += gr[j];
        }
        const double inv_d = 1.0 / static_cast<double>(d);
        double* gxr = gx + r * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double gy = gr[j] * gam[j];
          gxr[j] += inv_std[r] * (gy - inv_d * sum_gy - hr[j] * inv_d * sum_gyh);
        }
      }
    });
    return o;
  }

  // [B x T x d] -> [B x d], mean over the middle axis.
  Var mean_mid(Var x) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 3) throw ShapeError("mean_mid: expected rank-3, got " + tx.shape_str());
    const std::size_t B = tx.shape[0], T = tx.shape[1], d = tx.shape[2];
    Tensor out({B, d});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        const double* xr = tx.data.data() + (b * T + t) * d;
        double* orow = out.data.data() + b * d;
        for (std::size_t j = 0; j < d; ++j) orow[j] += xr[j];
      }
    const double inv_t = 1.0 / static_cast<double>(T);
    for (double& v : out.data) v *= inv_t;
    Var o = push(std::move(out));
    record([this, x, o, B, T, d, inv_t] {
      const Tensor& g = grads_[o.id];
      ensure_grad(x.id);
      double* gx = grads_[x.id].data.data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) {
          const double* gr = g.data.data() + b * d;
          double* gxr = gx + (b * T + t) * d;
          for (std::size_t j = 0; j < d; ++j) gxr[j] += gr[j] * inv_t;
        }
    });
    return o;
  }

  Var sum_all(Var x) {
    double s = 0.0;
    for (double v : val(x).data) s += v;
    Var o = push(Tensor::scalar(s));
    record([this, x, o] {
      const double g = grads_[o.id].data[0];
      ensure_grad(x.id);
      for (double& v : grads_[x.id].data) v += g;
    });
    return o;
  }

  // Mean over the batch of -log softmax(logits)[label]; fused and stable.
  Var cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor& tl = val(logits);
    if (tl.ndim() != 2) throw ShapeError("cross_entropy: logits must be [batch x classes]");
    const std::size_t B = tl.shape[0], C = tl.shape[1];
    if (labels.size() != B) {
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                       std::to_string(B));
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= C) {
        throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                         std::to_string(C) + ")");
      }
    }
    Tensor probs = tl;
    softmax_rows(probs.data.data(), B, C);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const double* lr = tl.data.data() + i * C;
      double mx = lr[0];
      for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, lr[j]);
      double lse = 0.0;
      for (std::size_t j = 0; j < C; ++j) lse += std::exp(lr[j] - mx);
      loss += (mx + std::log(lse)) - lr[static_cast<std::size_t>(labels[i])];
    }
    loss /= static_cast<double>(B);
    Var o = push(Tensor::scalar(loss));
    record([this, logits, o, labels, B, C, probs = std::move(probs)] {
      const double g = grads_[o.id].data[0] / static_cast<double>(B);
      ensure_grad(logits.id);
      double* gl = grads_[logits.id].data.data();
      for (std::size_t i = 0; i < B; ++i) {
        const double* pr = probs.data.data() + i * C;
        double* gr = gl + i * C;
        for (std::size_t j = 0; j < C; ++j) gr[j] += g * pr[j];
        gr[static_cast<std::size_t>(labels[i])] -= g;
      }
    });
    return o;
  }

  static Tensor permute_copy(const Tensor& t, const std::vector<std::size_t>& axes) {
    const std::size_t nd = t.ndim();
    std::vector<std::size_t> out_shape(nd), in_strides(nd), out_strides(nd);
    std::size_t s = 1;
    for (std::size_t i = nd; i-- > 0;) {
      in_strides[i] = s;
      s *= t.shape[i];
    }
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = t.shape[axes[i]];
    s = 1;
    for (std::size_t i = nd; i-- > 0;) {
      out_strides[i] = s;
      s *= out_shape[i];
    }
    Tensor out(out_shape);
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
      std::size_t src = 0;
      for (std::size_t i = 0; i < nd; ++i) src += idx[i] * in_strides[axes[i]];
      out.data[flat] = t.data[src];
      for (std::size_t i = nd; i-- > 0;) {
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
      }
    }
    return out;
  }

 private:
  static double normal_cdf(double v) { return 0.5 * (1.0 + std::erf(v * 0.70710678118654752440)); }

  static void softmax_rows(double* p, std::size_t rows, std::size_t d) {
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = p + r * d;
      double mx = row[0];
      for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
    }
  }

  Var push(Tensor value) {
    vals_.push_back(std::move(value));
    grads_.emplace_back();
    return Var{static_cast<std::uint32_t>(vals_.size() - 1)};
  }

  void ensure_grad(std::uint32_t id) {
    if (grads_[id].shape.empty() && !vals_[id].shape.empty()) {
      grads_[id] = Tensor::zeros(vals_[id].shape);
    }
  }

  template <class F>
  void record(F&& f) {
    if (grad_enabled_) steps_.emplace_back(std::forward<F>(f));
  }

  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<std::function<void()>> steps_;
  bool grad_enabled_;
  bool consumed_ = false;
};

}  // namespace crft
