#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "model.hpp"
#include "param.hpp"

namespace crft {

enum class WeightGranularity { per_tensor, per_channel };
enum class ActRangeMode { minmax, percentile };

inline const char* granularity_name(WeightGranularity g) {
  return g == WeightGranularity::per_tensor ? "per_tensor" : "per_channel";
}

struct QuantConfig {
  int w_bits = 8;   // [2, 8]
  int a_bits = 16;  // [2, 16]; 16 means activations stay full precision
  WeightGranularity weight_granularity = WeightGranularity::per_channel;
  ActRangeMode act_range_mode = ActRangeMode::minmax;
  double percentile = 99.9;  // used in percentile mode
  std::size_t calib_size = 128;

  void validate() const {
    if (w_bits < 2 || w_bits > 8) throw ConfigError("quant: w_bits must be in [2,8]");
    if (a_bits < 2 || a_bits > 16) throw ConfigError("quant: a_bits must be in [2,16]");
    if (percentile <= 0.0 || percentile > 100.0)
      throw ConfigError("quant: percentile must be in (0,100]");
    if (calib_size == 0) throw ConfigError("quant: calib_size must be positive");
  }

  bool quantize_activations() const { return a_bits < 16; }
  std::string tag() const {
    return "W" + std::to_string(w_bits) + "A" + std::to_string(a_bits);
  }
};

// Symmetric integer grid: q in [-(2^{b-1}-1), +(2^{b-1}-1)], value = q * scale.
struct QuantizedTensor {
  std::vector<std::size_t> shape;
  std::vector<std::int8_t> q;
  std::vector<double> scales;  // 1 entry (per tensor) or rows (per channel)
  int bits = 8;
  WeightGranularity granularity = WeightGranularity::per_tensor;
};

// Per-site clip values |a| <= c derived from calibration; static thereafter.
struct ActRangeTable {
  std::map<std::string, double> clip;
};

inline int quant_qmax(int bits) { return (1 << (bits - 1)) - 1; }

// round half away from zero, the sign-symmetric rounding std::round provides
inline double qround(double x) { return std::round(x); }

namespace detail {

inline void quantize_group(const double* x, std::int8_t* q, std::size_t n, int qmax,
                           double& scale_out) {
  double mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, std::fabs(x[i]));
  if (mx == 0.0) {
    scale_out = 1.0;
    for (std::size_t i = 0; i < n; ++i) q[i] = 0;
    return;
  }
  const double s = mx / static_cast<double>(qmax);
  scale_out = s;
  for (std::size_t i = 0; i < n; ++i) {
    double v = qround(x[i] / s);
    v = std::clamp(v, -static_cast<double>(qmax), static_cast<double>(qmax));
    q[i] = static_cast<std::int8_t>(v);
  }
}

}  // namespace detail

inline QuantizedTensor quantize_symmetric(const Tensor& x, int bits, WeightGranularity gran) {
  if (bits < 2 || bits > 8) throw ConfigError("quantize_symmetric: bits must be in [2,8]");
  QuantizedTensor qt;
  qt.shape = x.shape;
  qt.bits = bits;
  qt.granularity = gran;
  qt.q.resize(x.size());
  const int qmax = quant_qmax(bits);
  if (gran == WeightGranularity::per_tensor || x.ndim() < 2) {
    qt.scales.resize(1);
    detail::quantize_group(x.data.data(), qt.q.data(), x.size(), qmax, qt.scales[0]);
  } else {
    // per output channel: one group per row of the out x (...) matricization
    const std::size_t rows = x.rows(), cols = x.cols();
    qt.scales.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      detail::quantize_group(x.data.data() + i * cols, qt.q.data() + i * cols, cols, qmax,
                             qt.scales[i]);
    }
  }
  return qt;
}

inline Tensor dequantize(const QuantizedTensor& qt) {
  Tensor out(qt.shape);
  if (qt.scales.size() == 1) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = static_cast<double>(qt.q[i]) * qt.scales[0];
  } else {
    const std::size_t rows = qt.shape[0], cols = out.size() / rows;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        out.data[i * cols + j] = static_cast<double>(qt.q[i * cols + j]) * qt.scales[i];
  }
  return out;
}

// Clip to [-c, c] then simulate b-bit symmetric quantization with s = c/qmax.
// c == 0 collapses the site to zero (only happens for identically-zero sites).
inline Tensor fake_quant_activations(const Tensor& x, double clip, int bits) {
  Tensor out(x.shape);
  if (clip == 0.0) return out;
  const int qmax = quant_qmax(bits);
  const double s = clip / static_cast<double>(qmax);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::clamp(x.data[i], -clip, clip);
    out.data[i] = qround(v / s) * s;
  }
  return out;
}

// Static activation ranges from a calibration slice: per site, max |a|
// (minmax) or the p-th percentile of |a| (nearest-rank) over the site's
// activation matrix.
inline ActRangeTable calibrate_activations(const ModelSpec& spec, const ParamSet& params,
                                           const Tensor& calib_images, const QuantConfig& cfg) {
  cfg.validate();
  if (calib_images.size() == 0 || calib_images.shape[0] == 0) {
    throw CalibError("calibrate_activations: empty calibration slice");
  }
  std::map<std::string, Tensor> acts = collect_activations(spec, params, calib_images);
  ActRangeTable table;
  for (auto& [name, mat] : acts) {
    double c = 0.0;
    if (cfg.act_range_mode == ActRangeMode::minmax) {
      for (double v : mat.data) c = std::max(c, std::fabs(v));
    } else {
      std::vector<double> mags(mat.data.size());
      for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::fabs(mat.data[i]);
      std::sort(mags.begin(), mags.end());
      const std::size_t k = mags.size();
      std::size_t rank = static_cast<std::size_t>(
          std::ceil(cfg.percentile / 100.0 * static_cast<double>(k)));
      rank = std::min(std::max<std::size_t>(rank, 1), k);
      c = mags[rank - 1];
    }
    table.clip[name] = c;
  }
  return table;
}

// Simulated-quantization model handle: weights replaced once by
// dequantize(quantize(w)); activations fake-quantized per forward when
// a_bits < 16. Biases and norm parameters stay full precision.
struct QuantizedModel {
  ModelSpec spec;
  ParamSet params;  // weights already dequantized
  QuantConfig cfg;
  ActRangeTable ranges;
  std::map<std::string, QuantizedTensor> qweights;

  ForwardHooks hooks() const {
    ForwardHooks h;
    if (cfg.quantize_activations()) {
      h.transform = [this](const std::string& site, const Tensor& x) {
        auto it = ranges.clip.find(site);
        if (it == ranges.clip.end()) {
          throw ConfigError("quantized forward: no activation range for site " + site);
        }
        return fake_quant_activations(x, it->second, cfg.a_bits);
      };
    }
    return h;
  }

  Tensor logits(const Tensor& x) const {
    ForwardHooks h = hooks();
    return eval_logits(spec, params, x, cfg.quantize_activations() ? &h : nullptr);
  }
};

inline QuantizedModel ptq_apply(const ModelSpec& spec, const ParamSet& params,
                                const QuantConfig& cfg, const ActRangeTable& ranges) {
  cfg.validate();
  QuantizedModel qm;
  qm.spec = spec;
  qm.params = params;
  qm.cfg = cfg;
  qm.ranges = ranges;
  for (Param& p : qm.params) {
    if (p.role != ParamRole::weight) continue;
    if (cfg.quantize_activations() && ranges.clip.find(p.name) == ranges.clip.end()) {
      throw ConfigError("ptq_apply: missing activation range for site " + p.name);
    }
    QuantizedTensor qt = quantize_symmetric(p.tensor, cfg.w_bits, cfg.weight_granularity);
    p.tensor = dequantize(qt);
    qm.qweights.emplace(p.name, std::move(qt));
  }
  return qm;
}

}  // namespace crft
