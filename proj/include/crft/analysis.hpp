#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "param.hpp"

namespace crft {

// Singular values of a 2-D matrix by one-sided Jacobi: rotate column pairs
// until all columns are mutually orthogonal; the singular values are the
// remaining column norms. Accurate to near machine precision on the small
// dense matrices analyzed here.
inline std::vector<double> singular_values(const Tensor& w) {
  std::size_t m = w.rows(), n = w.cols();
  std::vector<double> a;
  if (m >= n) {
    a = w.data;
  } else {
    // work on the transpose so columns <= rows
    a.resize(w.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) a[j * m + i] = w.data[i * n + j];
    std::swap(m, n);
  }
  const double eps = 1e-15;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a[i * n + p], xq = a[i * n + q];
          app += xp * xp;
          aqq += xq * xq;
          apq += xp * xq;
        }
        if (std::fabs(apq) <= eps * std::sqrt(app * aqq)) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a[i * n + p], xq = a[i * n + q];
          a[i * n + p] = c * xp - s * xq;
          a[i * n + q] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a[i * n + j] * a[i * n + j];
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  return sv;
}

struct RankReport {
  std::string layer;
  std::vector<double> singular_values;      // descending
  std::vector<double> cumulative_variance;  // normalized sigma^2 mass
  double spectral_entropy = 0.0;            // auxiliary: -sum p ln p over p = sigma^2/sum

  // Smallest component count k (1-based) whose cumulative variance reaches t.
  int components_at(double t) const {
    for (std::size_t k = 0; k < cumulative_variance.size(); ++k) {
      if (cumulative_variance[k] >= t) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(cumulative_variance.size());
  }
};

inline std::vector<double> cumulative_variance_of(const std::vector<double>& sv) {
  double total = 0.0;
  for (double s : sv) total += s * s;
  std::vector<double> cum(sv.size(), 1.0);
  if (total == 0.0) return cum;
  double acc = 0.0;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    acc += sv[i] * sv[i];
    cum[i] = acc / total;
  }
  return cum;
}

// Spectrum of the out x in matricization (conv kernels flatten to
// out x in*kh*kw). `center` subtracts column means first (PCA reading).
inline RankReport singular_spectrum(const Tensor& w, bool center, const std::string& layer = "") {
  RankReport rep;
  rep.layer = layer;
  Tensor mat({w.rows(), w.cols()}, w.data);
  if (center) {
    const std::size_t m = mat.shape[0], n = mat.shape[1];
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += mat.data[i * n + j];
      mean /= static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) mat.data[i * n + j] -= mean;
    }
  }
  rep.singular_values = singular_values(mat);
  rep.cumulative_variance = cumulative_variance_of(rep.singular_values);
  double total = 0.0;
  for (double s : rep.singular_values) total += s * s;
  if (total > 0.0) {
    for (double s : rep.singular_values) {
      const double p = s * s / total;
      if (p > 0.0) rep.spectral_entropy -= p * std::log(p);
    }
  }
  return rep;
}

struct ActChannelStats {
  double min = 0.0, max = 0.0, mean = 0.0, stddev = 0.0, max_abs = 0.0;
};

struct ActStatsReport {
  std::string layer;
  std::vector<ActChannelStats> channels;
  // max over channels of max_abs divided by the median channel max_abs
  double outlier_ratio = 1.0;
};

// Per-channel statistics over the sample axis of a [samples x channels]
// activation matrix.
inline ActStatsReport activation_stats_for(const Tensor& acts, const std::string& layer = "") {
  if (acts.ndim() != 2 || acts.shape[0] < 2) {
    throw StatsError("activation_stats: need a [samples x channels] matrix with >= 2 samples");
  }
  const std::size_t rows = acts.shape[0], cols = acts.shape[1];
  ActStatsReport rep;
  rep.layer = layer;
  rep.channels.resize(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    ActChannelStats& ch = rep.channels[j];
    ch.min = acts.data[j];
    ch.max = acts.data[j];
    double sum = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double v = acts.data[i * cols + j];
      ch.min = std::min(ch.min, v);
      ch.max = std::max(ch.max, v);
      ch.max_abs = std::max(ch.max_abs, std::fabs(v));
      sum += v;
    }
    ch.mean = sum / static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double c = acts.data[i * cols + j] - ch.mean;
      var += c * c;
    }
    ch.stddev = std::sqrt(var / static_cast<double>(rows));
  }
  std::vector<double> mags(cols);
  for (std::size_t j = 0; j < cols; ++j) mags[j] = rep.channels[j].max_abs;
  std::sort(mags.begin(), mags.end());
  const double top = mags.back();
  const double med = cols % 2 == 1 ? mags[cols / 2]
                                   : 0.5 * (mags[cols / 2 - 1] + mags[cols / 2]);
  rep.outlier_ratio = top == 0.0 ? 1.0 : top / med;
  return rep;
}

inline std::map<std::string, ActStatsReport> activation_stats(
    const std::map<std::string, Tensor>& acts) {
  std::map<std::string, ActStatsReport> out;
  for (const auto& [name, mat] : acts) out.emplace(name, activation_stats_for(mat, name));
  return out;
}

struct GroupRankReport {
  std::string group;
  std::vector<double> mean_cumulative_variance;
  std::size_t members = 0;

  int components_at(double t) const {
    for (std::size_t k = 0; k < mean_cumulative_variance.size(); ++k) {
      if (mean_cumulative_variance[k] >= t) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(mean_cumulative_variance.size());
  }
};

namespace detail {

inline bool name_in_group(const std::string& name, const std::string& which) {
  // matches "blk<i>.qkv" / "blk<i>.ffn<j>"
  if (name.rfind("blk", 0) != 0) return false;
  const auto dot = name.find('.');
  if (dot == std::string::npos) return false;
  const std::string tail = name.substr(dot + 1);
  if (which == "qkv") return tail == "qkv";
  return tail.rfind("ffn", 0) == 0 && tail.size() > 3;
}

inline GroupRankReport group_curve(const ParamSet& params, const std::string& which,
                                   bool center) {
  GroupRankReport rep;
  rep.group = which;
  for (const Param& p : params) {
    if (p.role != ParamRole::weight || !name_in_group(p.name, which)) continue;
    RankReport r = singular_spectrum(p.tensor, center, p.name);
    if (rep.mean_cumulative_variance.empty()) {
      rep.mean_cumulative_variance = r.cumulative_variance;
    } else {
      if (rep.mean_cumulative_variance.size() != r.cumulative_variance.size()) {
        throw StructureError("group_blocks: mismatched spectrum lengths within group " + which);
      }
      for (std::size_t i = 0; i < r.cumulative_variance.size(); ++i) {
        rep.mean_cumulative_variance[i] += r.cumulative_variance[i];
      }
    }
    rep.members += 1;
  }
  if (rep.members == 0) {
    throw StructureError("group_blocks: no tensors matched group " + which +
                         " (tiny_vit naming convention required)");
  }
  for (double& v : rep.mean_cumulative_variance) v /= static_cast<double>(rep.members);
  return rep;
}

}  // namespace detail

// Mean cumulative-variance curves for the feed-forward and QKV weight groups
// of a tiny_vit ParamSet.
struct BlockGroups {
  GroupRankReport ffn;
  GroupRankReport qkv;
};

inline BlockGroups group_blocks(const ParamSet& params, bool center = false) {
  return BlockGroups{detail::group_curve(params, "ffn", center),
                     detail::group_curve(params, "qkv", center)};
}

}  // namespace crft
