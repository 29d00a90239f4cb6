#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace crft {

struct Dataset {
  Tensor images;  // [N, C, H, W], values in [0, 1]
  std::vector<int> labels;
  int num_classes = 0;
  std::string split;  // "train" | "test"
  std::string source_id;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_values() const { return size() == 0 ? 0 : images.size() / size(); }

  Tensor batch_images(const std::vector<std::size_t>& idx) const {
    const std::size_t sv = sample_values();
    std::vector<std::size_t> shape = images.shape;
    shape[0] = idx.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy(images.data.begin() + idx[i] * sv, images.data.begin() + (idx[i] + 1) * sv,
                out.data.begin() + i * sv);
    }
    return out;
  }

  std::vector<int> batch_labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
  }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("idx: truncated while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// IDX-format loader (images magic 0x00000803, labels magic 0x00000801,
// big-endian headers). Pixels are scaled by 1/255 into [0, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              const std::string& split = "train", int num_classes = 10) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("idx: cannot open image file " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("idx: cannot open label file " + labels_path);

  const std::uint32_t img_magic = detail::read_be32(img, "image magic");
  if (img_magic != 0x00000803u) {
    throw FormatError("idx: bad image magic " + std::to_string(img_magic) + " (want 2051) in " +
                      images_path);
  }
  const std::uint32_t n_img = detail::read_be32(img, "image count");
  const std::uint32_t rows = detail::read_be32(img, "rows");
  const std::uint32_t cols = detail::read_be32(img, "cols");

  const std::uint32_t lab_magic = detail::read_be32(lab, "label magic");
  if (lab_magic != 0x00000801u) {
    throw FormatError("idx: bad label magic " + std::to_string(lab_magic) + " (want 2049) in " +
                      labels_path);
  }
  const std::uint32_t n_lab = detail::read_be32(lab, "label count");
  if (n_img != n_lab) {
    throw ConsistencyError("idx: image count " + std::to_string(n_img) +
                           " does not match label count " + std::to_string(n_lab));
  }

  Dataset ds;
  ds.split = split;
  ds.num_classes = num_classes;
  ds.source_id = images_path;
  ds.images = Tensor({n_img, 1, rows, cols});
  const std::size_t total = static_cast<std::size_t>(n_img) * rows * cols;
  std::vector<unsigned char> buf(total);
  img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(total));
  if (img.gcount() != static_cast<std::streamsize>(total)) {
    throw FormatError("idx: truncated image payload in " + images_path);
  }
  for (std::size_t i = 0; i < total; ++i) ds.images.data[i] = buf[i] / 255.0;

  std::vector<unsigned char> lbuf(n_lab);
  lab.read(reinterpret_cast<char*>(lbuf.data()), n_lab);
  if (lab.gcount() != static_cast<std::streamsize>(n_lab)) {
    throw FormatError("idx: truncated label payload in " + labels_path);
  }
  ds.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) {
    if (lbuf[i] >= num_classes) {
      throw ConsistencyError("idx: label " + std::to_string(int(lbuf[i])) + " outside class range");
    }
    ds.labels[i] = lbuf[i];
  }
  return ds;
}

enum class SynthKind { blobs, spiral };

// Deterministic synthetic tasks. blobs: Gaussian clusters around seeded
// per-class centers rendered as images; spiral: interleaved arms in a
// 2-feature layout [N, 1, 1, 2].
inline Dataset synth_dataset(SynthKind kind, std::size_t n, int classes, double noise,
                             std::uint64_t seed, std::size_t side = 28) {
  if (classes < 1 || n < static_cast<std::size_t>(classes)) {
    throw ConfigError("synth_dataset: need n >= classes >= 1");
  }
  Dataset ds;
  ds.num_classes = classes;
  ds.split = "train";
  Rng rng = Rng::derive(seed, "synth");
  if (kind == SynthKind::blobs) {
    ds.source_id = "blobs-" + std::to_string(seed);
    const std::size_t feat = side * side;
    std::vector<std::vector<double>> centers(classes, std::vector<double>(feat));
    for (int c = 0; c < classes; ++c)
      for (std::size_t j = 0; j < feat; ++j) centers[c][j] = rng.uniform(0.15, 0.85);
    ds.images = Tensor({n, 1, side, side});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      // deterministic even class partition: n % classes lowest classes get one extra
      const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
      ds.labels[i] = c;
      double* px = ds.images.data.data() + i * feat;
      for (std::size_t j = 0; j < feat; ++j) {
        px[j] = std::clamp(centers[c][j] + noise * rng.normal(), 0.0, 1.0);
      }
    }
  } else {
    ds.source_id = "spiral-" + std::to_string(seed);
    ds.images = Tensor({n, 1, 1, 2});
    ds.labels.resize(n);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
      ds.labels[i] = c;
      const double t = rng.uniform();  // radius parameter in [0,1)
      const double theta = two_pi * (1.5 * t + static_cast<double>(c) / classes);
      const double r = 0.1 + 0.85 * t;
      ds.images.data[i * 2 + 0] = std::clamp(0.5 + 0.5 * r * std::cos(theta) + noise * rng.normal(), 0.0, 1.0);
      ds.images.data[i * 2 + 1] = std::clamp(0.5 + 0.5 * r * std::sin(theta) + noise * rng.normal(), 0.0, 1.0);
    }
  }
  return ds;
}

inline Dataset gather(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.source_id = ds.source_id;
  out.images = ds.batch_images(idx);
  out.labels = ds.batch_labels(idx);
  return out;
}

inline Dataset take(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.size());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Dataset out = gather(ds, idx);
  out.source_id = ds.source_id + "[0:" + std::to_string(n) + "]";
  return out;
}

// Keep samples whose label is in `keep`; optionally relabel to 0..k-1 by
// position in `keep`.
inline Dataset select_labels(const Dataset& ds, const std::vector<int>& keep, bool relabel) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), ds.labels[i]) != keep.end()) idx.push_back(i);
  }
  Dataset out = gather(ds, idx);
  if (relabel) {
    for (int& y : out.labels) {
      y = static_cast<int>(std::find(keep.begin(), keep.end(), y) - keep.begin());
    }
    out.num_classes = static_cast<int>(keep.size());
  }
  out.source_id = ds.source_id + "#subset" + std::to_string(keep.size());
  return out;
}

// First n training samples under the run seed's shuffle; shared by Wanda and
// PTQ calibration so pruning/quantization comparisons see identical data.
inline Dataset calib_slice(const Dataset& train, std::uint64_t run_seed, std::size_t n) {
  if (train.size() == 0) throw CalibError("calib_slice: empty training set");
  std::vector<std::size_t> idx = shuffled_indices(train.size(), Rng::derive(run_seed, "calib"));
  idx.resize(std::min(n, idx.size()));
  Dataset out = gather(train, idx);
  out.source_id = train.source_id + "#calib" + std::to_string(idx.size());
  return out;
}

}  // namespace crft
