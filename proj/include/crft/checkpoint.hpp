#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "model.hpp"
#include "optim.hpp"
#include "param.hpp"
#include "prune.hpp"
#include "quant.hpp"

namespace crft {

using json = nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary checkpoint layout (all multi-byte integers little-endian):
//   magic "CRFT" | version u32 | manifest length u32 | manifest UTF-8 JSON |
//   tensor count u32 | per tensor: name length u16, name bytes,
//   dtype u8 (0 = f64, 1 = i8), ndim u8, dims u32[ndim], payload LE.
struct NamedTensor {
  std::string name;
  std::uint8_t dtype = 0;  // 0 = f64, 1 = i8
  std::vector<std::uint32_t> dims;
  std::vector<double> f64;
  std::vector<std::int8_t> i8;

  std::size_t count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string manifest_json = "{}";
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const NamedTensor& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size()) throw FormatError(std::string("checkpoint: truncated ") + what);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (std::uint16_t(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out += "CRFT";
  detail::put_u32(out, ckpt.version);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.manifest_json.size()));
  out += ckpt.manifest_json;
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    detail::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dtype));
    out.push_back(static_cast<char>(t.dims.size()));
    for (std::uint32_t d : t.dims) detail::put_u32(out, d);
    if (t.dtype == 0) {
      for (double v : t.f64) detail::put_f64(out, v);
    } else {
      for (std::int8_t v : t.i8) out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& buf) {
  detail::Reader r{buf};
  if (r.bytes(4, "magic") != "CRFT") throw FormatError("checkpoint: bad magic, expected CRFT");
  Checkpoint ckpt;
  ckpt.version = r.u32("version");
  if (ckpt.version != kCheckpointVersion) {
    throw VersionError("checkpoint: unknown format version " + std::to_string(ckpt.version));
  }
  const std::uint32_t mlen = r.u32("manifest length");
  ckpt.manifest_json = r.bytes(mlen, "manifest");
  const std::uint32_t count = r.u32("tensor count");
  ckpt.tensors.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor& t = ckpt.tensors[i];
    const std::uint16_t nlen = r.u16("name length");
    t.name = r.bytes(nlen, "name");
    t.dtype = static_cast<std::uint8_t>(r.bytes(1, "dtype")[0]);
    if (t.dtype > 1) throw FormatError("checkpoint: unknown dtype code for " + t.name);
    const std::uint8_t ndim = static_cast<std::uint8_t>(r.bytes(1, "ndim")[0]);
    t.dims.resize(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) t.dims[d] = r.u32("dim");
    const std::size_t n = t.count();
    if (t.dtype == 0) {
      t.f64.resize(n);
      for (std::size_t j = 0; j < n; ++j) t.f64[j] = r.f64("payload");
    } else {
      const std::string payload = r.bytes(n, "payload");
      t.i8.resize(n);
      std::memcpy(t.i8.data(), payload.data(), n);
    }
  }
  if (r.pos != buf.size()) throw FormatError("checkpoint: trailing bytes after tensor table");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open for writing: " + path);
  const std::string buf = encode_checkpoint(ckpt);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf);
}

// ---- model spec / manifest JSON --------------------------------------------

inline json model_spec_to_json(const ModelSpec& s) {
  json j;
  j["kind"] = kind_name(s.kind);
  j["image_side"] = s.image_side;
  j["image_channels"] = s.image_channels;
  j["num_classes"] = s.num_classes;
  j["seed"] = s.seed;
  switch (s.kind) {
    case ModelKind::mlp: j["widths"] = s.widths; break;
    case ModelKind::tiny_cnn:
      j["channels"] = s.channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case ModelKind::tiny_vit:
      j["patch"] = s.patch;
      j["dim"] = s.dim;
      j["depth"] = s.depth;
      j["heads"] = s.heads;
      j["mlp_ratio"] = s.mlp_ratio;
      break;
  }
  return j;
}

inline ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.image_side = j.value("image_side", std::size_t{28});
  s.image_channels = j.value("image_channels", std::size_t{1});
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.seed = j.value("seed", std::uint64_t{0});
  switch (s.kind) {
    case ModelKind::mlp: s.widths = j.at("widths").get<std::vector<std::size_t>>(); break;
    case ModelKind::tiny_cnn:
      s.channels = j.value("channels", s.channels);
      s.kernel = j.value("kernel", s.kernel);
      s.stride = j.value("stride", s.stride);
      break;
    case ModelKind::tiny_vit:
      s.patch = j.value("patch", s.patch);
      s.dim = j.value("dim", s.dim);
      s.depth = j.value("depth", s.depth);
      s.heads = j.value("heads", s.heads);
      s.mlp_ratio = j.value("mlp_ratio", s.mlp_ratio);
      break;
  }
  s.validate();
  return s;
}

inline json optimizer_to_json(const OptimizerConfig& c) {
  json j;
  j["kind"] = c.kind;
  j["lr"] = c.lr;
  if (c.kind == "sgd" || (c.kind == "sam" && c.sam_base == "sgd")) j["momentum"] = c.momentum;
  if (c.kind == "adam" || (c.kind == "sam" && c.sam_base == "adam")) {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
  }
  if (c.kind == "sam") {
    j["rho"] = c.rho;
    j["base"] = c.sam_base;
  }
  return j;
}

inline OptimizerConfig optimizer_from_json(const json& j) {
  OptimizerConfig c;
  c.kind = j.at("kind").get<std::string>();
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.rho = j.value("rho", c.rho);
  c.sam_base = j.value("base", c.sam_base);
  c.validate();
  return c;
}

// Everything needed to bit-reproduce a run.
struct RunManifest {
  std::string experiment_id;
  ModelSpec model;
  OptimizerConfig optimizer;
  int epochs = 5;
  std::size_t batch_size = 8;
  std::string lr_schedule = "cosine";
  std::uint64_t seed = 0;
  std::string train_dataset_id;
  std::string test_dataset_id;
  std::string toolkit_version = kToolkitVersion;
  json extra;  // per-epoch history, timings, quant/prune metadata

  json to_json() const {
    json j;
    j["experiment_id"] = experiment_id;
    j["model"] = model_spec_to_json(model);
    j["optimizer"] = optimizer_to_json(optimizer);
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr_schedule"] = lr_schedule;
    j["seed"] = seed;
    j["datasets"] = {{"train", train_dataset_id}, {"test", test_dataset_id}};
    j["toolkit_version"] = toolkit_version;
    if (!extra.is_null()) j["extra"] = extra;
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.experiment_id = j.value("experiment_id", "");
    m.model = model_spec_from_json(j.at("model"));
    m.optimizer = optimizer_from_json(j.at("optimizer"));
    m.epochs = j.value("epochs", 5);
    m.batch_size = j.value("batch_size", std::size_t{8});
    m.lr_schedule = j.value("lr_schedule", "cosine");
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("datasets")) {
      m.train_dataset_id = j["datasets"].value("train", "");
      m.test_dataset_id = j["datasets"].value("test", "");
    }
    m.toolkit_version = j.value("toolkit_version", kToolkitVersion);
    if (j.contains("extra")) m.extra = j["extra"];
    return m;
  }
};

// ---- ParamSet / mask / quant persistence ------------------------------------

inline NamedTensor to_named_f64(const std::string& name, const Tensor& t) {
  NamedTensor nt;
  nt.name = name;
  nt.dtype = 0;
  for (std::size_t d : t.shape) nt.dims.push_back(static_cast<std::uint32_t>(d));
  nt.f64 = t.data;
  return nt;
}

inline Tensor from_named_f64(const NamedTensor& nt) {
  std::vector<std::size_t> shape(nt.dims.begin(), nt.dims.end());
  return Tensor(shape, nt.f64);
}

// Model checkpoint: manifest JSON + one f64 tensor per parameter; parameter
// order and roles live in the manifest under "params".
inline Checkpoint checkpoint_from_params(const ParamSet& params, const RunManifest& manifest) {
  Checkpoint ckpt;
  json mj = manifest.to_json();
  json plist = json::array();
  for (const Param& p : params) {
    plist.push_back({{"name", p.name}, {"role", role_name(p.role)}});
    ckpt.tensors.push_back(to_named_f64(p.name, p.tensor));
  }
  mj["params"] = plist;
  ckpt.manifest_json = mj.dump();
  return ckpt;
}

inline ParamSet params_from_checkpoint(const Checkpoint& ckpt) {
  json mj = json::parse(ckpt.manifest_json);
  if (!mj.contains("params")) throw FormatError("checkpoint: manifest lacks params list");
  ParamSet ps;
  for (const auto& e : mj["params"]) {
    const std::string name = e.at("name").get<std::string>();
    const NamedTensor* nt = ckpt.find(name);
    if (!nt || nt->dtype != 0) {
      throw FormatError("checkpoint: missing f64 tensor for parameter " + name);
    }
    ps.push_back({name, from_named_f64(*nt), role_from_name(e.at("role").get<std::string>())});
  }
  return ps;
}

inline RunManifest manifest_from_checkpoint(const Checkpoint& ckpt) {
  return RunManifest::from_json(json::parse(ckpt.manifest_json));
}

// Masks ride along as "<weight>.mask" i8 companion tensors (values 0/1).
inline void attach_masks(Checkpoint& ckpt, const PruneMask& mask) {
  json mj = json::parse(ckpt.manifest_json);
  mj["prune"] = {{"structure", mask.structure.str()},
                 {"target_sparsity", mask.target_sparsity},
                 {"scoring", scoring_name(mask.scoring)}};
  ckpt.manifest_json = mj.dump();
  for (const auto& [name, m] : mask.masks) {
    NamedTensor nt;
    nt.name = name + ".mask";
    nt.dtype = 1;
    for (std::size_t d : m.shape) nt.dims.push_back(static_cast<std::uint32_t>(d));
    nt.i8.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) nt.i8[i] = m.data[i] != 0.0 ? 1 : 0;
    ckpt.tensors.push_back(std::move(nt));
  }
}

// Quantized checkpoint: per weight "<name>.q" (i8) and "<name>.scale" (f64),
// "<site>.clip" (f64 scalar) for activation ranges, full-precision tensors
// for everything else.
inline Checkpoint checkpoint_from_quantized(const QuantizedModel& qm, RunManifest manifest) {
  Checkpoint ckpt;
  json mj = manifest.to_json();
  json plist = json::array();
  for (const Param& p : qm.params) {
    plist.push_back({{"name", p.name}, {"role", role_name(p.role)}});
    if (p.role != ParamRole::weight) {
      ckpt.tensors.push_back(to_named_f64(p.name, p.tensor));
    }
  }
  mj["params"] = plist;
  mj["quant"] = {{"w_bits", qm.cfg.w_bits},
                 {"a_bits", qm.cfg.a_bits},
                 {"granularity", granularity_name(qm.cfg.weight_granularity)}};
  ckpt.manifest_json = mj.dump();
  for (const auto& [name, qt] : qm.qweights) {
    NamedTensor q;
    q.name = name + ".q";
    q.dtype = 1;
    for (std::size_t d : qt.shape) q.dims.push_back(static_cast<std::uint32_t>(d));
    q.i8 = qt.q;
    ckpt.tensors.push_back(std::move(q));
    NamedTensor s;
    s.name = name + ".scale";
    s.dtype = 0;
    s.dims = {static_cast<std::uint32_t>(qt.scales.size())};
    s.f64 = qt.scales;
    ckpt.tensors.push_back(std::move(s));
  }
  for (const auto& [site, c] : qm.ranges.clip) {
    NamedTensor t;
    t.name = site + ".clip";
    t.dtype = 0;
    t.dims = {1};
    t.f64 = {c};
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

// Reconstructs the simulated-quantization handle exactly (weights from q * s).
inline QuantizedModel quantized_from_checkpoint(const Checkpoint& ckpt) {
  json mj = json::parse(ckpt.manifest_json);
  if (!mj.contains("quant")) throw FormatError("checkpoint: not a quantized checkpoint");
  QuantizedModel qm;
  qm.spec = model_spec_from_json(mj.at("model"));
  qm.cfg.w_bits = mj["quant"].at("w_bits").get<int>();
  qm.cfg.a_bits = mj["quant"].at("a_bits").get<int>();
  qm.cfg.weight_granularity = mj["quant"].at("granularity").get<std::string>() == "per_tensor"
                                  ? WeightGranularity::per_tensor
                                  : WeightGranularity::per_channel;
  for (const auto& e : mj.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    const ParamRole role = role_from_name(e.at("role").get<std::string>());
    if (role != ParamRole::weight) {
      const NamedTensor* nt = ckpt.find(name);
      if (!nt) throw FormatError("checkpoint: missing tensor " + name);
      qm.params.push_back({name, from_named_f64(*nt), role});
      continue;
    }
    const NamedTensor* qn = ckpt.find(name + ".q");
    const NamedTensor* sn = ckpt.find(name + ".scale");
    if (!qn || !sn) throw FormatError("checkpoint: missing quantized payload for " + name);
    QuantizedTensor qt;
    qt.shape.assign(qn->dims.begin(), qn->dims.end());
    qt.q = qn->i8;
    qt.scales = sn->f64;
    qt.bits = qm.cfg.w_bits;
    qt.granularity = qm.cfg.weight_granularity;
    qm.params.push_back({name, dequantize(qt), role});
    qm.qweights.emplace(name, std::move(qt));
  }
  for (const NamedTensor& t : ckpt.tensors) {
    if (t.name.size() > 5 && t.name.substr(t.name.size() - 5) == ".clip") {
      qm.ranges.clip[t.name.substr(0, t.name.size() - 5)] = t.f64.at(0);
    }
  }
  return qm;
}

}  // namespace crft
