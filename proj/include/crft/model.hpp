#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "param.hpp"
#include "tape.hpp"

namespace crft {

enum class ModelKind { mlp, tiny_cnn, tiny_vit };

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::tiny_cnn: return "tiny_cnn";
    default: return "tiny_vit";
  }
}

inline ModelKind kind_from_name(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "tiny_cnn") return ModelKind::tiny_cnn;
  if (s == "tiny_vit") return ModelKind::tiny_vit;
  throw ConfigError("unknown model kind: " + s);
}

// Fully determines parameter shapes and initialization: same spec + seed
// gives a bit-identical ParamSet.
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::size_t image_side = 28;
  std::size_t image_channels = 1;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;

  // mlp: full width chain, input..output
  std::vector<std::size_t> widths = {784, 256, 128, 10};

  // tiny_cnn
  std::vector<std::size_t> channels = {8, 16};
  std::size_t kernel = 3;
  std::size_t stride = 2;

  // tiny_vit
  std::size_t patch = 7;
  std::size_t dim = 48;
  std::size_t depth = 2;
  std::size_t heads = 3;
  std::size_t mlp_ratio = 4;

  static ModelSpec make_mlp(std::vector<std::size_t> widths, std::uint64_t seed,
                            std::size_t side = 28, std::size_t ch = 1) {
    ModelSpec s;
    s.kind = ModelKind::mlp;
    s.num_classes = widths.back();
    s.widths = std::move(widths);
    s.seed = seed;
    s.image_side = side;
    s.image_channels = ch;
    return s;
  }

  static ModelSpec make_cnn(std::uint64_t seed, std::size_t classes = 10, std::size_t side = 28,
                            std::size_t ch = 1) {
    ModelSpec s;
    s.kind = ModelKind::tiny_cnn;
    s.num_classes = classes;
    s.seed = seed;
    s.image_side = side;
    s.image_channels = ch;
    return s;
  }

  static ModelSpec make_vit(std::uint64_t seed, std::size_t classes = 10, std::size_t side = 28,
                            std::size_t patch = 7, std::size_t dim = 48, std::size_t depth = 2,
                            std::size_t heads = 3, std::size_t ch = 1) {
    ModelSpec s;
    s.kind = ModelKind::tiny_vit;
    s.num_classes = classes;
    s.seed = seed;
    s.image_side = side;
    s.image_channels = ch;
    s.patch = patch;
    s.dim = dim;
    s.depth = depth;
    s.heads = heads;
    return s;
  }

  std::size_t input_features() const { return image_channels * image_side * image_side; }
  std::size_t tokens() const { return (image_side / patch) * (image_side / patch); }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t ffn_hidden() const { return mlp_ratio * dim; }

  void validate() const {
    if (num_classes < 1) throw SpecError("num_classes must be positive");
    switch (kind) {
      case ModelKind::mlp:
        if (widths.size() < 2) throw SpecError("mlp needs at least input and output widths");
        if (widths.back() != num_classes)
          throw SpecError("mlp output width " + std::to_string(widths.back()) +
                          " != num_classes " + std::to_string(num_classes));
        break;
      case ModelKind::tiny_cnn: {
        if (channels.empty()) throw SpecError("tiny_cnn needs at least one conv layer");
        std::size_t side = image_side;
        for (std::size_t i = 0; i < channels.size(); ++i) {
          if (kernel > side)
            throw SpecError("tiny_cnn: conv" + std::to_string(i) + " kernel " +
                            std::to_string(kernel) + " exceeds feature side " + std::to_string(side));
          side = (side - kernel) / stride + 1;
        }
        break;
      }
      case ModelKind::tiny_vit:
        if (patch == 0 || image_side % patch != 0)
          throw SpecError("tiny_vit: patch " + std::to_string(patch) + " does not divide image side " +
                          std::to_string(image_side));
        if (heads == 0 || dim % heads != 0)
          throw SpecError("tiny_vit: heads " + std::to_string(heads) + " do not divide dim " +
                          std::to_string(dim));
        if (depth == 0) throw SpecError("tiny_vit: depth must be positive");
        break;
    }
  }
};

namespace detail {

inline Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace detail

inline ParamSet build(const ModelSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, "init");
  ParamSet ps;
  auto weight = [&](const std::string& name, std::vector<std::size_t> shape, std::size_t fin,
                    std::size_t fout) {
    ps.push_back({name, detail::glorot_uniform(std::move(shape), fin, fout, rng), ParamRole::weight});
  };
  auto bias = [&](const std::string& name, std::size_t n) {
    ps.push_back({name, Tensor::zeros({n}), ParamRole::bias});
  };
  switch (spec.kind) {
    case ModelKind::mlp:
      for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
        const bool last = l + 2 == spec.widths.size();
        const std::string base = last ? "head" : "fc" + std::to_string(l);
        weight(base, {out, in}, in, out);
        bias(base + ".b", out);
      }
      break;
    case ModelKind::tiny_cnn: {
      std::size_t cin = spec.image_channels;
      std::size_t side = spec.image_side;
      for (std::size_t l = 0; l < spec.channels.size(); ++l) {
        const std::size_t f = spec.channels[l];
        const std::string base = "conv" + std::to_string(l);
        weight(base, {f, cin, spec.kernel, spec.kernel}, cin * spec.kernel * spec.kernel,
               f * spec.kernel * spec.kernel);
        bias(base + ".b", f);
        cin = f;
        side = (side - spec.kernel) / spec.stride + 1;
      }
      const std::size_t feat = cin * side * side;
      weight("head", {spec.num_classes, feat}, feat, spec.num_classes);
      bias("head.b", spec.num_classes);
      break;
    }
    case ModelKind::tiny_vit: {
      const std::size_t d = spec.dim;
      const std::size_t p2 = spec.image_channels * spec.patch * spec.patch;
      weight("patch_embed", {d, p2}, p2, d);
      bias("patch_embed.b", d);
      // Learned position embedding, zero-init. Additive like a bias, so it is
      // exempt from pruning/quantization.
      ps.push_back({"pos_embed", Tensor::zeros({spec.tokens(), d}), ParamRole::bias});
      for (std::size_t i = 0; i < spec.depth; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        ps.push_back({blk + ".ln1.g", Tensor::full({d}, 1.0), ParamRole::norm});
        ps.push_back({blk + ".ln1.b", Tensor::zeros({d}), ParamRole::norm});
        weight(blk + ".qkv", {3 * d, d}, d, 3 * d);
        bias(blk + ".qkv.b", 3 * d);
        weight(blk + ".proj", {d, d}, d, d);
        bias(blk + ".proj.b", d);
        ps.push_back({blk + ".ln2.g", Tensor::full({d}, 1.0), ParamRole::norm});
        ps.push_back({blk + ".ln2.b", Tensor::zeros({d}), ParamRole::norm});
        const std::size_t h = spec.ffn_hidden();
        weight(blk + ".ffn1", {h, d}, d, h);
        bias(blk + ".ffn1.b", h);
        weight(blk + ".ffn2", {d, h}, h, d);
        bias(blk + ".ffn2.b", d);
      }
      weight("head", {spec.num_classes, d}, d, spec.num_classes);
      bias("head.b", spec.num_classes);
      break;
    }
  }
  return ps;
}

// Closed-form parameter count, cross-checked against build() in tests.
inline std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  switch (spec.kind) {
    case ModelKind::mlp:
      for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l)
        n += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
      break;
    case ModelKind::tiny_cnn: {
      std::size_t cin = spec.image_channels, side = spec.image_side;
      for (std::size_t f : spec.channels) {
        n += f * cin * spec.kernel * spec.kernel + f;
        cin = f;
        side = (side - spec.kernel) / spec.stride + 1;
      }
      n += spec.num_classes * (cin * side * side) + spec.num_classes;
      break;
    }
    case ModelKind::tiny_vit: {
      const std::size_t d = spec.dim, h = spec.ffn_hidden();
      n = d * spec.image_channels * spec.patch * spec.patch + d;  // patch embed
      n += spec.tokens() * d;                                     // pos embed
      n += spec.depth * (2 * d +                   // ln1
                         3 * d * d + 3 * d +       // qkv
                         d * d + d +               // proj
                         2 * d +                   // ln2
                         h * d + h + d * h + d);   // ffn
      n += spec.num_classes * d + spec.num_classes;
      break;
    }
  }
  return n;
}

// Reorders [N,C,H,W] into patch-major token rows [N*T, C*p*p].
inline Tensor patchify(const Tensor& x, std::size_t patch) {
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t gh = H / patch, gw = W / patch, T = gh * gw;
  Tensor out({N * T, C * patch * patch});
  std::size_t row = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ty = 0; ty < gh; ++ty)
      for (std::size_t tx = 0; tx < gw; ++tx) {
        double* dst = out.data.data() + (row++) * out.shape[1];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t py = 0; py < patch; ++py)
            for (std::size_t px = 0; px < patch; ++px)
              *dst++ = x.data[((n * C + c) * H + ty * patch + py) * W + tx * patch + px];
      }
  return out;
}

// Interpose on the inputs of named linear/conv sites during evaluation.
// `transform` rewrites the raw input (simulated activation quantization);
// `record` receives the activation matrix (rows x in-features).
struct ForwardHooks {
  std::function<Tensor(const std::string&, const Tensor&)> transform;
  std::function<void(const std::string&, const Tensor&)> record;
};

namespace detail {

// im2col rows for one conv site: [N*OH*OW, C*kh*kw], valid padding.
inline Tensor conv_input_rows(const Tensor& x, std::size_t kh, std::size_t kw,
                              std::size_t stride) {
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t OH = (H - kh) / stride + 1, OW = (W - kw) / stride + 1;
  Tensor out({N * OH * OW, C * kh * kw});
  std::size_t row = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double* dst = out.data.data() + (row++) * out.shape[1];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b)
              *dst++ = x.data[((n * C + c) * H + oh * stride + a) * W + ow * stride + b];
      }
  return out;
}

struct ForwardCtx {
  Tape& tape;
  const ParamSet& params;
  const std::vector<Var>& vars;
  const ForwardHooks* hooks;

  Var p(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name == name) return vars[i];
    }
    throw SpecError("model forward: missing parameter " + name);
  }

  // Runs hooks for a 2-D linear site and returns the (possibly transformed) input.
  Var site_2d(const std::string& name, Var x) const {
    if (!hooks) return x;
    Var out = x;
    if (hooks->transform) out = tape.leaf(hooks->transform(name, tape.val(x)));
    if (hooks->record) hooks->record(name, tape.val(out));
    return out;
  }

  // Conv sites transform the raw 4-D input; the recorder sees im2col rows.
  Var site_conv(const std::string& name, Var x, std::size_t k, std::size_t stride) const {
    if (!hooks) return x;
    Var out = x;
    if (hooks->transform) out = tape.leaf(hooks->transform(name, tape.val(x)));
    if (hooks->record) hooks->record(name, conv_input_rows(tape.val(out), k, k, stride));
    return out;
  }
};

inline Var forward_mlp(const ModelSpec& spec, const ForwardCtx& c, const Tensor& x) {
  const std::size_t B = x.shape[0];
  Var h = c.tape.leaf(Tensor({B, x.size() / B}, x.data));
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const bool last = l + 2 == spec.widths.size();
    const std::string base = last ? "head" : "fc" + std::to_string(l);
    h = c.site_2d(base, h);
    h = c.tape.linear(h, c.p(base), c.p(base + ".b"));
    if (!last) h = c.tape.relu(h);
  }
  return h;
}

inline Var forward_cnn(const ModelSpec& spec, const ForwardCtx& c, const Tensor& x) {
  Var h = c.tape.leaf(x);
  for (std::size_t l = 0; l < spec.channels.size(); ++l) {
    const std::string base = "conv" + std::to_string(l);
    h = c.site_conv(base, h, spec.kernel, spec.stride);
    h = c.tape.conv2d(h, c.p(base), c.p(base + ".b"), spec.stride, Padding::valid);
    h = c.tape.relu(h);
  }
  const Tensor& t = c.tape.val(h);
  h = c.tape.reshape(h, {t.shape[0], t.size() / t.shape[0]});
  h = c.site_2d("head", h);
  return c.tape.linear(h, c.p("head"), c.p("head.b"));
}

inline Var forward_vit(const ModelSpec& spec, const ForwardCtx& c, const Tensor& x) {
  const std::size_t B = x.shape[0], T = spec.tokens(), d = spec.dim;
  const std::size_t H = spec.heads, dh = spec.head_dim();
  Var tok = c.tape.leaf(patchify(x, spec.patch));
  tok = c.site_2d("patch_embed", tok);
  Var h = c.tape.linear(tok, c.p("patch_embed"), c.p("patch_embed.b"));
  h = c.tape.add_rows(h, c.p("pos_embed"));
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const std::string blk = "blk" + std::to_string(i);
    Var a = c.tape.layernorm(h, c.p(blk + ".ln1.g"), c.p(blk + ".ln1.b"), 1e-5);
    a = c.site_2d(blk + ".qkv", a);
    Var qkv = c.tape.linear(a, c.p(blk + ".qkv"), c.p(blk + ".qkv.b"));  // [B*T, 3d]
    qkv = c.tape.reshape(qkv, {B, T, 3, H, dh});
    qkv = c.tape.permute(qkv, {2, 0, 3, 1, 4});  // [3, B, H, T, dh]
    Var q = c.tape.reshape(c.tape.slice0(qkv, 0), {B * H, T, dh});
    Var k = c.tape.reshape(c.tape.slice0(qkv, 1), {B * H, T, dh});
    Var v = c.tape.reshape(c.tape.slice0(qkv, 2), {B * H, T, dh});
    Var scores = c.tape.bmm(q, c.tape.permute(k, {0, 2, 1}));
    scores = c.tape.scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = c.tape.softmax(scores);
    Var o = c.tape.bmm(attn, v);  // [B*H, T, dh]
    o = c.tape.permute(c.tape.reshape(o, {B, H, T, dh}), {0, 2, 1, 3});
    o = c.tape.reshape(o, {B * T, d});
    o = c.site_2d(blk + ".proj", o);
    h = c.tape.add(h, c.tape.linear(o, c.p(blk + ".proj"), c.p(blk + ".proj.b")));
    Var f = c.tape.layernorm(h, c.p(blk + ".ln2.g"), c.p(blk + ".ln2.b"), 1e-5);
    f = c.site_2d(blk + ".ffn1", f);
    f = c.tape.gelu(c.tape.linear(f, c.p(blk + ".ffn1"), c.p(blk + ".ffn1.b")));
    f = c.site_2d(blk + ".ffn2", f);
    h = c.tape.add(h, c.tape.linear(f, c.p(blk + ".ffn2"), c.p(blk + ".ffn2.b")));
  }
  Var pooled = c.tape.mean_mid(c.tape.reshape(h, {B, T, d}));
  pooled = c.site_2d("head", pooled);
  return c.tape.linear(pooled, c.p("head"), c.p("head.b"));
}

}  // namespace detail

// Class logits for a batch. `vars` must be params leafed onto `tape` in order.
inline Var forward_logits(const ModelSpec& spec, const ParamSet& params,
                          const std::vector<Var>& vars, Tape& tape, const Tensor& x,
                          const ForwardHooks* hooks = nullptr) {
  spec.validate();
  if (hooks && hooks->transform && tape.grad_enabled()) {
    throw ConfigError("forward_logits: activation transforms are evaluation-only");
  }
  if (spec.kind == ModelKind::mlp) {
    // mlp accepts images or pre-flattened feature rows
    const bool flat_ok = x.ndim() == 2 && x.shape[1] == spec.widths.front();
    const bool img_ok = x.ndim() == 4 && x.size() / x.shape[0] == spec.widths.front();
    if (!flat_ok && !img_ok) {
      throw ShapeError("forward_logits: input " + x.shape_str() + " does not flatten to width " +
                       std::to_string(spec.widths.front()));
    }
  } else if (x.ndim() != 4 || x.shape[1] != spec.image_channels ||
             x.shape[2] != spec.image_side || x.shape[3] != spec.image_side) {
    throw ShapeError("forward_logits: input " + x.shape_str() + " does not match model geometry");
  }
  detail::ForwardCtx c{tape, params, vars, hooks};
  switch (spec.kind) {
    case ModelKind::mlp: return detail::forward_mlp(spec, c, x);
    case ModelKind::tiny_cnn: return detail::forward_cnn(spec, c, x);
    default: return detail::forward_vit(spec, c, x);
  }
}

inline std::vector<Var> leaf_params(Tape& tape, const ParamSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Param& p : params) vars.push_back(tape.leaf(p.tensor));
  return vars;
}

// Evaluation-only logits (no gradients recorded).
inline Tensor eval_logits(const ModelSpec& spec, const ParamSet& params, const Tensor& x,
                          const ForwardHooks* hooks = nullptr) {
  Tape tape(false);
  std::vector<Var> vars = leaf_params(tape, params);
  Var out = forward_logits(spec, params, vars, tape, x, hooks);
  return tape.val(out);
}

// Activation matrices (rows x in-features) of every linear/conv weight site,
// gathered over a calibration slice.
inline std::map<std::string, Tensor> collect_activations(const ModelSpec& spec,
                                                         const ParamSet& params,
                                                         const Tensor& images,
                                                         std::size_t batch = 64) {
  if (images.size() == 0 || images.shape[0] == 0) {
    throw CalibError("collect_activations: empty calibration slice");
  }
  std::map<std::string, std::vector<double>> rows;
  std::map<std::string, std::size_t> width;
  ForwardHooks hooks;
  hooks.record = [&](const std::string& name, const Tensor& mat) {
    auto& dst = rows[name];
    dst.insert(dst.end(), mat.data.begin(), mat.data.end());
    width[name] = mat.shape[1];
  };
  const std::size_t N = images.shape[0];
  const std::size_t sample = images.size() / N;
  for (std::size_t off = 0; off < N; off += batch) {
    const std::size_t b = std::min(batch, N - off);
    std::vector<std::size_t> shape = images.shape;
    shape[0] = b;
    Tensor xb(shape, std::vector<double>(images.data.begin() + off * sample,
                                         images.data.begin() + (off + b) * sample));
    eval_logits(spec, params, xb, &hooks);
  }
  std::map<std::string, Tensor> out;
  for (auto& [name, data] : rows) {
    const std::size_t w = width[name];
    const std::size_t r = data.size() / w;
    out.emplace(name, Tensor({r, w}, std::move(data)));
  }
  return out;
}

}  // namespace crft
