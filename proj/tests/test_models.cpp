#include <catch2/catch_amalgamated.hpp>

#include "crft/model.hpp"
#include "crft/train.hpp"
#include "oracles.hpp"

using namespace crft;

TEST_CASE("mlp build produces the expected weight chain") {
  const ModelSpec spec = ModelSpec::make_mlp({784, 128, 10}, 7);
  const ParamSet ps = build(spec);
  REQUIRE(ps.size() == 4);
  CHECK(ps[0].name == "fc0");
  CHECK(ps[0].tensor.shape == std::vector<std::size_t>{128, 784});
  CHECK(ps[1].name == "fc0.b");
  CHECK(ps[2].name == "head");
  CHECK(ps[2].tensor.shape == std::vector<std::size_t>{10, 128});
  CHECK(ps[3].name == "head.b");
  for (double v : ps[1].tensor.data) CHECK(v == 0.0);
}

TEST_CASE("vit patch must divide the image side") {
  ModelSpec bad = ModelSpec::make_vit(1, 10, 28, /*patch=*/5);
  CHECK_THROWS_AS(build(bad), SpecError);
  ModelSpec good = ModelSpec::make_vit(1, 10, 28, /*patch=*/7);
  CHECK_NOTHROW(build(good));
}

TEST_CASE("same spec and seed build bit-identical ParamSets") {
  const ModelSpec spec = ModelSpec::make_vit(1234);
  CHECK(bitwise_equal(build(spec), build(spec)));
  ModelSpec other = spec;
  other.seed = 1235;
  CHECK_FALSE(bitwise_equal(build(spec), build(other)));
}

TEST_CASE("weight init stays inside the scaled-uniform bound") {
  const ModelSpec spec = ModelSpec::make_mlp({20, 12, 4}, 3, 1, 1);
  for (const Param& p : build(spec)) {
    if (p.role != ParamRole::weight) continue;
    const double bound =
        std::sqrt(6.0 / static_cast<double>(p.tensor.shape[0] + p.tensor.shape[1]));
    for (double v : p.tensor.data) {
      CHECK(std::fabs(v) <= bound);
    }
  }
}

TEST_CASE("zero input through a zero-initialized head gives zero logits") {
  const ModelSpec spec = ModelSpec::make_mlp({16, 8, 4}, 5, 4, 1);
  ParamSet ps = build(spec);
  find_param(ps, "head")->tensor = Tensor({4, 8});
  const Tensor logits = eval_logits(spec, ps, Tensor({2, 1, 4, 4}));
  for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("identical samples produce identical logit rows") {
  const ModelSpec spec = ModelSpec::make_vit(9, 10, 28, 7, 16, 1, 2);
  const ParamSet ps = build(spec);
  Rng rng(10);
  Tensor one = Tensor::uniform({1, 1, 28, 28}, 0.0, 1.0, rng);
  Tensor two({2, 1, 28, 28});
  std::copy(one.data.begin(), one.data.end(), two.data.begin());
  std::copy(one.data.begin(), one.data.end(), two.data.begin() + one.size());
  const Tensor logits = eval_logits(spec, ps, two);
  for (std::size_t j = 0; j < 10; ++j) CHECK(logits.data[j] == logits.data[10 + j]);
}

TEST_CASE("tiny_vit forward has the contracted output shape") {
  const ModelSpec spec = ModelSpec::make_vit(2, 10, 28, 7, 32, 2, 2);
  const ParamSet ps = build(spec);
  Rng rng(11);
  const Tensor logits = eval_logits(spec, ps, Tensor::uniform({4, 1, 28, 28}, 0.0, 1.0, rng));
  CHECK(logits.shape == std::vector<std::size_t>{4, 10});
}

TEST_CASE("tiny_cnn forward shape and head geometry") {
  const ModelSpec spec = ModelSpec::make_cnn(3);
  const ParamSet ps = build(spec);
  CHECK(find_param(ps, "head")->tensor.shape == std::vector<std::size_t>{10, 16 * 6 * 6});
  Rng rng(12);
  const Tensor logits = eval_logits(spec, ps, Tensor::uniform({3, 1, 28, 28}, 0.0, 1.0, rng));
  CHECK(logits.shape == std::vector<std::size_t>{3, 10});
}

TEST_CASE("batch permutation permutes logits rows identically") {
  for (ModelKind kind : {ModelKind::mlp, ModelKind::tiny_cnn, ModelKind::tiny_vit}) {
    ModelSpec spec;
    switch (kind) {
      case ModelKind::mlp: spec = ModelSpec::make_mlp({784, 32, 10}, 4); break;
      case ModelKind::tiny_cnn: spec = ModelSpec::make_cnn(4); break;
      default: spec = ModelSpec::make_vit(4, 10, 28, 7, 16, 1, 2); break;
    }
    const ParamSet ps = build(spec);
    Rng rng(13);
    Tensor x = Tensor::uniform({4, 1, 28, 28}, 0.0, 1.0, rng);
    const Tensor base = eval_logits(spec, ps, x);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Tensor xp({4, 1, 28, 28});
    const std::size_t sv = 28 * 28;
    for (std::size_t i = 0; i < 4; ++i) {
      std::copy(x.data.begin() + perm[i] * sv, x.data.begin() + (perm[i] + 1) * sv,
                xp.data.begin() + i * sv);
    }
    const Tensor got = eval_logits(spec, ps, xp);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 10; ++j) {
        INFO(kind_name(kind));
        CHECK(got.data[i * 10 + j] == base.data[perm[i] * 10 + j]);
      }
  }
}

TEST_CASE("every weight receives gradient somewhere after one backward pass") {
  for (ModelKind kind : {ModelKind::mlp, ModelKind::tiny_cnn, ModelKind::tiny_vit}) {
    ModelSpec spec;
    switch (kind) {
      case ModelKind::mlp: spec = ModelSpec::make_mlp({784, 24, 10}, 6); break;
      case ModelKind::tiny_cnn: spec = ModelSpec::make_cnn(6); break;
      default: spec = ModelSpec::make_vit(6, 10, 28, 7, 16, 2, 2); break;
    }
    const ParamSet ps = build(spec);
    Rng rng(14);
    Tensor x = Tensor::uniform({4, 1, 28, 28}, 0.0, 1.0, rng);
    std::vector<Tensor> grads;
    batch_loss_fn(spec, x, {0, 3, 7, 9})(ps, &grads);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i].role != ParamRole::weight) continue;
      double mx = 0.0;
      for (double v : grads[i].data) mx = std::max(mx, std::fabs(v));
      INFO(std::string(kind_name(kind)) + " " + ps[i].name);
      CHECK(mx > 0.0);
    }
  }
}

TEST_CASE("tiny_vit closed-form parameter count matches the built set") {
  const ModelSpec spec = ModelSpec::make_vit(8);
  CHECK(param_count(spec) == flat_size(build(spec)));
  const ModelSpec cnn = ModelSpec::make_cnn(8);
  CHECK(param_count(cnn) == flat_size(build(cnn)));
  const ModelSpec mlp = ModelSpec::make_mlp({784, 256, 128, 10}, 8);
  CHECK(param_count(mlp) == flat_size(build(mlp)));
}

TEST_CASE("collect_activations shapes for a linear layer") {
  const ModelSpec spec = ModelSpec::make_mlp({784, 128, 10}, 15);
  const ParamSet ps = build(spec);
  Rng rng(16);
  const auto acts = collect_activations(spec, ps, Tensor::uniform({1, 1, 28, 28}, 0.0, 1.0, rng));
  REQUIRE(acts.count("fc0") == 1);
  CHECK(acts.at("fc0").shape == std::vector<std::size_t>{1, 784});
  CHECK(acts.at("head").shape == std::vector<std::size_t>{1, 128});
}

TEST_CASE("collect_activations on zero input is zero at the first site") {
  const ModelSpec spec = ModelSpec::make_mlp({784, 32, 10}, 15);
  const ParamSet ps = build(spec);
  const auto acts = collect_activations(spec, ps, Tensor({3, 1, 28, 28}));
  for (double v : acts.at("fc0").data) CHECK(v == 0.0);
}

TEST_CASE("collect_activations row count scales with tokens for tiny_vit") {
  const ModelSpec spec = ModelSpec::make_vit(17, 10, 28, 7, 16, 1, 2);
  const ParamSet ps = build(spec);
  Rng rng(18);
  const auto acts = collect_activations(spec, ps, Tensor::uniform({8, 1, 28, 28}, 0.0, 1.0, rng));
  const std::size_t tokens = spec.tokens();
  REQUIRE(tokens == 16);
  CHECK(acts.at("blk0.ffn1").shape[0] == 8 * tokens);
  CHECK(acts.at("blk0.ffn1").shape[1] == spec.dim);
  CHECK(acts.at("blk0.qkv").shape[0] == 8 * tokens);
  CHECK(acts.at("head").shape[0] == 8);  // pooled site sees one row per sample
}

TEST_CASE("collect_activations rejects an empty slice") {
  const ModelSpec spec = ModelSpec::make_mlp({784, 16, 10}, 19);
  const ParamSet ps = build(spec);
  CHECK_THROWS_AS(collect_activations(spec, ps, Tensor({0, 1, 28, 28})), CalibError);
}

TEST_CASE("conv activation matrix columns match the flattened kernel width") {
  const ModelSpec spec = ModelSpec::make_cnn(20);
  const ParamSet ps = build(spec);
  Rng rng(21);
  const auto acts = collect_activations(spec, ps, Tensor::uniform({2, 1, 28, 28}, 0.0, 1.0, rng));
  // conv0: 1x3x3 kernel -> 9 columns; 13x13 output positions per sample
  CHECK(acts.at("conv0").shape == std::vector<std::size_t>{2 * 13 * 13, 9});
  CHECK(acts.at("conv1").shape == std::vector<std::size_t>{2 * 6 * 6, 8 * 3 * 3});
}

TEST_CASE("forward rejects mismatched input geometry") {
  const ModelSpec spec = ModelSpec::make_vit(22);
  const ParamSet ps = build(spec);
  CHECK_THROWS_AS(eval_logits(spec, ps, Tensor({2, 1, 27, 27})), ShapeError);
}
