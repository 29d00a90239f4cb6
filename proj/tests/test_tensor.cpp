#include <catch2/catch_amalgamated.hpp>

#include "crft/tape.hpp"
#include "oracles.hpp"

using namespace crft;

namespace {

Tensor run_matmul(const Tensor& a, const Tensor& b) {
  Tape t(false);
  return t.val(t.matmul(t.leaf(a), t.leaf(b)));
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(run_matmul(eye, m).data == m.data);
}

TEST_CASE("matmul hand sum") {
  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 1}, {3, 4});
  const Tensor c = run_matmul(a, b);
  REQUIRE(c.shape == std::vector<std::size_t>{1, 1});
  CHECK(c.data[0] == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
  Rng rng(42);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor a = Tensor::uniform({3, 4}, -2.0, 2.0, rng);
    Tensor b = Tensor::uniform({4, 2}, -2.0, 2.0, rng);
    const Tensor got = run_matmul(a, b);
    const Tensor want = oracle::matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i) {
      // both paths accumulate over the inner index in the same order,
      // so equality is exact
      CHECK(got.data[i] == want.data[i]);
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t(false);
  Var a = t.leaf(Tensor({2, 3}));
  Var b = t.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
  CHECK_THROWS_WITH(t.matmul(a, b), Catch::Matchers::ContainsSubstring("[2x3]") &&
                                        Catch::Matchers::ContainsSubstring("[2x2]"));
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(7);
  Tensor x = Tensor::uniform({1, 1, 4, 4}, 0.0, 1.0, rng);
  Tensor w({1, 1, 1, 1}, {1.0});
  Tape t(false);
  const Tensor y = t.val(t.conv2d(t.leaf(x), t.leaf(w), {}, 1, Padding::valid));
  CHECK(y.data == x.data);
}

TEST_CASE("conv2d zero input") {
  Tensor x({2, 1, 5, 5});
  Rng rng(9);
  Tensor w = Tensor::uniform({3, 1, 2, 2}, -1.0, 1.0, rng);
  Tape t(false);
  const Tensor y = t.val(t.conv2d(t.leaf(x), t.leaf(w), {}, 1, Padding::valid));
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches nested-loop oracle exactly") {
  Rng rng(11);
  Tensor x = Tensor::uniform({1, 1, 4, 4}, -1.0, 1.0, rng);
  Tensor w = Tensor::uniform({1, 1, 2, 2}, -1.0, 1.0, rng);
  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    Tape t(false);
    const Tensor got = t.val(t.conv2d(t.leaf(x), t.leaf(w), {}, stride, Padding::valid));
    const Tensor want = oracle::conv2d_valid(x, w, stride);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data[i] == want.data[i]);
  }
}

TEST_CASE("conv2d valid output geometry") {
  Tape t(false);
  Var x = t.leaf(Tensor({1, 1, 28, 28}));
  Var w = t.leaf(Tensor({4, 1, 3, 3}));
  const Tensor y = t.val(t.conv2d(x, w, {}, 2, Padding::valid));
  CHECK(y.shape == std::vector<std::size_t>{1, 4, 13, 13});
}

TEST_CASE("conv2d same padding keeps ceil(H/stride)") {
  Tape t(false);
  Var x = t.leaf(Tensor({1, 1, 7, 7}));
  Var w = t.leaf(Tensor({2, 1, 3, 3}));
  const Tensor y = t.val(t.conv2d(x, w, {}, 2, Padding::same));
  CHECK(y.shape == std::vector<std::size_t>{1, 2, 4, 4});
}

TEST_CASE("conv2d kernel larger than input errors under valid") {
  Tape t(false);
  Var x = t.leaf(Tensor({1, 1, 2, 2}));
  Var w = t.leaf(Tensor({1, 1, 3, 3}));
  CHECK_THROWS_AS(t.conv2d(x, w, {}, 1, Padding::valid), ShapeError);
}

TEST_CASE("layernorm constant row is zeroed by eps") {
  Tape t(false);
  Var x = t.leaf(Tensor::full({2, 4}, 3.0));
  Var g = t.leaf(Tensor::full({4}, 1.0));
  Var b = t.leaf(Tensor({4}));
  const Tensor y = t.val(t.layernorm(x, g, b, 1e-5));
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("layernorm gamma zero broadcasts beta") {
  Rng rng(3);
  Tape t(false);
  Var x = t.leaf(Tensor::uniform({3, 5}, -2.0, 2.0, rng));
  Var g = t.leaf(Tensor({5}));
  Var b = t.leaf(Tensor({5}, {0.5, -1.0, 2.0, 0.0, 7.0}));
  const Tensor y = t.val(t.layernorm(x, g, b, 1e-5));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(y.data[i * 5 + j] == t.val(b).data[j]);
}

TEST_CASE("layernorm normalizes a random row") {
  Rng rng(5);
  Tape t(false);
  Var x = t.leaf(Tensor::uniform({1, 64}, -3.0, 3.0, rng));
  Var g = t.leaf(Tensor::full({64}, 1.0));
  Var b = t.leaf(Tensor({64}));
  const Tensor y = t.val(t.layernorm(x, g, b, 1e-5));
  double mean = 0.0;
  for (double v : y.data) mean += v;
  mean /= 64.0;
  double var = 0.0;
  for (double v : y.data) var += (v - mean) * (v - mean);
  var /= 64.0;
  CHECK(std::fabs(mean) < 1e-12);
  CHECK(std::fabs(var - 1.0) < 1e-4);
}

TEST_CASE("softmax symmetry") {
  Tape t(false);
  const Tensor y = t.val(t.softmax(t.leaf(Tensor({1, 3}))));
  for (double v : y.data) CHECK(v == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax large logits stay stable") {
  Tape t(false);
  const Tensor y = t.val(t.softmax(t.leaf(Tensor({1, 2}, {1000.0, 0.0}))));
  CHECK(y.data[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(y.data[1] < 1e-300);
  CHECK(y.all_finite());
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(13);
  Tape t(false);
  const Tensor y = t.val(t.softmax(t.leaf(Tensor::uniform({8, 10}, -5.0, 5.0, rng))));
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 10; ++j) s += y.data[i * 10 + j];
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cross entropy of uniform logits is ln C") {
  Tape t(false);
  Var logits = t.leaf(Tensor({2, 4}));
  const Tensor loss = t.val(t.cross_entropy(logits, {0, 3}));
  CHECK(loss.data[0] == Catch::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy of confident logits is tiny") {
  Tensor logits({1, 5});
  logits.data[2] = 50.0;
  Tape t(false);
  CHECK(t.val(t.cross_entropy(t.leaf(logits), {2})).data[0] < 1e-9);
}

TEST_CASE("cross entropy matches per-sample oracle") {
  Rng rng(17);
  Tensor logits = Tensor::uniform({2, 3}, -4.0, 4.0, rng);
  const std::vector<int> labels = {2, 0};
  Tape t(false);
  const double got = t.val(t.cross_entropy(t.leaf(logits), labels)).data[0];
  CHECK(std::fabs(got - oracle::cross_entropy(logits, labels)) < 1e-12);
}

TEST_CASE("cross entropy label out of range") {
  Tape t(false);
  Var logits = t.leaf(Tensor({2, 3}));
  CHECK_THROWS_AS(t.cross_entropy(logits, {0, 3}), IndexError);
  CHECK_THROWS_AS(t.cross_entropy(logits, {-1, 0}), IndexError);
}

TEST_CASE("primitives are deterministic across repeat runs") {
  auto run = [] {
    Rng rng(99);
    Tape t(false);
    Var x = t.leaf(Tensor::uniform({4, 6}, -1.0, 1.0, rng));
    Var w = t.leaf(Tensor::uniform({5, 6}, -1.0, 1.0, rng));
    Var y = t.softmax(t.linear(x, w));
    return t.val(y).data;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
}
