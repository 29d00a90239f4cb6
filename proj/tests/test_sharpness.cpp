#include <catch2/catch_amalgamated.hpp>

#include "crft/sharpness.hpp"
#include "oracles.hpp"

using namespace crft;

namespace {

ParamSet flat(std::vector<double> v) {
  const std::size_t n = v.size();
  return {{"w", Tensor({n}, std::move(v)), ParamRole::weight}};
}

LossGradFn quadratic(const std::vector<double>& a, std::size_t n) {
  return [a, n](const ParamSet& w, std::vector<Tensor>* grads) {
    const Tensor& wv = w[0].tensor;
    double loss = 0.0;
    Tensor g({n});
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * wv.data[j];
      g.data[i] = s;
      loss += 0.5 * wv.data[i] * s;
    }
    if (grads) *grads = {g};
    return loss;
  };
}

}  // namespace

TEST_CASE("power iteration recovers the top eigenvalue of a diagonal quadratic") {
  const std::vector<double> a = {1, 0, 0, 0, 5, 0, 0, 0, 9};
  ParamSet w = flat({0.1, 0.2, 0.3});
  const SharpnessReport rep =
      lambda_max(quadratic(a, 3), w, SharpnessOptions{}, "diag-quadratic", 1);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 100);
  CHECK(std::fabs(rep.lambda_max - 9.0) / 9.0 < 0.01);
}

TEST_CASE("constant loss reports zero sharpness") {
  LossGradFn constant = [](const ParamSet& w, std::vector<Tensor>* grads) {
    if (grads) *grads = zeros_like(w);
    return 3.0;
  };
  ParamSet w = flat({1.0, -1.0, 0.5});
  const SharpnessReport rep = lambda_max(constant, w, SharpnessOptions{}, "constant", 2);
  CHECK(rep.lambda_max == 0.0);
  CHECK(rep.converged);
}

TEST_CASE("random symmetric quadratic matches the dense eigensolver oracle") {
  // Power iteration presumes a spectral gap; instances where the two
  // largest-|lambda| eigenvalues nearly tie (checked with the oracle, not the
  // implementation) are regenerated.
  Rng rng(4242);
  const std::size_t n = 6;
  int checked = 0;
  std::uint64_t seed = 0;
  while (checked < 5) {
    ++seed;
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = rng.uniform(-2.0, 2.0);
        a[i * n + j] = v;
        a[j * n + i] = v;
      }
    std::vector<double> eigs = oracle::symmetric_eigenvalues(a, n);
    std::sort(eigs.begin(), eigs.end(),
              [](double x, double y) { return std::fabs(x) > std::fabs(y); });
    if (std::fabs(eigs[1]) > 0.9 * std::fabs(eigs[0])) continue;
    const double want = eigs[0];
    ParamSet w = flat({0.1, 0.2, -0.3, 0.4, 0.0, -0.6});
    SharpnessOptions opt;
    opt.tol = 1e-6;
    const SharpnessReport rep = lambda_max(quadratic(a, n), w, opt, "sym6", seed);
    INFO("seed " << seed << " want " << want << " got " << rep.lambda_max);
    CHECK(std::fabs(rep.lambda_max - want) / std::fabs(want) < 0.01);
    ++checked;
  }
}

TEST_CASE("report invariants hold") {
  const std::vector<double> a = {4, 1, 1, 3};
  ParamSet w = flat({1.0, 1.0});
  const SharpnessReport rep = lambda_max(quadratic(a, 2), w, SharpnessOptions{}, "inv", 3);
  CHECK(rep.rayleigh_history.size() == static_cast<std::size_t>(rep.iterations));
  CHECK(rep.lambda_max == rep.rayleigh_history.back());
  if (rep.converged && rep.iterations >= 2) {
    const double last = rep.rayleigh_history[rep.iterations - 1];
    const double prev = rep.rayleigh_history[rep.iterations - 2];
    CHECK(std::fabs(last - prev) / std::max(std::fabs(last), 1e-12) < 1e-3);
  }
}

TEST_CASE("rayleigh history is nondecreasing on positive-definite quadratics") {
  Rng rng(7);
  std::vector<double> eigs = {0.5, 1.0, 2.0, 3.5, 8.0};
  const std::vector<double> a = oracle::symmetric_with_spectrum(eigs, rng);
  ParamSet w = flat({0.1, 0.1, 0.1, 0.1, 0.1});
  SharpnessOptions opt;
  opt.tol = 1e-9;
  const SharpnessReport rep = lambda_max(quadratic(a, 5), w, opt, "pd", 4);
  for (std::size_t i = 1; i < rep.rayleigh_history.size(); ++i) {
    CHECK(rep.rayleigh_history[i] >= rep.rayleigh_history[i - 1] - 1e-9);
  }
}

TEST_CASE("same seed and eval set give identical reports") {
  const std::vector<double> a = {2, 1, 1, 5};
  ParamSet w = flat({0.3, 0.4});
  const SharpnessReport r1 = lambda_max(quadratic(a, 2), w, SharpnessOptions{}, "det", 99);
  const SharpnessReport r2 = lambda_max(quadratic(a, 2), w, SharpnessOptions{}, "det", 99);
  CHECK(r1.lambda_max == r2.lambda_max);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.rayleigh_history == r2.rayleigh_history);
}

TEST_CASE("scaling the loss scales lambda_max") {
  const std::vector<double> a = {3, 1, 1, 2};
  std::vector<double> a5 = a;
  for (double& v : a5) v *= 5.0;
  ParamSet w = flat({0.2, -0.4});
  SharpnessOptions opt;
  opt.tol = 1e-8;
  const double l1 = lambda_max(quadratic(a, 2), w, opt, "scale", 5).lambda_max;
  const double l5 = lambda_max(quadratic(a5, 2), w, opt, "scale", 5).lambda_max;
  CHECK(std::fabs(l5 - 5.0 * l1) / std::fabs(5.0 * l1) < 1e-4);
}

TEST_CASE("json emission carries the contracted keys") {
  SharpnessReport rep;
  rep.lambda_max = 2.5;
  rep.iterations = 7;
  rep.converged = true;
  rep.eval_set_id = "mnist-test[0:512]";
  rep.seed = 42;
  const std::string j = sharpness_report_json(rep);
  CHECK(j.find("\"lambda_max\": 2.5") != std::string::npos);
  CHECK(j.find("\"iterations\": 7") != std::string::npos);
  CHECK(j.find("\"converged\": true") != std::string::npos);
  CHECK(j.find("\"eval_set_id\": \"mnist-test[0:512]\"") != std::string::npos);
  CHECK(j.find("\"seed\": 42") != std::string::npos);
}
