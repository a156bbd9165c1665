#include "oracles.hpp"

#include "oslab/errors.hpp"
#include "oslab/fields.hpp"
#include "oslab/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace oslab;

TEST_CASE("V series at pi/2 sums the odd reciprocal squares") {
  const auto v = eval_V_series(std::numbers::pi / 2, 1000000);
  CHECK(v.value == doctest::Approx(std::numbers::pi * std::numbers::pi / 8).epsilon(1e-6));
  CHECK(v.tail_bound == doctest::Approx(1e-6));
  CHECK(eval_V_series(0.0, 100).value == 0.0);
}

TEST_CASE("V series recurrence matches direct summation") {
  const VSeries v(5000);
  for (double t : {0.1, 1.0, 2.5, -3.7, 40.0}) {
    double direct = 0.0;
    for (int k = 1; k <= 5000; ++k) direct += std::abs(std::sin(k * t)) / (static_cast<double>(k) * k);
    CHECK(v(t) == doctest::Approx(direct).epsilon(1e-11));
  }
}

TEST_CASE("periodic V table stays close to the exact series") {
  const VSeries exact(10000), table(10000, 1 << 16);
  for (double t : {0.05, 0.7, 1.9, 3.0, -2.2}) CHECK(std::abs(table(t) - exact(t)) < 2e-3);
}

TEST_CASE("field keys") {
  FieldParams p;
  for (const auto& key : builtin_field_keys()) {
    FieldParams q = p;
    if (key == "rotation") q.dim_d = q.dim_m = 2;
    CHECK(is_known_field_key(key));
    CHECK_NOTHROW(make_field(key, q));
  }
  CHECK_FALSE(is_known_field_key("nope"));
  CHECK_THROWS_AS(make_field("nope", p), ParameterError);
  FieldParams one;
  CHECK_THROWS_AS(make_field("rotation", one), ParameterError);
}

TEST_CASE("analytic derivative data agrees with central differences") {
  FieldParams p;
  const auto tanh = make_field("tanh", p);
  const Vec x = make_vec({0.37});
  const double analytic = tanh.grad_sigma(x).slices[0](0, 0);
  CHECK(analytic == doctest::Approx(1.0 / std::pow(std::cosh(0.37), 2)).epsilon(1e-12));
  const auto contracting = make_field("contracting", p);
  CHECK(divergence(contracting, x, 1e-4) == doctest::Approx(-1.0));
  FieldParams two;
  two.dim_d = two.dim_m = 2;
  CHECK(divergence(make_field("rotation", two), make_vec({0.3, -0.8}), 1e-4) == doctest::Approx(0.0));
}

namespace {

// Exhaustive oracle: average over every cell whose centre is within r of x.
double brute_maximal(const ScalarGrid& f, std::size_t cell, const std::vector<double>& radii) {
  const auto& g = f.grid;
  const Vec x = g.center(cell);
  double best = 0.0;
  for (double r : radii) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const auto a = g.unflatten(cell), b = g.unflatten(c);
      double d2 = 0.0;
      for (int i = 0; i < g.dim(); ++i) {
        const double o = (b[i] - a[i]) * g.spacing(i);
        d2 += o * o;
      }
      if (d2 <= r * r) {
        sum += f.values[c];
        ++count;
      }
    }
    best = std::max(best, sum / count);
  }
  (void)x;
  return best;
}

}  // namespace

TEST_CASE("local maximal function equals the exhaustive oracle") {
  const UniformGrid g(symmetric_box(2, 1.0), 32);
  ScalarGrid f(g);
  CounterStream rng(7, 0);
  for (double& v : f.values) v = rng.uniform();
  const auto radii = maximal_function_radii(g, 0.3, 6);
  REQUIRE(radii.back() == 0.3);
  const ScalarGrid M = local_maximal_function(f, 0.3, 6);
  double worst = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) worst = std::max(worst, std::abs(M.values[c] - brute_maximal(f, c, radii)));
  CHECK(worst <= 1e-12);
}

TEST_CASE("maximal function of a constant is the constant") {
  const UniformGrid g(symmetric_box(1, 1.0), 64);
  const ScalarGrid f(g, 2.5);
  const ScalarGrid M = local_maximal_function(f, 0.25, 4);
  for (double v : M.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("maximal function argument checks") {
  const UniformGrid g(symmetric_box(1, 1.0), 16);
  ScalarGrid f(g, 1.0);
  CHECK_THROWS_AS(local_maximal_function(f, 5.0, 4), DomainError);
  CHECK_THROWS_AS(local_maximal_function(f, 0.01, 4), ParameterError);
  f.values[3] = -1.0;
  CHECK_THROWS_AS(local_maximal_function(f, 0.5, 4), DomainError);
}

TEST_CASE("H_q certificate on a Lipschitz field") {
  FieldParams p;
  const auto lin = make_field("linear", p);
  CertifyOptions opt;
  opt.sampling.box = symmetric_box(1, 1.0);
  // |<x - y, x - y>| = |x - y|^2 <= (g + g) |x - y|^2 exactly when g >= 1/2
  const auto ok = certify_Hq(lin, OsgoodModulus::linear(), [](const Vec&) { return 0.51; }, 1.0, 2000, 3, opt);
  CHECK(ok.violations == 0);
  CHECK(ok.passed());
  const auto bad = certify_Hq(lin, OsgoodModulus::linear(), [](const Vec&) { return 0.4; }, 1.0, 2000, 3, opt);
  CHECK(bad.violation_rate > 0.99);
  const double c = sweep_weight_scale(lin, OsgoodModulus::linear(), FieldPart::Drift,
                                      [](const Vec&) { return 1.0; }, 1.0, 2000, 5, opt);
  CHECK(c == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("H_sigma certificate and negative weights") {
  FieldParams p;
  const auto th = make_field("tanh", p);
  CertifyOptions opt;
  opt.sampling.box = symmetric_box(1, 2.0);
  // |tanh x - tanh y|^2 <= |x - y|^2 <= (1/2 + 1/2) rho(|x-y|^2) with rho(s) = s
  const auto c = certify_Hsigma(th, OsgoodModulus::linear(), [](const Vec&) { return 0.5; }, 1.0, 5000, 9, opt);
  CHECK(c.violations == 0);
  CHECK_THROWS_AS(certify_Hsigma(th, OsgoodModulus::linear(), [](const Vec&) { return -1.0; }, 1.0, 10, 9, opt),
                  DomainError);
}

TEST_CASE("certificates are independent of the worker count") {
  FieldParams p;
  p.vseries_terms = 2000;
  const auto v = make_field("vseries", p);
  CertifyOptions one, many;
  one.sampling.box = many.sampling.box = symmetric_box(1, 1.0);
  many.workers = 4;
  const auto rho = OsgoodModulus::loglinear();
  const ScalarFunction w = [](const Vec&) { return 1.0; };
  CHECK(sweep_weight_scale(v, rho, FieldPart::Drift, w, 1.0, 5000, 1, one) ==
        sweep_weight_scale(v, rho, FieldPart::Drift, w, 1.0, 5000, 1, many));
}

TEST_CASE("maximal-function weight") {
  const UniformGrid g(symmetric_box(1, 1.0), 32);
  const ScalarGrid m(g, 4.0);
  const auto w = maximal_function_weight(m, 2.0, 0.5);
  CHECK(w(make_vec({0.1})) == doctest::Approx(4.0));
}
