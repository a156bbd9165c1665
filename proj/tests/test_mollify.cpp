#include "oracles.hpp"

#include "oslab/errors.hpp"
#include "oslab/mollify.hpp"

#include <doctest.h>

#include <cmath>

using namespace oslab;

TEST_CASE("bump has unit mass") {
  // 1-d: Simpson on the raw profile, normalized by the library constant
  const double c1 = bump_normalization(1);
  const double m1 = oracle::simpson([&](double y) { return std::abs(y) < 1 ? c1 * std::exp(-1 / (1 - y * y)) : 0.0; },
                                    -1, 1, 20000);
  CHECK(m1 == doctest::Approx(1.0).epsilon(1e-8));
  // 2-d: polar Simpson
  const double c2 = bump_normalization(2);
  const double m2 = oracle::simpson([&](double r) { return r < 1 ? 2 * M_PI * r * c2 * std::exp(-1 / (1 - r * r)) : 0.0; },
                                    0, 1, 20000);
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-8));
  const auto nodes = mollifier_nodes(2, 32);
  double w = 0.0;
  for (double x : nodes->weights) w += x;
  CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("cutoff is 1 on B1, 0 outside B2, within [0,1]") {
  for (double r = 0.0; r <= 3.0; r += 0.01) {
    const double v = cutoff(make_vec({r}));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (r <= 1.0) CHECK(v == 1.0);
    if (r >= 2.0) CHECK(v == 0.0);
  }
  CHECK(cutoff(make_vec({0.6, 0.6})) == 1.0);
}

TEST_CASE("constant sigma and linear drift survive mollification") {
  FieldParams p;
  p.sigma_scale = 0.7;
  const auto lin = make_field("linear", p);
  const auto m = mollify_pair(lin, {8, 32});
  for (double x : {-6.0, 0.3, 2.0, 6.9}) {
    CHECK(m.sigma(make_vec({x}))(0, 0) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(m.drift(make_vec({x}))(0) == doctest::Approx(x).epsilon(1e-12));
  }
  CHECK(m.smoothness() == Smoothness::Mollified);
  // beyond the cutoff support everything vanishes
  CHECK(m.drift(make_vec({17.0}))(0) == 0.0);
  CHECK_THROWS_AS(mollify_pair(lin, {0, 32}), ParameterError);
}

TEST_CASE("cutoff-only mode leaves sigma unconvolved") {
  FieldParams p;
  const auto th = make_field("tanh", p);
  const auto m = mollify_pair(th, {4, 32, MollifyMode::CutoffOnly});
  CHECK(m.sigma(make_vec({0.3}))(0, 0) == doctest::Approx(std::tanh(0.3)).epsilon(1e-14));
  CHECK(m.sigma(make_vec({6.0}))(0, 0) == doctest::Approx(std::tanh(6.0) * cutoff(make_vec({1.5}))).epsilon(1e-12));
}

TEST_CASE("mollified V series matches a Simpson oracle") {
  FieldParams p;
  p.vseries_terms = 10000;
  const auto v = make_field("vseries", p);
  const int n = 50;
  const double x = 0.3;
  const VSeries series(10000);
  const double c = bump_normalization(1);
  auto integrand = [&](double y) {
    const double u = n * y;
    const double chi = std::abs(u) < 1 ? n * c * std::exp(-1 / (1 - u * u)) : 0.0;
    return series(x - y) * chi;
  };
  const double reference = oracle::simpson(integrand, -1.0 / n, 1.0 / n, 8 * 32 * 8);
  const auto m = mollify_pair(v, {n, 32});
  CHECK(m.drift(make_vec({x}))(0) == doctest::Approx(reference).epsilon(1e-6));
}

TEST_CASE("derivatives under the convolution") {
  // smooth drift: derivative data agrees with central differences of the mollified drift
  const CoefficientPair wave(
      1, 1, [](const Vec&) { return Mat::Constant(1, 1, 0.5).eval(); },
      [](const Vec& x) -> Vec { return make_vec({std::sin(3 * x(0))}); }, Smoothness::Analytic, "wave");
  const auto mw = mollify_pair(wave, {4, 32});
  for (double x : {-1.3, 0.2, 0.9, 5.5}) {
    const double h = 1e-5;
    const double fd = (mw.drift(make_vec({x + h}))(0) - mw.drift(make_vec({x - h}))(0)) / (2 * h);
    CHECK(mw.grad_drift(make_vec({x}))(0, 0) == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    CHECK(mw.div_drift(make_vec({x})) == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
  // rough drift: compare with a fine Simpson rule for int V(x - z) chi_n'(z) dz on the plateau
  FieldParams p;
  p.vseries_terms = 2000;
  const VSeries series(2000);
  const int n = 16;
  const double c = bump_normalization(1);
  const auto m = mollify_pair(make_field("vseries", p), {n, 32});
  for (double x : {-1.3, 0.2, 0.9}) {
    auto integrand = [&](double z) {
      const double u = n * z;
      if (std::abs(u) >= 1) return 0.0;
      const double w = 1 - u * u;
      return series(x - z) * n * n * c * std::exp(-1 / w) * (-2 * u / (w * w));
    };
    const double ref = oracle::simpson(integrand, -1.0 / n, 1.0 / n, 20000);
    CHECK(m.grad_drift(make_vec({x}))(0, 0) == doctest::Approx(ref).epsilon(0.02).scale(1.0));
  }
}

TEST_CASE("mollification distances") {
  FieldParams p;
  p.vseries_terms = 2000;
  const auto v = make_field("vseries", p);
  const auto same = mollification_distance(v, {8, 32}, {8, 32}, 1.0, DistanceNorm::L1);
  CHECK(same.combined == 0.0);
  FieldParams q;
  const auto ou = make_field("ou", q);
  // constant sigma, linear drift: both levels agree with the field inside their plateaus
  const auto d = mollification_distance(ou, {4, 32}, {8, 32}, 1.0, DistanceNorm::L2q);
  CHECK(d.combined < 1e-20);
  const auto d10 = mollification_distance(v, {10, 32}, {20, 32}, 1.0, DistanceNorm::L1);
  CHECK(d10.drift_norm > 0.0);
  // refined quadrature of the same distance
  DistanceOptions fine;
  fine.points_per_axis = 2048;
  const auto d10f = mollification_distance(v, {10, 32}, {20, 32}, 1.0, DistanceNorm::L1, fine);
  CHECK(d10.drift_norm == doctest::Approx(d10f.drift_norm).epsilon(1e-4));
}

TEST_CASE("distance to the rough field shrinks along the ladder") {
  FieldParams p;
  p.vseries_terms = 2000;
  const auto v = make_field("vseries", p);
  double prev = 1e300;
  int inversions = 0;
  for (int n : {4, 8, 16, 32, 64}) {
    const double d = pair_distance(mollify_pair(v, {n, 32}), v, 1.0, DistanceNorm::L1).combined;
    if (d > prev) ++inversions;
    prev = d;
  }
  CHECK(inversions <= 1);
}

TEST_CASE("1-d tabulation reproduces the underlying pair") {
  FieldParams p;
  p.vseries_terms = 2000;
  const auto m = mollify_pair(make_field("vseries", p), {8, 32});
  const auto t = tabulate_pair_1d(m, -4.0, 4.0, 4096);
  REQUIRE(t.tabulation());
  for (double x : {-3.9, -0.77, 0.0, 1.234, 3.99}) {
    CHECK(t.drift(make_vec({x}))(0) == doctest::Approx(m.drift(make_vec({x}))(0)).epsilon(1e-4).scale(1.0));
  }
  // outside the table the pair itself is used
  CHECK(t.drift(make_vec({10.0}))(0) == m.drift(make_vec({10.0}))(0));
}
