#include "oracles.hpp"
#include "oslab/density.hpp"
#include "oslab/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

using namespace oslab;

namespace {

FieldParams dims(int d, double s) {
  FieldParams p;
  p.dim_d = p.dim_m = d;
  p.sigma_scale = s;
  return p;
}

std::shared_ptr<const WeightedPoints> shared(WeightedPoints w) {
  return std::make_shared<const WeightedPoints>(std::move(w));
}

double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

}  // namespace

TEST_CASE("weighted measure sampler matches its radial law") {
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  const std::size_t n = 100000;
  const auto s = sample_measure(mu, n, 5);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = s.points[i].norm();
  std::sort(r.begin(), r.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < n; i += 10) {
    const double F = mu.radial_cdf(r[i]);
    ks = std::max({ks, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
  }
  CHECK(ks < 0.02);
  CHECK(s.weights[0] == doctest::Approx(1.0 / n));
}

TEST_CASE("P(|x| <= 1) for q = 2 in one dimension") {
  // x = tan(t) turns (1+x^2)^{-3} dx into cos^4 t dt
  auto c4 = [](double t) { return std::pow(std::cos(t), 4); };
  const double want = oracle::simpson(c4, 0, std::numbers::pi / 4, 2000) /
                      oracle::simpson(c4, 0, std::numbers::pi / 2, 2000);
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  CHECK(mu.radial_cdf(1.0) == doctest::Approx(want).epsilon(1e-8));
  const auto s = sample_measure(mu, 100000, 17);
  double in = 0;
  for (const auto& x : s.points) in += std::abs(x(0)) <= 1.0;
  in /= s.size();
  CHECK(std::abs(in - want) < 4 * std::sqrt(want * (1 - want) / s.size()));
}

TEST_CASE("mean radius for q = 1.5 in two dimensions") {
  // u = r^2: E|x| = int sqrt(u) (1+u)^-3 du / int (1+u)^-3 du = pi / 4
  const auto mu = WeightedMeasure::weighted(2, 1.5);
  const auto s = sample_measure(mu, 100000, 3);
  double m = 0, m2 = 0;
  for (const auto& x : s.points) {
    m += x.norm();
    m2 += x.squaredNorm();
  }
  m /= s.size();
  m2 /= s.size();
  const double se = std::sqrt((m2 - m * m) / s.size());
  CHECK(std::abs(m - std::numbers::pi / 4) < 4 * se);
  // density integrates to one
  const double one = oracle::simpson(
      [&](double r) { return 2 * std::numbers::pi * r * mu.density(make_vec({r, 0.0})); }, 0, 2000, 400000);
  CHECK(one == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("weighted measure needs q > 1") {
  CHECK_THROWS_AS(WeightedMeasure::weighted(1, 1.0), ParameterError);
  CHECK_NOTHROW(WeightedMeasure::weighted(1, 1.01));
}

TEST_CASE("Lebesgue sampling fills the box") {
  const auto mu = WeightedMeasure::lebesgue(symmetric_box(1, 2.0));
  CHECK(mu.density(make_vec({0.3})) == doctest::Approx(0.25));
  CHECK(mu.density(make_vec({2.5})) == 0.0);
  const auto s = sample_measure(mu, 50000, 8);
  double m = 0, v = 0;
  for (const auto& x : s.points) {
    CHECK(std::abs(x(0)) <= 2.0);
    m += x(0);
    v += x(0) * x(0);
  }
  m /= s.size();
  v /= s.size();
  CHECK(std::abs(m) < 4 * std::sqrt(4.0 / 3 / s.size()));
  CHECK(v == doctest::Approx(4.0 / 3).epsilon(0.02));
}

TEST_CASE("sample i depends on (seed, i) only") {
  const auto mu = WeightedMeasure::weighted(2, 2.0);
  const auto a = sample_measure(mu, 10, 4), b = sample_measure(mu, 1000, 4);
  for (int i = 0; i < 10; ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("frozen flow leaves K close to one") {
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  const auto e = integrate(make_field("zero", dims(1, 0.0)), sample_measure(mu, 40000, 1),
                           BrownianStore(2, 1, 1, 1.0, 4));
  const UniformGrid grid(symmetric_box(1, 4.0), 128);
  const auto k = pushforward_density(e, mu, e.n_steps(), grid);
  CHECK(k.leakage < 0.02);
  for (std::size_t f = 0; f < grid.size(); ++f)
    if (std::abs(grid.center(f)(0)) < 1.0) CHECK(k.values.values[f] == doctest::Approx(1.0).epsilon(0.06));
}

TEST_CASE("deterministic contraction: K_t(y) = e^t mu(y e^t) / mu(y)") {
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  const double T = 0.5;
  const auto e = integrate(make_field("contracting", dims(1, 0.0)), sample_measure(mu, 200000, 9),
                           BrownianStore(1, 1, 1, T, 256));
  const UniformGrid grid(symmetric_box(1, 4.0), 256);
  const auto k = pushforward_density(e, mu, e.n_steps(), grid);
  // Euler: X_T = x (1 - T / N)^N
  const double c = std::pow(1 - T / 256, 256);
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const Vec y = grid.center(f);
    if (std::abs(y(0)) > 0.3) continue;
    const double want = mu.density(y / c) / c / mu.density(y);
    CHECK(k.values.values[f] == doctest::Approx(want).epsilon(0.05));
  }
}

TEST_CASE("OU from a point has the Gaussian law") {
  const double T = 1.0;
  const auto e = integrate(make_field("ou", dims(1, std::sqrt(2.0))), WeightedPoints::single(make_vec({0.0})),
                           BrownianStore(4, 40000, 1, T, 200));
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  const UniformGrid grid(symmetric_box(1, 5.0), 200);
  KdeOptions opt;
  opt.relative_to_mu = false;
  const auto u = pushforward_density(e, mu, e.n_steps(), grid, opt);
  CHECK(u.mass() == doctest::Approx(1.0).epsilon(1e-3));
  // Euler variance: sum 2 dt (1 - dt)^{2j}
  const double dt = T / 200, a = (1 - dt) * (1 - dt);
  const double var = 2 * dt * (1 - std::pow(a, 200)) / (1 - a) + u.bandwidth * u.bandwidth;
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const double y = grid.center(f)(0);
    if (std::abs(y) > 1.0) continue;
    const double g = std::exp(-y * y / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
    CHECK(u.values.values[f] == doctest::Approx(g).epsilon(0.04));
  }
}

TEST_CASE("bracket closed forms") {
  const UniformGrid grid(symmetric_box(1, 3.0), 64);
  // constant sigma, b = -x: the bracket is -div b = 1
  const auto ou = make_field("ou", dims(1, 1.0));
  for (double v : density_bracket(ou, 2.0, grid).values) CHECK(v == doctest::Approx(1.0));
  CHECK(density_bound_rhs(ou, 2.0, 0.5, grid) == doctest::Approx(std::exp(1.0)));
  CHECK(density_bound_rhs(make_field("zero", dims(1, 0.0)), 1.0, 3.0, grid) == 1.0);
  // expansion has a negative bracket, so the bound is one
  CHECK(density_bound_rhs(make_field("linear", dims(1, 0.5)), 1.0, 3.0, grid) == 1.0);
  CHECK_THROWS_AS(density_bound_rhs(ou, 0.5, 1.0, grid), ParameterError);
  // d = 2 contraction: -div b = 1
  const UniformGrid g2(symmetric_box(2, 2.0), 16);
  for (double v : density_bracket(make_field("contracting", dims(2, 0.2)), 1.0, g2).values)
    CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("tanh bracket and grid refinement") {
  // p/2 s'^2 + 1/2 s'^2 + s s'' with s = tanh
  const double p = 2.0;
  auto oracle_br = [p](double x) {
    const double s1 = sech2(x);
    return 0.5 * p * s1 * s1 + 0.5 * s1 * s1 - 2.0 * std::tanh(x) * std::tanh(x) * s1;
  };
  const auto th = make_field("tanh", dims(1, 1.0));
  auto err = [&](int cells) {
    const UniformGrid grid(symmetric_box(1, 3.0), cells);
    const auto br = density_bracket(th, p, grid);
    double e = 0;
    for (std::size_t f = 0; f < grid.size(); ++f) e = std::max(e, std::abs(br.values[f] - oracle_br(grid.center(f)(0))));
    return e;
  };
  const double e1 = err(32), e2 = err(64);
  CHECK(e1 < 0.05);
  CHECK(e2 < e1 / 3);
  BracketOptions strict;
  strict.allow_finite_differences = false;
  CHECK_THROWS_AS(density_bracket(th, p, UniformGrid(symmetric_box(1, 1.0), 8), strict), CapabilityError);
  CHECK_NOTHROW(density_bracket(make_field("ou", dims(1, 1.0)), p, UniformGrid(symmetric_box(1, 1.0), 8), strict));
}

TEST_CASE("bound grows with p and T") {
  const UniformGrid grid(symmetric_box(1, 3.0), 64);
  const auto th = make_field("tanh", dims(1, 1.0));
  double prev = 0;
  for (double p : {1.0, 2.0, 4.0}) {
    const double b = density_bound_rhs(th, p, 1.0, grid);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK(density_bound_rhs(th, 2.0, 2.0, grid) >= density_bound_rhs(th, 2.0, 1.0, grid));
}

TEST_CASE("central cells hold the requested mass") {
  const UniformGrid grid(symmetric_box(1, 1.0), 10);
  const auto g = ScalarGrid::tabulate(grid, [](const Vec& x) { return 1.0 + x(0); });
  const auto cells = central_cells(g, 0.5);
  double held = 0;
  for (auto f : cells) held += g.values[f];
  CHECK(held >= 0.5 * g.sum());
  CHECK(cells.size() < grid.size());
  // centre of mass is at 1/3: the cell holding it is included
  CHECK(std::find(cells.begin(), cells.end(), static_cast<std::size_t>(grid.locate(make_vec({1.0 / 3})))) !=
        cells.end());
}

TEST_CASE("density bound check on OU") {
  const auto mu = WeightedMeasure::weighted(1, 2.0);
  const auto pair = make_field("ou", dims(1, 0.5));
  IntegrationOptions opt;
  opt.record_every = 8;
  const auto e = integrate(pair, sample_measure(mu, 5000, 2), BrownianStore(6, 8, 1, 0.5, 64), opt);
  const UniformGrid grid(symmetric_box(1, 4.0), 64);
  const auto r = density_bound_check(pair, e, mu, 1.0, e.n_steps(), grid);
  CHECK(r.bound == doctest::Approx(std::exp(0.5)));
  CHECK(r.passed);
  CHECK(r.central_count > 0);
  CHECK(r.central_min <= r.empirical);
  CHECK_THROWS_AS(density_moment(e, mu, 3, grid, 1.0), CapabilityError);
}

TEST_CASE("density files round-trip") {
  const UniformGrid grid(symmetric_box(2, 1.0), 6);
  DensityGrid g;
  g.values = ScalarGrid::tabulate(grid, [](const Vec& x) { return std::exp(-x.squaredNorm()); });
  g.time = 0.25;
  g.kind = DensityKind::PDE;
  g.bandwidth = 0.1;
  g.clipped = 3;
  const std::string path = "density_roundtrip.csv";
  write_density(path, g);
  const auto back = read_density(path);
  CHECK(back.values.grid == grid);
  CHECK(back.kind == DensityKind::PDE);
  CHECK(back.time == 0.25);
  CHECK(back.clipped == 3);
  for (std::size_t f = 0; f < grid.size(); ++f) CHECK(back.values.values[f] == doctest::Approx(g.values.values[f]).epsilon(1e-10));
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}
