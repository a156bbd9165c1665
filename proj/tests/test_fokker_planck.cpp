#include "oslab/errors.hpp"
#include "oslab/fokker_planck.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace oslab;

namespace {

FieldParams dims(int d, double s) {
  FieldParams p;
  p.dim_d = p.dim_m = d;
  p.sigma_scale = s;
  return p;
}

CoefficientPair heat(double s) {
  return CoefficientPair(
             1, 1, [s](const Vec&) { return Mat::Constant(1, 1, s).eval(); },
             [](const Vec& x) -> Vec { return Vec::Zero(x.size()); }, Smoothness::Analytic, "heat")
      .with_constant_sigma();
}

// a = sigma sigma^T with an off-diagonal entry, plus a swirl
CoefficientPair sheared() {
  return CoefficientPair(
      2, 2,
      [](const Vec& x) {
        Mat s(2, 2);
        s << 1.0 + 0.2 * std::sin(x(1)), 0.5, 0.0, 1.0;
        return s;
      },
      [](const Vec& x) -> Vec { return make_vec({-x(1) - 0.3 * x(0), x(0)}); }, Smoothness::Analytic, "sheared");
}

ScalarFunction gaussian(double var) {
  return [var](const Vec& x) { return std::exp(-x.squaredNorm() / (2 * var)); };
}

double moment2(const DensityGrid& u) {
  const auto& g = u.values.grid;
  double m = 0;
  for (std::size_t c = 0; c < g.size(); ++c) m += u.values.values[c] * g.center(c).squaredNorm();
  return m * g.cell_volume();
}

}  // namespace

TEST_CASE("scheme and boundary names") {
  CHECK(parse_scheme("cn") == FpeScheme::CrankNicolson);
  CHECK(parse_scheme(to_string(FpeScheme::ImplicitEuler)) == FpeScheme::ImplicitEuler);
  CHECK(parse_scheme("explicit") == FpeScheme::ExplicitEuler);
  CHECK(parse_boundary(to_string(Boundary::Dirichlet0)) == Boundary::Dirichlet0);
  CHECK_THROWS_AS(parse_scheme("rk4"), ParameterError);
}

TEST_CASE("L on quadratics is exact for the centred flux") {
  const UniformGrid g(symmetric_box(1, 3.0), 300);
  const GeneratorGrid G(make_field("ou", dims(1, std::sqrt(2.0))), g, Boundary::ZeroFlux);
  CHECK(G.upwind_faces() == 0);
  const auto phi = ScalarGrid::tabulate(g, [](const Vec& x) { return x(0) * x(0); });
  const auto Lphi = apply_L(G, phi);
  for (std::size_t c = 1; c + 1 < g.size(); ++c) {
    const double x = g.center(c)(0);
    CHECK(Lphi.values[c] == doctest::Approx(2 - 2 * x * x).epsilon(1e-9));
  }
}

TEST_CASE("L on a compactly supported test function converges at second order") {
  auto phi = [](double x) { return std::abs(x) < 1 ? std::pow(1 - x * x, 4) : 0.0; };
  auto Lphi = [](double x) {
    if (std::abs(x) >= 1) return 0.0;
    const double w = 1 - x * x;
    return -8 * w * w * w + 48 * x * x * w * w + 8 * x * x * w * w * w;
  };
  auto err = [&](int cells) {
    const UniformGrid g(symmetric_box(1, 3.0), cells);
    const GeneratorGrid G(make_field("ou", dims(1, std::sqrt(2.0))), g, Boundary::Dirichlet0);
    const auto ph = ScalarGrid::tabulate(g, [&](const Vec& x) { return phi(x(0)); });
    CHECK(interior_supported(ph));
    const auto out = apply_L(G, ph);
    double e = 0;
    for (std::size_t c = 0; c < g.size(); ++c) e = std::max(e, std::abs(out.values[c] - Lphi(g.center(c)(0))));
    return e;
  };
  const double e1 = err(600), e2 = err(1200);
  CHECK(e1 < 5e-3);
  CHECK(e2 / e1 == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("L is the transpose of L*") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (Boundary bc : {Boundary::ZeroFlux, Boundary::Dirichlet0}) {
    const UniformGrid g(symmetric_box(2, 2.0), 12);
    const GeneratorGrid G(sheared(), g, bc);
    ScalarGrid phi(g), u(g);
    for (std::size_t c = 0; c < g.size(); ++c) {
      u.values[c] = n01(rng);
      const auto idx = g.unflatten(c);
      const bool ring = idx[0] < 2 || idx[1] < 2 || idx[0] >= 10 || idx[1] >= 10;
      phi.values[c] = ring ? 0.0 : n01(rng);
    }
    const auto Lphi = apply_L(G, phi);
    const auto Lu = apply_adjoint(G, u);
    double lhs = 0, rhs = 0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      lhs += Lphi.values[c] * u.values[c];
      rhs += phi.values[c] * Lu.values[c];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("uniform density is stationary for heat flow under zero flux") {
  const UniformGrid g(symmetric_box(1, 2.0), 64);
  const GeneratorGrid G(heat(1.0), g, Boundary::ZeroFlux);
  const auto sol = solve_fpe(G, uniform_density(g), 1.0, 0.01, FpeScheme::CrankNicolson, 2);
  for (double v : sol.snapshots.back().values.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("heat flow spreads the variance by a t") {
  const UniformGrid g(symmetric_box(1, 10.0), 800);
  const GeneratorGrid G(heat(std::sqrt(2.0)), g, Boundary::ZeroFlux);
  const auto u0 = initial_density(g, gaussian(0.25));
  const double s0 = moment2(u0);
  const auto sol = solve_fpe(G, u0, 1.0, 0.01, FpeScheme::CrankNicolson, 4);
  for (std::size_t k = 0; k < sol.snapshots.size(); ++k)
    CHECK(moment2(sol.snapshots[k]) == doctest::Approx(s0 + 2 * sol.snapshots[k].time).epsilon(1e-6));
}

TEST_CASE("OU variance relaxes to the stationary value") {
  const UniformGrid g(symmetric_box(1, 8.0), 512);
  const GeneratorGrid G(make_field("ou", dims(1, std::sqrt(2.0))), g, Boundary::ZeroFlux);
  const auto u0 = initial_density(g, gaussian(0.25));
  const double s0 = moment2(u0);
  const auto sol = solve_fpe(G, u0, 1.0, 0.005, FpeScheme::CrankNicolson, 4);
  for (const auto& snap : sol.snapshots) {
    const double want = 1 + (s0 - 1) * std::exp(-2 * snap.time);
    CHECK(moment2(snap) == doctest::Approx(want).epsilon(1e-4));
  }
  CHECK(sol.clipped_cells == 0);
}

TEST_CASE("mass: conserved under zero flux, lost through Dirichlet walls") {
  const UniformGrid g(symmetric_box(1, 2.0), 64);
  const auto pair = make_field("ou", dims(1, 1.0));
  const auto u0 = initial_density(g, gaussian(0.5));
  for (auto scheme : {FpeScheme::ImplicitEuler, FpeScheme::CrankNicolson}) {
    const auto zf = solve_fpe(GeneratorGrid(pair, g, Boundary::ZeroFlux), u0, 1.0, 0.01, scheme, 4);
    for (const auto& s : zf.stats) CHECK(s.mass == doctest::Approx(1.0).epsilon(1e-10));
  }
  const auto dir = solve_fpe(GeneratorGrid(pair, g, Boundary::Dirichlet0), u0, 1.0, 0.01, FpeScheme::ImplicitEuler, 4);
  for (std::size_t k = 1; k < dir.stats.size(); ++k) CHECK(dir.stats[k].mass < dir.stats[k - 1].mass);
}

TEST_CASE("explicit steps respect the CFL limit") {
  const UniformGrid g(symmetric_box(1, 4.0), 128);
  const GeneratorGrid G(make_field("ou", dims(1, 1.0)), g, Boundary::ZeroFlux);
  const double limit = G.explicit_dt_limit();
  CHECK(limit == doctest::Approx(std::pow(8.0 / 128, 2) / 2.0));
  try {
    AdjointStepper(G, 2 * limit, FpeScheme::ExplicitEuler);
    FAIL("expected CflError");
  } catch (const CflError& e) {
    CHECK(e.admissible_dt() == limit);
  }
  const auto u0 = initial_density(g, gaussian(0.5));
  const auto ex = solve_fpe(G, u0, 0.1, 0.9 * limit, FpeScheme::ExplicitEuler, 1);
  const auto cn = solve_fpe(G, u0, 0.1, 0.9 * limit, FpeScheme::CrankNicolson, 1);
  CHECK(l1_distance(ex.snapshots.back(), cn.snapshots.back()) < 1e-4);
}

TEST_CASE("strong drift switches faces to upwinding") {
  const UniformGrid g(symmetric_box(1, 4.0), 16);
  FieldParams p = dims(1, 0.05);
  const GeneratorGrid up(make_field("ou", p), g, Boundary::ZeroFlux);
  const GeneratorGrid centred(make_field("ou", p), g, Boundary::ZeroFlux, false);
  CHECK(up.upwind_faces() > 0);
  CHECK(centred.upwind_faces() == 0);
}

TEST_CASE("restriction keeps mass and l1 is a distance") {
  const UniformGrid fine(symmetric_box(2, 1.0), 16), coarse(symmetric_box(2, 1.0), 8);
  const auto u = initial_density(fine, gaussian(0.3));
  const auto r = restrict_to(u, coarse);
  CHECK(r.mass() == doctest::Approx(1.0));
  CHECK(l1_distance(u, u) == 0.0);
  CHECK(l1_distance(u, r) == doctest::Approx(0.0).epsilon(1e-12));
  const auto v = initial_density(fine, [](const Vec& x) { return 1.0 + x(0); });
  CHECK(l1_distance(u, v) == doctest::Approx(l1_distance(v, u)));
  CHECK_THROWS_AS(restrict_to(u, UniformGrid(symmetric_box(2, 1.0), 5)), ParameterError);
}

TEST_CASE("PDE and particles agree on OU") {
  const UniformGrid g(symmetric_box(1, 6.0), 240);
  const auto pair = make_field("ou", dims(1, std::sqrt(2.0)));
  const auto u0 = initial_density(g, gaussian(0.25));
  const auto sol = solve_fpe(GeneratorGrid(pair, g, Boundary::ZeroFlux), u0, 1.0, 0.005, FpeScheme::CrankNicolson, 4);
  // particles start at the cell centres with the cell masses of u0
  WeightedPoints starts;
  for (std::size_t c = 0; c < g.size(); ++c) {
    starts.points.push_back(g.center(c));
    starts.weights.push_back(u0.values.values[c] * g.cell_volume());
  }
  IntegrationOptions opt;
  opt.record_every = 50;
  const auto e = integrate(pair, starts, BrownianStore(5, 400, 1, 1.0, 400), opt);
  std::vector<TestFunction> tests{{"second_moment", [](const Vec& x) { return x.squaredNorm(); }},
                                  {"gaussian", [](const Vec& x) { return std::exp(-x.squaredNorm()); }}};
  const auto rep = duality_check(e, sol, tests);
  CHECK(rep.rows.size() == 2 * 5);
  CHECK(rep.passed());
}

TEST_CASE("duality stderr counts the sampling error of shared starts") {
  // every path shares the starts; at t = 0 the path spread is zero and the
  // stderr must be the plain iid one over the starts
  const UniformGrid g(symmetric_box(1, 6.0), 60);
  const auto sol = solve_fpe(GeneratorGrid(heat(0.5), g, Boundary::ZeroFlux), initial_density(g, gaussian(1.0)), 0.1,
                             0.01, FpeScheme::CrankNicolson, 1);
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n01;
  WeightedPoints starts;
  const int P = 500;
  for (int i = 0; i < P; ++i) {
    starts.points.push_back(Vec::Constant(1, n01(gen)));
    starts.weights.push_back(1.0 / P);
  }
  const auto e = integrate(heat(0.5), starts, BrownianStore(3, 8, 1, 0.1, 10));
  std::vector<TestFunction> tests{{"second_moment", [](const Vec& x) { return x.squaredNorm(); }}};
  const auto rep = duality_check(e, sol, tests);
  REQUIRE(!rep.rows.empty());
  CHECK(rep.rows[0].time == 0.0);

  double m = 0.0, ss = 0.0;
  for (const auto& x : starts.points) m += x.squaredNorm() / P;
  for (const auto& x : starts.points) ss += (x.squaredNorm() - m) * (x.squaredNorm() - m);
  CHECK(rep.rows[0].particles == doctest::Approx(m).epsilon(1e-12));
  CHECK(rep.rows[0].std_error == doctest::Approx(std::sqrt(ss / (P - 1.0) / P)).epsilon(1e-9));
  // later rows carry both terms
  CHECK(rep.rows.back().std_error > 0.0);
}

TEST_CASE("identical discretizations give a zero distance") {
  const UniformGrid g(symmetric_box(1, 4.0), 32);
  const Discretization d{FpeScheme::CrankNicolson, 1, 0.02};
  const auto r = uniqueness_experiment(make_field("ou", dims(1, 1.0)), g, Boundary::ZeroFlux, gaussian(0.5), 0.5, 2,
                                       d, d);
  CHECK(r.distance_coarse == 0.0);
  CHECK(r.distance_fine == 0.0);
  CHECK(r.passed);
}

TEST_CASE("first and second order schemes converge together") {
  const UniformGrid g(symmetric_box(1, 6.0), 64);
  const auto r = uniqueness_experiment(make_field("ou", dims(1, std::sqrt(2.0))), g, Boundary::ZeroFlux,
                                       gaussian(0.25), 1.0, 4, {FpeScheme::ImplicitEuler, 1, 0.04},
                                       {FpeScheme::CrankNicolson, 2, 0.02});
  CHECK(r.distance_coarse > 0.0);
  CHECK(r.ratio < 0.6);
}
