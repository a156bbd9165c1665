// Randomized invariants, each over a fixed seed so failures reproduce.

#include "oslab/density.hpp"
#include "oslab/fokker_planck.hpp"
#include "oslab/mollify.hpp"
#include "oslab/moduli.hpp"
#include "oslab/parallel.hpp"
#include "oslab/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace oslab;

namespace {

std::vector<OsgoodModulus> moduli() {
  return {OsgoodModulus::linear(), OsgoodModulus::loglinear(), OsgoodModulus::loglinear_smooth()};
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

}  // namespace

TEST_CASE("rho is nondecreasing and dominates s") {
  std::mt19937_64 rng(1);
  for (const auto& rho : moduli())
    for (int i = 0; i < 500; ++i) {
      const double s = log_uniform(rng, 1e-12, 10.0), t = s * (1 + log_uniform(rng, 1e-6, 1.0));
      CHECK(rho(t) >= rho(s));
      CHECK(rho(s) >= s);
    }
}

TEST_CASE("psi is increasing and concave with psi(0) = 0") {
  std::mt19937_64 rng(2);
  for (const auto& rho : moduli())
    for (int i = 0; i < 60; ++i) {
      const AuxiliaryFunction psi(rho, log_uniform(rng, 1e-4, 1.0));
      CHECK(psi(0.0) == 0.0);
      const double a = log_uniform(rng, 1e-6, 4.0), b = a * (1 + log_uniform(rng, 1e-3, 2.0));
      const double pa = psi(a), pb = psi(b), mid = psi(0.5 * (a + b));
      CHECK(pb > pa);
      CHECK(mid >= 0.5 * (pa + pb) - 1e-12 * pb);
    }
}

TEST_CASE("psi decreases in delta") {
  std::mt19937_64 rng(3);
  for (const auto& rho : moduli())
    for (int i = 0; i < 60; ++i) {
      const double xi = log_uniform(rng, 1e-6, 4.0), d = log_uniform(rng, 1e-4, 1.0);
      CHECK(AuxiliaryFunction(rho, d)(xi) > AuxiliaryFunction(rho, 2 * d)(xi));
    }
}

TEST_CASE("divergence integrals grow as eps shrinks") {
  for (const auto& rho : moduli()) {
    const auto rep = certify_osgood_divergence(rho, {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6});
    CHECK(rep.strictly_increasing);
    for (std::size_t i = 1; i < rep.integrals.size(); ++i) CHECK(rep.integrals[i] > rep.integrals[i - 1]);
  }
}

TEST_CASE("V is even, 2 pi periodic and bounded by pi^2 / 6") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  const VSeries v(2000);
  for (int i = 0; i < 300; ++i) {
    const double t = u(rng);
    const double x = v(t);
    CHECK(x >= 0.0);
    CHECK(x <= std::numbers::pi * std::numbers::pi / 6);
    CHECK(v(-t) == doctest::Approx(x).epsilon(1e-12));
    CHECK(v(t + 2 * std::numbers::pi) == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("maximal function is monotone, positively homogeneous and sublinear") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const UniformGrid g(symmetric_box(1, 2.0), 48);
  for (int trial = 0; trial < 5; ++trial) {
    ScalarGrid f(g), h(g);
    for (std::size_t c = 0; c < g.size(); ++c) {
      f.values[c] = u(rng);
      h.values[c] = u(rng);
    }
    ScalarGrid sum(g), bigger(g), scaled(g);
    for (std::size_t c = 0; c < g.size(); ++c) {
      sum.values[c] = f.values[c] + h.values[c];
      bigger.values[c] = f.values[c] + 0.1;
      scaled.values[c] = 3.0 * f.values[c];
    }
    const auto Mf = local_maximal_function(f, 1.0, 8), Mh = local_maximal_function(h, 1.0, 8);
    const auto Ms = local_maximal_function(sum, 1.0, 8);
    const auto Mb = local_maximal_function(bigger, 1.0, 8);
    const auto Mc = local_maximal_function(scaled, 1.0, 8);
    for (std::size_t c = 0; c < g.size(); ++c) {
      CHECK(Ms.values[c] <= Mf.values[c] + Mh.values[c] + 1e-12);
      CHECK(Mb.values[c] >= Mf.values[c]);
      CHECK(Mc.values[c] == doctest::Approx(3.0 * Mf.values[c]));
    }
  }
}

TEST_CASE("mollified drift stays within the sup of the raw drift") {
  FieldParams p;
  p.vseries_terms = 500;
  const auto raw = make_field("vseries", p);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  for (int n : {2, 8}) {
    const auto m = mollify_pair(raw, {n, 24});
    for (int i = 0; i < 100; ++i) {
      const double x = u(rng);
      const double b = m.drift(make_vec({x}))(0);
      CHECK(b >= 0.0);
      CHECK(b <= std::numbers::pi * std::numbers::pi / 6);
      if (std::abs(x) > 2.0 * n) CHECK(b == 0.0);
    }
  }
}

TEST_CASE("cutoff takes values in [0, 1]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const Vec x = make_vec({u(rng), u(rng)});
    const double c = cutoff(x);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    if (x.norm() <= 1.0) CHECK(c == 1.0);
    if (x.norm() >= 2.0) CHECK(c == 0.0);
  }
}

TEST_CASE("counter RNG: addressable and roughly standard") {
  double m = 0, v = 0;
  const int n = 200000;
  for (int i = 0; i < n / 2; ++i) {
    const auto z = normal_pair(9, i, 3);
    CHECK(z == normal_pair(9, i, 3));
    m += z[0] + z[1];
    v += z[0] * z[0] + z[1] * z[1];
  }
  m /= n;
  v /= n;
  CHECK(std::abs(m) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(v - 1) < 4 * std::sqrt(2.0 / n));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}

TEST_CASE("chunked reductions ignore the worker count") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(100003);
  for (double& x : xs) x = u(rng);
  auto reduce = [&](int workers) {
    std::vector<double> partial((xs.size() + 999) / 1000);
    parallel_chunks(xs.size(), 1000, workers, [&](std::size_t b, std::size_t e) {
      partial[b / 1000] = pairwise_sum(std::span<const double>(xs.data() + b, e - b));
    });
    return pairwise_sum(partial);
  };
  const double one = reduce(1);
  for (int w : {2, 3, 8}) CHECK(reduce(w) == one);
}

TEST_CASE("L1 distance obeys the triangle inequality") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const UniformGrid g(symmetric_box(2, 1.0), 10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DensityGrid> d(3);
    for (auto& x : d) x = initial_density(g, [&](const Vec&) { return u(rng); });
    CHECK(l1_distance(d[0], d[2]) <= l1_distance(d[0], d[1]) + l1_distance(d[1], d[2]) + 1e-12);
  }
}

TEST_CASE("implicit FPE steps keep densities nonnegative with unit mass") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FieldParams p;
  p.sigma_scale = 0.7;
  const UniformGrid g(symmetric_box(1, 3.0), 60);
  const GeneratorGrid G(make_field("tanh", p), g, Boundary::ZeroFlux);
  for (int trial = 0; trial < 5; ++trial) {
    auto d = initial_density(g, [&](const Vec&) { return u(rng); });
    for (int k = 0; k < 20; ++k) d = step_adjoint(G, d, 0.05, FpeScheme::ImplicitEuler);
    CHECK(d.values.min() >= 0.0);
    CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(d.clipped == 0);
  }
}
