#include "oracles.hpp"

#include "oslab/errors.hpp"
#include "oslab/moduli.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace oslab;

TEST_CASE("rho values at the splice and on the linear branch") {
  const auto rho = OsgoodModulus::loglinear();
  const double b = std::exp(-2.0);
  CHECK(eval_rho(rho, b) == doctest::Approx(0.270670566).epsilon(1e-9));
  CHECK(eval_rho(rho, 0.5) == doctest::Approx(0.635335283).epsilon(1e-9));
  CHECK(eval_rho(rho, 0.0) == 0.0);
  CHECK(eval_rho(OsgoodModulus::linear(), 0.0) == 0.0);
  CHECK(eval_rho(OsgoodModulus::loglinear_smooth(), 0.0) == 0.0);
  CHECK_THROWS_AS(eval_rho(rho, -1e-3), DomainError);
}

TEST_CASE("both LogLinear branches agree at e^-2") {
  const double b = std::exp(-2.0);
  const double left = b * std::log(1.0 / b);
  const double right = b + b;
  CHECK(std::abs(left - right) <= 1e-12);
  const auto rho = OsgoodModulus::loglinear();
  CHECK(std::abs(rho(std::nextafter(b, 0.0)) - rho(std::nextafter(b, 1.0))) <= 1e-12);
  CHECK(rho.check().ok);
}

TEST_CASE("modulus checks flag broken custom moduli") {
  auto bad = OsgoodModulus::custom("half", [](double s) { return 0.5 * s; }, [](double) { return 0.5; });
  CHECK_FALSE(bad.check().ok);
  auto jump = OsgoodModulus::custom(
      "jump", [](double s) { return s < 0.1 ? 2 * s : 2 * s + 0.01; }, [](double) { return 2.0; }, 0.1);
  CHECK_FALSE(jump.check().ok);
}

TEST_CASE("psi closed form for the linear modulus") {
  const AuxiliaryFunction aux(OsgoodModulus::linear(), 1.0);
  CHECK(eval_psi(aux, std::exp(1.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eval_psi(aux, 0.0) == 0.0);
  CHECK_THROWS_AS(AuxiliaryFunction(OsgoodModulus::linear(), 0.0), ParameterError);
  CHECK_THROWS_AS(AuxiliaryFunction(OsgoodModulus::linear(), -1.0), ParameterError);
}

TEST_CASE("psi for LogLinear matches a fine Simpson oracle") {
  const double b = std::exp(-2.0);
  auto f = [](double s) { return 1.0 / (oracle::loglinear(s) + 0.1); };
  const double reference = oracle::simpson(f, 0.0, b, 2000000) + oracle::simpson(f, b, 0.5, 200000);
  // frozen from the same oracle (and a 30-digit quadrature): 1.23973095298399
  CHECK(reference == doctest::Approx(1.23973095298399).epsilon(1e-10));
  const AuxiliaryFunction aux(OsgoodModulus::loglinear(), 0.1);
  CHECK(eval_psi(aux, 0.5) == doctest::Approx(reference).epsilon(1e-9));
}

TEST_CASE("psi for generic moduli is integrated, not looked up") {
  // custom linear modulus goes through quadrature and must reproduce the closed form
  auto lin = OsgoodModulus::custom("lin", [](double s) { return s; }, [](double) { return 1.0; });
  for (double delta : {1.0, 0.1, 0.01})
    for (double xi : {1e-6, 1e-3, 0.5, 10.0}) {
      const double exact = std::log1p(xi / delta);
      CHECK(AuxiliaryFunction(lin, delta)(xi) == doctest::Approx(exact).epsilon(1e-9));
    }
}

TEST_CASE("divergence integrals for LogLinear") {
  const auto rep = certify_osgood_divergence(OsgoodModulus::loglinear(),
                                             {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8});
  REQUIRE(rep.integrals.size() == 8);
  // closed form: log((1 + e^-2) / (2 e^-2)) + log log(1/eps) - log 2
  const double b = std::exp(-2.0);
  for (std::size_t i = 0; i < 8; ++i) {
    const double eps = rep.epsilons[i];
    const double exact = std::log((1 + b) / (2 * b)) + std::log(std::log(1 / eps)) - std::log(2.0);
    CHECK(rep.integrals[i] == doctest::Approx(exact).epsilon(1e-9));
  }
  CHECK(rep.integrals[0] == doctest::Approx(1.57466609517104).epsilon(1e-10));
  CHECK(rep.integrals[7] == doctest::Approx(3.65410763685087).epsilon(1e-10));
  CHECK(rep.strictly_increasing);
  // the log log growth reaches only about 2.32 by 1e-8
  CHECK(rep.growth_ratio == doctest::Approx(3.65410763685087 / 1.57466609517104).epsilon(1e-9));
}

TEST_CASE("divergence of the linear modulus is logarithmic") {
  const auto rep = certify_osgood_divergence(OsgoodModulus::linear(), {1e-1, 1e-4, 1e-8});
  CHECK(rep.integrals[2] == doctest::Approx(8 * std::log(10.0)).epsilon(1e-10));
  CHECK(rep.certified());
}

TEST_CASE("divergence certificate rejects malformed epsilon lists") {
  CHECK_THROWS_AS(certify_osgood_divergence(OsgoodModulus::linear(), {}), ParameterError);
  CHECK_THROWS_AS(certify_osgood_divergence(OsgoodModulus::linear(), {1e-3, 1e-2}), ParameterError);
}

TEST_CASE("tabulated modulus from csv") {
  const std::string path = "modulus_table_test.csv";
  {
    std::ofstream out(path);
    out << "s,rho\n";
    for (double s : {1e-8, 1e-6, 1e-4, 1e-2, 1.0, 10.0}) out << s << ',' << 2 * s << '\n';
  }
  const auto rho = OsgoodModulus::from_key("csv:" + path);
  CHECK(rho(1e-3) == doctest::Approx(2e-3).epsilon(1e-9));
  CHECK(rho(0.0) == 0.0);
}
