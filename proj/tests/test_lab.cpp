#include "oslab/config.hpp"
#include "oslab/errors.hpp"
#include "oslab/lab.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>

using namespace oslab;
namespace fs = std::filesystem;

namespace {

bool mentions(const std::vector<std::string>& findings, const std::string& what) {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const std::string& f) { return f.find(what) != std::string::npos; });
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("oslab_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_flow(const std::string& field) {
  auto c = default_config(ExperimentKind::FlowCauchy);
  c.field = field;
  c.ladder = {2, 4, 8};
  c.particles = 300;
  c.paths = 3;
  c.steps = 32;
  c.field_params.vseries_terms = 200;
  c.field_params.vseries_table = 1 << 12;
  return c;
}

}  // namespace

TEST_CASE("canned defaults validate") {
  for (auto k : {ExperimentKind::OsgoodCertify, ExperimentKind::MollifyLadder, ExperimentKind::FlowCauchy,
                 ExperimentKind::DensityBound, ExperimentKind::FpeDuality}) {
    CHECK(validate(default_config(k)).empty());
    CHECK(parse_experiment(to_string(k)) == k);
  }
}

TEST_CASE("a ladder needs two levels") {
  auto c = default_config(ExperimentKind::FlowCauchy);
  c.ladder = {};
  CHECK(mentions(validate(c), "ladder requires"));
  c.ladder = {8, 4};
  CHECK(mentions(validate(c), "ascending"));
}

TEST_CASE("explicit FPE step beyond CFL names the admissible dt") {
  auto c = default_config(ExperimentKind::FpeDuality);
  c.fpe.scheme = "explicit";
  const auto f = validate(c);
  REQUIRE(f.size() == 1);
  CHECK(mentions(f, "admissible dt <="));
  c.fpe.dt = 1e-4;
  CHECK(validate(c).empty());
}

TEST_CASE("json parsing reports every problem") {
  nlohmann::json j = to_json(default_config(ExperimentKind::DensityBound));
  CHECK(parse_config(j).particles == 20000);
  j["colour"] = "blue";
  j["steps"] = "many";
  try {
    parse_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions(e.findings(), "colour"));
    CHECK(mentions(e.findings(), "steps"));
  }
  CHECK_FALSE(validate_json(nlohmann::json{{"experiment", "nope"}}).empty());
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config round-trips and hashes ignore workers") {
  auto c = default_config(ExperimentKind::FpeDuality);
  const auto back = parse_config(to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  auto w = c;
  w.workers = 8;
  w.output = "elsewhere";
  CHECK(config_hash(w) == config_hash(c));
  w.seed = 2;
  CHECK(config_hash(w) != config_hash(c));
}

TEST_CASE("frozen flow-cauchy passes") {
  auto c = small_flow("zero");
  c.ladder = {4, 8};
  c.field_params.sigma_scale = 0.0;
  const auto dir = scratch("frozen");
  const auto rep = run_experiment(c, dir.string());
  CHECK_FALSE(rep.failure.has_value());
  CHECK(rep.passed());
  CHECK(exit_code(rep) == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "psi_summary.csv"));
  fs::remove_all(dir);
}

TEST_CASE("tables are identical for any worker count") {
  std::vector<std::string> hashes;
  for (int w : {1, 4}) {
    auto c = small_flow("vseries");
    c.workers = w;
    const auto dir = scratch("workers" + std::to_string(w));
    const auto rep = run_experiment(c, dir.string());
    REQUIRE_FALSE(rep.failure.has_value());
    std::string all;
    for (const auto& t : rep.tables) all += t.name + t.sha256;
    hashes.push_back(all);
    fs::remove_all(dir);
  }
  CHECK(hashes[0] == hashes[1]);
}

TEST_CASE("exit codes follow the verdicts") {
  ExperimentReport r;
  CHECK(exit_code(r) == 1);
  r.verdicts.push_back({"a", 1, 2, "<", true, ""});
  CHECK(exit_code(r) == 0);
  r.verdicts.push_back({"b", 3, 2, "<", false, ""});
  CHECK(exit_code(r) == 1);
  r.verdicts.pop_back();
  r.failure = "solver blew up";
  CHECK(exit_code(r) == 1);
}

TEST_CASE("output root comes from the environment") {
  ::setenv(kOutputRootEnv, "/tmp/oslab-root", 1);
  CHECK(output_root() == "/tmp/oslab-root");
  ::unsetenv(kOutputRootEnv);
  CHECK(output_root() == "oslab-output");
}
