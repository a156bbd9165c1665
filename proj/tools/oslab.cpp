// Command-line front end for the laboratory experiments.
#include "oslab/config.hpp"
#include "oslab/errors.hpp"
#include "oslab/lab.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace oslab;

namespace {

void print_report(const ExperimentReport& r) {
  for (const auto& v : r.verdicts)
    std::cout << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << v.value << ' ' << v.relation << ' '
              << v.threshold << (v.note.empty() ? "" : "  (" + v.note + ")") << '\n';
  if (r.failure) std::cout << "FAIL run aborted: " << *r.failure << '\n';
  std::cout << "report: " << r.output_dir << "/report.json  config " << r.config_hash.substr(0, 12) << "  "
            << r.wall_seconds << " s\n";
}

int run_config(ExperimentConfig c) {
  // round-trip through JSON so overrides get the same validation as files
  c = parse_config(to_json(c));
  const ExperimentReport r = run_experiment(c);
  print_report(r);
  return exit_code(r);
}

struct Common {
  std::string field, modulus, output;
  std::uint64_t seed = 0;
  int workers = 0;
};

void add_common(CLI::App* app, Common& o) {
  app->add_option("--field", o.field, "field key");
  app->add_option("--modulus", o.modulus, "modulus key (linear, loglinear, loglinear-smooth, csv:<path>)");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--workers", o.workers, "worker threads");
  app->add_option("--output", o.output, "output subdirectory under $OSLAB_OUTPUT_ROOT");
}

void apply_common(ExperimentConfig& c, const Common& o) {
  if (!o.field.empty()) c.field = o.field;
  if (!o.modulus.empty()) c.modulus = o.modulus;
  if (o.seed) c.seed = o.seed;
  if (o.workers) c.workers = o.workers;
  if (!o.output.empty()) c.output = o.output;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oslab: numerical laboratory for SDEs with Osgood-Sobolev coefficients"};
  app.require_subcommand(1);

  Common common;
  ExperimentConfig certify = default_config(ExperimentKind::OsgoodCertify);
  ExperimentConfig mollify = default_config(ExperimentKind::MollifyLadder);
  ExperimentConfig flow = default_config(ExperimentKind::FlowCauchy);
  ExperimentConfig density = default_config(ExperimentKind::DensityBound);
  ExperimentConfig fpe = default_config(ExperimentKind::FpeDuality);

  auto* c_cmd = app.add_subcommand("certify", "pair-sampling (H_q) certificate and Osgood divergence");
  add_common(c_cmd, common);
  c_cmd->add_option("--pairs", certify.pairs);
  c_cmd->add_option("--radius", certify.radius);
  c_cmd->add_option("--margin", certify.margin, "g_R = margin x swept constant");

  auto* m_cmd = app.add_subcommand("mollify", "distances along a mollification ladder");
  add_common(m_cmd, common);
  m_cmd->add_option("--ladder", mollify.ladder);
  m_cmd->add_option("--radius", mollify.radius);

  auto* f_cmd = app.add_subcommand("flow", "Cauchy trend of mollified flows under shared noise");
  add_common(f_cmd, common);
  f_cmd->add_option("--ladder", flow.ladder);
  f_cmd->add_option("--particles", flow.particles);
  f_cmd->add_option("--paths", flow.paths);
  f_cmd->add_option("--steps", flow.steps);
  f_cmd->add_option("--horizon", flow.horizon);
  f_cmd->add_option("--sigma", flow.field_params.sigma_scale);

  auto* d_cmd = app.add_subcommand("density", "Radon-Nikodym density moments against the explicit bound");
  add_common(d_cmd, common);
  d_cmd->add_option("--particles", density.particles);
  d_cmd->add_option("--paths", density.paths);
  d_cmd->add_option("--steps", density.steps);
  d_cmd->add_option("--horizon", density.horizon);
  d_cmd->add_option("--sigma", density.field_params.sigma_scale);
  d_cmd->add_option("--moments", density.moments);

  auto* p_cmd = app.add_subcommand("fpe", "Fokker-Planck solve and particle duality");
  add_common(p_cmd, common);
  p_cmd->add_option("--scheme", fpe.fpe.scheme);
  p_cmd->add_option("--resolution", fpe.fpe.resolution);
  p_cmd->add_option("--dt", fpe.fpe.dt);
  p_cmd->add_option("--boundary", fpe.fpe.boundary);
  p_cmd->add_option("--snapshots", fpe.fpe.snapshots);
  p_cmd->add_option("--ladder", fpe.ladder, "mollify the field at the last level");
  p_cmd->add_option("--particles", fpe.particles);
  p_cmd->add_option("--paths", fpe.paths);
  p_cmd->add_option("--steps", fpe.steps);
  p_cmd->add_flag("--uniqueness", fpe.fpe.uniqueness, "also run the two-discretization refinement study");

  std::string config_path;
  auto* r_cmd = app.add_subcommand("run", "run an experiment from a JSON configuration");
  r_cmd->add_option("config", config_path)->required();
  std::string validate_path;
  auto* v_cmd = app.add_subcommand("validate", "static checks of a JSON configuration");
  v_cmd->add_option("config", validate_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*r_cmd) {
      const ExperimentReport r = run_experiment(load_config(config_path));
      print_report(r);
      return exit_code(r);
    }
    if (*v_cmd) {
      std::ifstream in(validate_path);
      if (!in) {
        std::cout << "error: cannot open " << validate_path << '\n';
        return 2;
      }
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const std::exception& e) {
        std::cout << "error: config is not valid JSON: " << e.what() << '\n';
        return 2;
      }
      const auto findings = validate_json(j);
      for (const auto& f : findings) std::cout << "error: " << f << '\n';
      if (findings.empty()) std::cout << "ok\n";
      return findings.empty() ? 0 : 2;
    }
    ExperimentConfig* chosen = nullptr;
    if (*c_cmd) chosen = &certify;
    if (*m_cmd) chosen = &mollify;
    if (*f_cmd) chosen = &flow;
    if (*d_cmd) chosen = &density;
    if (*p_cmd) chosen = &fpe;
    apply_common(*chosen, common);
    chosen->field_params.dim_d = chosen->dim_d;
    chosen->field_params.dim_m = chosen->dim_m;
    return run_config(*chosen);
  } catch (const ConfigError& e) {
    std::cout << e.what() << '\n';
    return 2;
  }
}
