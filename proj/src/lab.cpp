#include "oslab/lab.hpp"

#include "oslab/density.hpp"
#include "oslab/errors.hpp"
#include "oslab/fokker_planck.hpp"
#include "oslab/hash.hpp"
#include "oslab/mollify.hpp"
#include "oslab/moduli.hpp"
#include "oslab/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>

namespace oslab {

namespace fs = std::filesystem;

std::string output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::string(env) : std::string("oslab-output");
}

int exit_code(const ExperimentReport& r) { return r.passed() ? 0 : 1; }

namespace {

// Sub-seed salts: one per random consumer, fixed forever.
enum Salt : std::uint64_t { kStarts = 11, kNoise = 12, kSweep = 21, kCertify = 22 };

struct Context {
  const ExperimentConfig& c;
  fs::path dir;
  ExperimentReport& rep;

  std::string table(const std::string& name, const CsvTable& t) {
    const fs::path p = dir / (name + ".csv");
    rep.tables.push_back({name, p.filename().string(), t.write(p.string())});
    return p.string();
  }
  void file_table(const std::string& name, const fs::path& p) {
    rep.tables.push_back({name, p.filename().string(), sha256_file(p.string())});
  }
  fs::path plot_path(const std::string& name) {
    rep.plots.push_back(name + ".svg");
    return dir / (name + ".svg");
  }
  void verdict(const std::string& name, double value, double threshold, const std::string& rel, bool ok,
               const std::string& note = "") {
    rep.verdicts.push_back({name, value, threshold, rel, ok, note});
  }
};

Box box_of(const std::vector<double>& lo, const std::vector<double>& hi) {
  Box b{Vec(static_cast<Eigen::Index>(lo.size())), Vec(static_cast<Eigen::Index>(hi.size()))};
  for (std::size_t i = 0; i < lo.size(); ++i) {
    b.lo(i) = lo[i];
    b.hi(i) = hi[i];
  }
  return b;
}

UniformGrid grid_of(const GridSpec& g) {
  std::array<int, kMaxDim> cells{1, 1, 1};
  for (std::size_t i = 0; i < g.cells.size(); ++i) cells[i] = g.cells[i];
  return UniformGrid(box_of(g.lo, g.hi), cells);
}

WeightedMeasure measure_of(const ExperimentConfig& c) {
  if (c.measure.lebesgue) return WeightedMeasure::lebesgue(box_of(c.measure.lo, c.measure.hi));
  return WeightedMeasure::weighted(c.dim_d, c.measure.q);
}

// Mollified level n, tabulated for the one-dimensional fast path.
CoefficientPair level_pair(const CoefficientPair& raw, int n, int points) {
  CoefficientPair p = mollify_pair(raw, {n, points, MollifyMode::Convolve});
  if (p.dim_d() == 1 && p.dim_m() == 1) {
    const double reach = 2.0 * n + 1.0;
    const double extent = std::min(reach, 16.0);
    p = tabulate_pair_1d(p, -extent, extent, static_cast<int>(std::ceil(2 * extent * 8 * n)));
  }
  return p;
}

// ---------------------------------------------------------------------------

void osgood_certify(Context& ctx) {
  const auto& c = ctx.c;
  const CoefficientPair pair = make_field(c.field, c.field_params);
  const OsgoodModulus rho = OsgoodModulus::from_key(c.modulus);
  CertifyOptions opt;
  opt.sampling.box = symmetric_box(c.dim_d, c.radius);
  opt.workers = c.workers;
  const ScalarFunction one = [](const Vec&) { return 1.0; };
  const double c0 = sweep_weight_scale(pair, rho, FieldPart::Drift, one, c.radius, c.pairs,
                                       derive_seed(c.seed, kSweep), opt);
  const double g = c.margin * c0;
  const OsgoodCertificate cert = certify_Hq(pair, rho, [g](const Vec&) { return g; }, c.radius, c.pairs,
                                            derive_seed(c.seed, kCertify), opt);
  CsvTable t({"stage", "pairs", "violations", "violation_rate", "worst_ratio", "g_constant"});
  t.add_row(std::vector<std::string>{"sweep", std::to_string(c.pairs), "", "", CsvTable::format(c0),
                                     CsvTable::format(c0)});
  t.add_row(std::vector<std::string>{"certify", std::to_string(cert.n_pairs), std::to_string(cert.violations),
                                     CsvTable::format(cert.violation_rate), CsvTable::format(cert.worst_ratio),
                                     CsvTable::format(g)});
  ctx.table("certificate", t);
  ctx.verdict("hq_violation_rate", cert.violation_rate, 0.0, "<=", cert.passed(),
              "constant g_R = margin x swept constant, fresh pairs");

  const DivergenceReport div = certify_osgood_divergence(rho, c.epsilons);
  CsvTable d({"epsilon", "integral"});
  PlotSeries s{"I(eps)", {}, {}, {}};
  for (std::size_t i = 0; i < div.epsilons.size(); ++i) {
    d.add_row({div.epsilons[i], div.integrals[i]});
    s.x.push_back(div.epsilons[i]);
    s.y.push_back(div.integrals[i]);
  }
  ctx.table("divergence", d);
  svg_line_plot(ctx.plot_path("divergence").string(), "int_eps^1 ds / rho(s)", "epsilon", "I(epsilon)", {s},
                true, false);
  ctx.verdict("modulus_checks", div.modulus_check.ok ? 1.0 : 0.0, 1.0, "==", div.modulus_check.ok);
  ctx.verdict("divergence_strictly_increasing", div.strictly_increasing ? 1.0 : 0.0, 1.0, "==",
              div.strictly_increasing);
  ctx.verdict("divergence_growth_ratio", div.growth_ratio, div.ratio_threshold, ">", div.unbounded_looking,
              "I(eps_min) / I(eps_max); log log growth is slow for s log(1/s)");
}

void mollify_ladder(Context& ctx) {
  const auto& c = ctx.c;
  const CoefficientPair raw = make_field(c.field, c.field_params);
  const MollifierSpec ref{c.ladder.back(), c.mollifier_points, MollifyMode::Convolve};
  CsvTable t({"n", "l1_to_reference", "l2q_to_reference", "l1_to_field"});
  PlotSeries s1{"L1 to reference", {}, {}, {}}, s2{"L1 to field", {}, {}, {}};
  std::vector<double> to_field;
  DistanceOptions dopt;
  dopt.points_per_axis = c.grid.cells.front();
  for (int n : c.ladder) {
    const MollifierSpec spec{n, c.mollifier_points, MollifyMode::Convolve};
    const auto l1 = mollification_distance(raw, spec, ref, c.radius, DistanceNorm::L1, dopt);
    const auto l2q = mollification_distance(raw, spec, ref, c.radius, DistanceNorm::L2q, dopt);
    const auto f = pair_distance(mollify_pair(raw, spec), raw, c.radius, DistanceNorm::L1, dopt);
    t.add_row({static_cast<double>(n), l1.combined, l2q.combined, f.combined});
    to_field.push_back(f.combined);
    s2.x.push_back(n);
    s2.y.push_back(f.combined);
    if (n != ref.level_n) {
      s1.x.push_back(n);
      s1.y.push_back(l1.combined);
    }
  }
  ctx.table("mollify_ladder", t);
  svg_line_plot(ctx.plot_path("mollify_ladder").string(), "mollification distances", "n", "distance", {s1, s2},
                true, true);
  int inversions = 0;
  for (std::size_t i = 1; i < to_field.size(); ++i)
    if (to_field[i] > to_field[i - 1]) ++inversions;
  ctx.verdict("l1_to_field_inversions", inversions, 1, "<=", inversions <= 1,
              "distance of the mollified field to the rough field along the ladder");
  ctx.verdict("l1_to_field_decay", to_field.back(), to_field.front(), "<", to_field.back() < to_field.front() ||
              to_field.front() == 0.0);
}

void flow_cauchy(Context& ctx) {
  const auto& c = ctx.c;
  const CoefficientPair raw = make_field(c.field, c.field_params);
  std::vector<CoefficientPair> levels;
  for (int n : c.ladder) levels.push_back(level_pair(raw, n, c.mollifier_points));
  const WeightedMeasure mu = measure_of(c);
  const WeightedPoints starts = sample_measure(mu, c.particles, derive_seed(c.seed, kStarts));
  const BrownianStore noise(derive_seed(c.seed, kNoise), c.paths, c.dim_m, c.horizon, c.steps);
  IntegrationOptions opt;
  opt.store_trajectories = false;
  opt.workers = c.workers;
  const std::size_t ref = levels.size() - 1;
  const LadderResult r = integrate_ladder(levels, ref, starts, noise, opt);
  const OsgoodModulus rho = OsgoodModulus::from_key(c.modulus);

  CsvTable t({"n", "cauchy_metric", "stderr"});
  std::vector<PsiSummaryRow> psi;
  PlotSeries s{"E int (1 ^ |X^n - X^ref|^2) dmu", {}, {}, {}};
  std::vector<Estimate> est;
  for (std::size_t l = 0; l < ref; ++l) {
    const Estimate e = ladder_cauchy_metric(r, l);
    est.push_back(e);
    t.add_row({static_cast<double>(c.ladder[l]), e.value, e.std_error});
    s.x.push_back(c.ladder[l]);
    s.y.push_back(e.value);
    s.err.push_back(2 * e.std_error);
    for (double delta : c.deltas) {
      const Estimate pe = ladder_psi(r, l, AuxiliaryFunction(rho, delta), c.radius);
      psi.push_back({c.ladder[l], delta, pe.value, pe.std_error});
    }
  }
  ctx.table("cauchy", t);
  const fs::path psi_path = ctx.dir / "psi_summary.csv";
  write_psi_summary(psi_path.string(), psi);
  ctx.file_table("psi_summary", psi_path);
  svg_line_plot(ctx.plot_path("cauchy").string(), "mollified-flow Cauchy metric", "n", "metric", {s}, true, false);

  int inversions = 0, significant = 0;
  for (std::size_t i = 1; i < est.size(); ++i)
    if (est[i].value > est[i - 1].value) {
      ++inversions;
      if (est[i].value - est[i - 1].value > 2.0 * std::hypot(est[i].std_error, est[i - 1].std_error))
        ++significant;
    }
  ctx.verdict("cauchy_inversions", inversions, 1, "<=", inversions <= 1 && significant == 0,
              std::to_string(significant) + " inversion(s) beyond 2 stderr");
  const double first = est.front().value, last = est.back().value;
  const double ratio = first > 0.0 ? last / first : 0.0;
  ctx.verdict("cauchy_final_over_first", ratio, c.final_ratio, "<", first == 0.0 || ratio < c.final_ratio);
  ctx.verdict("diverged_trajectories", static_cast<double>(r.diverged), 0.0, "==", r.diverged == 0);
}

void density_bound(Context& ctx) {
  const auto& c = ctx.c;
  const CoefficientPair raw = make_field(c.field, c.field_params);
  const CoefficientPair pair = c.ladder.empty() ? raw : mollify_pair(raw, {c.ladder.back(), c.mollifier_points});
  const WeightedMeasure mu = measure_of(c);
  const WeightedPoints starts = sample_measure(mu, c.particles, derive_seed(c.seed, kStarts));
  const BrownianStore noise(derive_seed(c.seed, kNoise), c.paths, c.dim_m, c.horizon, c.steps);
  if (c.steps % 2 != 0) throw ParameterError("density-bound needs an even step count");
  IntegrationOptions opt;
  opt.store_trajectories = true;
  opt.record_every = c.steps / 2;
  opt.workers = c.workers;
  const FlowEnsemble e = integrate(pair, starts, noise, opt);
  const UniformGrid grid = grid_of(c.grid);
  DensityBoundOptions dopt;
  dopt.bandwidth = c.bandwidth;
  dopt.central_fraction = c.central_fraction;
  dopt.slack = c.slack;
  CsvTable t({"p", "t", "empirical", "stderr", "bound", "central_min", "central_cells", "leakage", "passed"});
  double worst_leak = 0.0;
  for (double p : c.moments)
    for (int k : {c.steps / 2, c.steps}) {
      const DensityBoundReport r = density_bound_check(pair, e, mu, p, k, grid, dopt);
      t.add_row({p, r.time, r.empirical, r.std_error, r.bound, r.central_min, static_cast<double>(r.central_count),
                 r.leakage, r.passed ? 1.0 : 0.0});
      worst_leak = std::max(worst_leak, r.leakage);
      ctx.verdict("density_bound_p" + CsvTable::format(p) + "_t" + CsvTable::format(r.time), r.empirical,
                  r.bound * (1 + r.slack), "<=", r.passed);
    }
  ctx.table("density_bound", t);
  KdeOptions kopt;
  kopt.bandwidth = c.bandwidth;
  const DensityGrid kt = pushforward_density(e, mu, c.steps, grid, kopt);
  const fs::path kp = ctx.dir / "expected_K_T.csv";
  write_density(kp.string(), kt);
  ctx.file_table("expected_K_T", kp);
  svg_heatmap(ctx.plot_path("expected_K_T").string(), "E K_T", kt.values);
  ctx.verdict("leakage", worst_leak, 0.01, "<", worst_leak < 0.01);
  ctx.rep.notes.push_back("sup over central cells holding " + CsvTable::format(c.central_fraction) +
                          " of the pushforward mass; edge cells are excluded");
}

void fpe_duality(Context& ctx) {
  const auto& c = ctx.c;
  const CoefficientPair raw = make_field(c.field, c.field_params);
  const CoefficientPair pair = c.ladder.empty() ? raw : level_pair(raw, c.ladder.back(), c.mollifier_points);
  const WeightedMeasure mu = measure_of(c);
  const Box box = box_of(c.grid.lo, c.grid.hi);
  const UniformGrid grid(box, c.fpe.resolution);
  const GeneratorGrid G(pair, grid, parse_boundary(c.fpe.boundary));
  const DensityGrid u0 = initial_density(grid, [&mu](const Vec& x) { return mu.density(x); });
  const WeakSolutionPath sol = solve_fpe(G, u0, c.horizon, c.fpe.dt, parse_scheme(c.fpe.scheme), c.fpe.snapshots);

  const WeightedPoints starts = sample_measure(mu, c.particles, derive_seed(c.seed, kStarts));
  const BrownianStore noise(derive_seed(c.seed, kNoise), c.paths, c.dim_m, c.horizon, c.steps);
  IntegrationOptions opt;
  opt.store_trajectories = true;
  opt.record_every = c.steps / c.fpe.snapshots;
  opt.workers = c.workers;
  const FlowEnsemble e = integrate(pair, starts, noise, opt);

  Vec centre = Vec::Constant(c.dim_d, 0.5);
  const std::vector<TestFunction> tests{
      {"second_moment", [](const Vec& x) { return x.squaredNorm(); }},
      {"gaussian", [](const Vec& x) { return std::exp(-x.squaredNorm()); }},
      {"bump", [centre](const Vec& x) { return std::exp(-2.0 * (x - centre).squaredNorm()); }},
  };
  const DualityReport dual = duality_check(e, sol, tests);
  CsvTable t({"time", "test_function", "pde", "particles", "stderr", "gap", "tolerance", "passed"});
  std::vector<PlotSeries> series;
  for (const auto& row : dual.rows) {
    t.add_row(std::vector<std::string>{CsvTable::format(row.time), row.name, CsvTable::format(row.pde),
                                       CsvTable::format(row.particles), CsvTable::format(row.std_error),
                                       CsvTable::format(row.gap), CsvTable::format(row.tolerance),
                                       row.passed ? "1" : "0"});
  }
  for (const auto& tf : tests) {
    PlotSeries pde{tf.name + " (pde)", {}, {}, {}}, mc{tf.name + " (particles)", {}, {}, {}};
    for (const auto& row : dual.rows)
      if (row.name == tf.name) {
        pde.x.push_back(row.time);
        pde.y.push_back(row.pde);
        mc.x.push_back(row.time);
        mc.y.push_back(row.particles);
        mc.err.push_back(3 * row.std_error);
      }
    series.push_back(pde);
    series.push_back(mc);
  }
  ctx.table("duality", t);
  const fs::path rp = ctx.dir / "fpe_report.csv";
  write_fpe_report(rp.string(), sol, &dual);
  ctx.file_table("fpe_report", rp);
  svg_line_plot(ctx.plot_path("duality").string(), "PDE vs particles", "t", "integral of phi", series, false, false);
  svg_heatmap(ctx.plot_path("u_T").string(), "u_T", sol.snapshots.back().values);

  std::size_t failed = 0;
  for (const auto& row : dual.rows) failed += row.passed ? 0 : 1;
  ctx.verdict("duality_rows_failed", static_cast<double>(failed), 0.0, "==", failed == 0,
              "tolerance 3 stderr + 1% of int |phi| u_t");
  const double mass_drift = std::abs(sol.stats.back().mass - sol.stats.front().mass);
  ctx.verdict("mass_change", mass_drift, 1e-6, "<=", c.fpe.boundary != "zero-flux" || mass_drift <= 1e-6);
  ctx.rep.notes.push_back("upwinded faces: " + std::to_string(G.upwind_faces()) + " of " +
                          std::to_string(G.total_faces()) + "; clipped cells: " + std::to_string(sol.clipped_cells));
  ctx.rep.notes.push_back("initial density is mu restricted to the solver box and renormalized");

  if (c.fpe.uniqueness) {
    std::array<int, kMaxDim> cells{1, 1, 1};
    for (int i = 0; i < c.dim_d; ++i) cells[i] = std::max(2, c.fpe.resolution / 4);
    const UniformGrid base(box, cells);
    const UniquenessReport u = uniqueness_experiment(
        pair, base, parse_boundary(c.fpe.boundary), [&mu](const Vec& x) { return mu.density(x); }, c.horizon,
        c.fpe.snapshots, {FpeScheme::ImplicitEuler, 1, 4 * c.fpe.dt}, {FpeScheme::CrankNicolson, 2, 2 * c.fpe.dt});
    CsvTable ut({"distance_coarse", "distance_fine", "ratio"});
    ut.add_row({u.distance_coarse, u.distance_fine, u.ratio});
    ctx.table("uniqueness", ut);
    ctx.verdict("uniqueness_refinement_ratio", u.ratio, 0.6, "<", u.passed, u.note);
  }
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const std::optional<std::string>& out_dir) {
  const auto findings = validate(config);
  if (!findings.empty()) throw ConfigError(findings);
  ExperimentReport rep;
  rep.experiment = to_string(config.experiment);
  rep.config_hash = config_hash(config);
  rep.workers = config.workers;
  rep.timestamp = now_iso();
  const fs::path dir = out_dir ? fs::path(*out_dir)
                               : fs::path(output_root()) / (config.output.empty() ? rep.experiment : config.output);
  fs::create_directories(dir);
  rep.output_dir = dir.string();
  Context ctx{config, dir, rep};
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (config.experiment) {
      case ExperimentKind::OsgoodCertify: osgood_certify(ctx); break;
      case ExperimentKind::MollifyLadder: mollify_ladder(ctx); break;
      case ExperimentKind::FlowCauchy: flow_cauchy(ctx); break;
      case ExperimentKind::DensityBound: density_bound(ctx); break;
      case ExperimentKind::FpeDuality: fpe_duality(ctx); break;
    }
  } catch (const std::exception& ex) {
    rep.failure = ex.what();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_report((dir / "report.json").string(), rep, to_json(config));
  return rep;
}

}  // namespace oslab
