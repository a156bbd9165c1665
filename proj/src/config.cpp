#include "oslab/config.hpp"

#include "oslab/errors.hpp"
#include "oslab/hash.hpp"
#include "oslab/moduli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace oslab {

namespace {

std::string join_findings(const std::vector<std::string>& f) {
  std::string out = "invalid configuration:";
  for (const auto& s : f) out += "\n  - " + s;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> findings)
    : std::runtime_error(join_findings(findings)), findings_(std::move(findings)) {}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::OsgoodCertify: return "osgood-certify";
    case ExperimentKind::MollifyLadder: return "mollify-ladder";
    case ExperimentKind::FlowCauchy: return "flow-cauchy";
    case ExperimentKind::DensityBound: return "density-bound";
    case ExperimentKind::FpeDuality: return "fpe-duality";
  }
  return "?";
}

std::optional<ExperimentKind> parse_experiment(const std::string& s) {
  for (auto k : {ExperimentKind::OsgoodCertify, ExperimentKind::MollifyLadder, ExperimentKind::FlowCauchy,
                 ExperimentKind::DensityBound, ExperimentKind::FpeDuality})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

namespace {

// Reads typed values out of a JSON object, collecting a finding per bad key.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string prefix, std::vector<std::string>& findings)
      : j_(j), prefix_(std::move(prefix)), findings_(findings) {
    if (!j_.is_object()) findings_.push_back((prefix_.empty() ? "config" : prefix_) + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const std::exception&) {
      findings_.push_back(name(key) + ": wrong type");
    }
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) findings_.push_back(name(it.key()) + ": unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::vector<std::string>& findings_;
  std::set<std::string> seen_;
};

ExperimentConfig parse_unchecked(const nlohmann::json& j, std::vector<std::string>& findings) {
  ExperimentConfig c;
  Reader r(j, "", findings);
  std::string experiment;
  r.get("experiment", experiment);
  if (experiment.empty()) {
    findings.push_back("experiment: missing");
  } else if (auto k = parse_experiment(experiment)) {
    c = default_config(*k);
  } else {
    findings.push_back("experiment: unknown experiment '" + experiment + "'");
  }
  r.get("schema_version", c.schema_version);
  r.get("field", c.field);
  r.get("modulus", c.modulus);
  r.get("dim_d", c.dim_d);
  r.get("dim_m", c.dim_m);
  r.get("horizon", c.horizon);
  r.get("steps", c.steps);
  r.get("particles", c.particles);
  r.get("paths", c.paths);
  r.get("ladder", c.ladder);
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.get("output", c.output);
  r.get("mollifier_points", c.mollifier_points);
  r.get("pairs", c.pairs);
  r.get("radius", c.radius);
  r.get("margin", c.margin);
  r.get("epsilons", c.epsilons);
  r.get("deltas", c.deltas);
  r.get("final_ratio", c.final_ratio);
  r.get("moments", c.moments);
  r.get("central_fraction", c.central_fraction);
  r.get("slack", c.slack);
  if (const auto* bw = r.child("bandwidth")) {
    if (bw->is_number()) c.bandwidth = bw->get<double>();
    else if (!bw->is_null()) findings.push_back("bandwidth: expected a number or null");
  }
  if (const auto* m = r.child("measure")) {
    Reader mr(*m, "measure", findings);
    std::string kind = c.measure.lebesgue ? "lebesgue" : "weighted";
    mr.get("kind", kind);
    if (kind != "lebesgue" && kind != "weighted")
      findings.push_back("measure.kind: expected 'weighted' or 'lebesgue'");
    c.measure.lebesgue = kind == "lebesgue";
    mr.get("q", c.measure.q);
    mr.get("lo", c.measure.lo);
    mr.get("hi", c.measure.hi);
    mr.finish();
  }
  if (const auto* g = r.child("grid")) {
    Reader gr(*g, "grid", findings);
    gr.get("lo", c.grid.lo);
    gr.get("hi", c.grid.hi);
    gr.get("cells", c.grid.cells);
    gr.finish();
  }
  if (const auto* f = r.child("field_params")) {
    Reader fr(*f, "field_params", findings);
    fr.get("sigma_scale", c.field_params.sigma_scale);
    fr.get("vseries_terms", c.field_params.vseries_terms);
    fr.get("vseries_table", c.field_params.vseries_table);
    fr.get("power", c.field_params.power);
    fr.finish();
  }
  if (const auto* f = r.child("fpe")) {
    Reader fr(*f, "fpe", findings);
    fr.get("scheme", c.fpe.scheme);
    fr.get("resolution", c.fpe.resolution);
    fr.get("dt", c.fpe.dt);
    fr.get("boundary", c.fpe.boundary);
    fr.get("snapshots", c.fpe.snapshots);
    fr.get("uniqueness", c.fpe.uniqueness);
    fr.finish();
  }
  r.finish();
  if (!experiment.empty() && parse_experiment(experiment)) c.experiment = *parse_experiment(experiment);
  c.field_params.dim_d = c.dim_d;
  c.field_params.dim_m = c.dim_m;
  return c;
}

bool uses_ladder(ExperimentKind k) {
  return k == ExperimentKind::MollifyLadder || k == ExperimentKind::FlowCauchy;
}

void check_box(const std::vector<double>& lo, const std::vector<double>& hi, int d, const std::string& key,
               std::vector<std::string>& f) {
  if (static_cast<int>(lo.size()) != d || static_cast<int>(hi.size()) != d) {
    f.push_back(key + ": lo/hi must have dim_d entries");
    return;
  }
  for (int i = 0; i < d; ++i)
    if (!(lo[i] < hi[i])) f.push_back(key + ": lo must be below hi on every axis");
}

void semantic_checks(const ExperimentConfig& c, std::vector<std::string>& f) {
  if (c.schema_version != kSchemaVersion)
    f.push_back("schema_version: unsupported version " + std::to_string(c.schema_version));
  const bool dims_ok = c.dim_d >= 1 && c.dim_d <= kMaxDim && c.dim_m >= 1 && c.dim_m <= kMaxDim;
  if (!dims_ok) f.push_back("dim_d/dim_m: dimensions must be in 1..3");
  if (!is_known_field_key(c.field)) f.push_back("field: unknown field key '" + c.field + "'");
  try {
    (void)OsgoodModulus::from_key(c.modulus);
  } catch (const std::exception&) {
    f.push_back("modulus: unknown modulus key '" + c.modulus + "'");
  }
  if (!(c.horizon > 0.0)) f.push_back("horizon: must be positive");
  if (c.steps < 1) f.push_back("steps: must be at least 1");
  if (c.particles < 1) f.push_back("particles: must be at least 1");
  if (c.paths < 1) f.push_back("paths: must be at least 1");
  if (c.workers < 1) f.push_back("workers: must be at least 1");
  if (c.mollifier_points < 2) f.push_back("mollifier_points: must be at least 2");
  if (uses_ladder(c.experiment) && c.ladder.size() < 2) f.push_back("ladder: ladder requires ≥ 2 levels");
  for (std::size_t i = 0; i < c.ladder.size(); ++i) {
    if (c.ladder[i] < 1) f.push_back("ladder: levels must be positive");
    if (i > 0 && c.ladder[i] <= c.ladder[i - 1]) {
      f.push_back("ladder: levels must be sorted strictly ascending");
      break;
    }
  }
  if (!c.measure.lebesgue && !(c.measure.q > 1.0)) f.push_back("measure.q: must exceed 1");
  if (c.measure.lebesgue && dims_ok) check_box(c.measure.lo, c.measure.hi, c.dim_d, "measure", f);
  if (dims_ok) check_box(c.grid.lo, c.grid.hi, c.dim_d, "grid", f);
  if (static_cast<int>(c.grid.cells.size()) != c.dim_d ||
      std::any_of(c.grid.cells.begin(), c.grid.cells.end(), [](int n) { return n < 1; }))
    f.push_back("grid.cells: need dim_d positive entries");
  if (c.experiment == ExperimentKind::OsgoodCertify) {
    if (c.pairs < 1) f.push_back("pairs: must be at least 1");
    if (!(c.margin >= 1.0)) f.push_back("margin: must be at least 1");
    if (c.epsilons.size() < 2) f.push_back("epsilons: need at least two values");
  }
  if (!(c.radius > 0.0)) f.push_back("radius: must be positive");
  for (double dl : c.deltas)
    if (!(dl > 0.0)) f.push_back("deltas: every delta must be positive");
  for (double p : c.moments)
    if (!(p >= 1.0)) f.push_back("moments: every p must be >= 1");
  if (!(c.central_fraction > 0.0 && c.central_fraction <= 1.0))
    f.push_back("central_fraction: must lie in (0, 1]");
  if (c.bandwidth && !(*c.bandwidth > 0.0)) f.push_back("bandwidth: must be positive");
  if (c.field_params.vseries_terms < 1) f.push_back("field_params.vseries_terms: must be positive");

  if (c.experiment == ExperimentKind::FpeDuality) {
    const std::set<std::string> schemes{"explicit", "implicit", "crank-nicolson", "cn"};
    if (!schemes.count(c.fpe.scheme)) f.push_back("fpe.scheme: unknown scheme '" + c.fpe.scheme + "'");
    if (c.fpe.boundary != "zero-flux" && c.fpe.boundary != "dirichlet0")
      f.push_back("fpe.boundary: expected 'zero-flux' or 'dirichlet0'");
    if (c.fpe.resolution < 2) f.push_back("fpe.resolution: must be at least 2");
    if (!(c.fpe.dt > 0.0)) f.push_back("fpe.dt: must be positive");
    if (c.fpe.snapshots < 1) f.push_back("fpe.snapshots: must be at least 1");
    if (c.fpe.snapshots >= 1 && c.steps % c.fpe.snapshots != 0)
      f.push_back("fpe.snapshots: must divide steps so snapshots fall on the particle grid");
    const bool ok_for_cfl = f.empty();
    if (c.fpe.scheme == "explicit" && ok_for_cfl) {
      // CFL: dt <= h^2 / (2 d max a) and dt <= h / max |b| over the solver grid.
      const CoefficientPair pair = make_field(c.field, c.field_params);
      double h = std::numeric_limits<double>::infinity();
      for (int i = 0; i < c.dim_d; ++i) h = std::min(h, (c.grid.hi[i] - c.grid.lo[i]) / c.fpe.resolution);
      Box box{Vec(c.dim_d), Vec(c.dim_d)};
      for (int i = 0; i < c.dim_d; ++i) {
        box.lo(i) = c.grid.lo[i];
        box.hi(i) = c.grid.hi[i];
      }
      const UniformGrid g(box, c.fpe.resolution);
      double max_a = 0.0, max_b = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const Vec x = g.center(k);
        const Mat a = pair.diffusion_matrix(x);
        for (int i = 0; i < c.dim_d; ++i) max_a = std::max(max_a, a(i, i));
        max_b = std::max(max_b, pair.drift(x).cwiseAbs().maxCoeff());
      }
      double limit = std::numeric_limits<double>::infinity();
      if (max_a > 0.0) limit = std::min(limit, h * h / (2.0 * c.dim_d * max_a));
      if (max_b > 0.0) limit = std::min(limit, h / max_b);
      if (c.fpe.dt > limit) {
        std::ostringstream os;
        os << "fpe.dt: " << c.fpe.dt << " violates the explicit CFL condition; admissible dt <= "
           << limit;
        f.push_back(os.str());
      }
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  std::vector<std::string> findings;
  ExperimentConfig c = parse_unchecked(j, findings);
  if (findings.empty()) semantic_checks(c, findings);
  if (!findings.empty()) throw ConfigError(findings);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(j);
}

std::vector<std::string> validate_json(const nlohmann::json& j) {
  std::vector<std::string> findings;
  const ExperimentConfig c = parse_unchecked(j, findings);
  if (findings.empty()) semantic_checks(c, findings);
  return findings;
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> findings;
  semantic_checks(c, findings);
  return findings;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = to_string(c.experiment);
  j["field"] = c.field;
  j["modulus"] = c.modulus;
  j["dim_d"] = c.dim_d;
  j["dim_m"] = c.dim_m;
  j["horizon"] = c.horizon;
  j["steps"] = c.steps;
  j["particles"] = c.particles;
  j["paths"] = c.paths;
  j["ladder"] = c.ladder;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["output"] = c.output;
  j["mollifier_points"] = c.mollifier_points;
  j["pairs"] = c.pairs;
  j["radius"] = c.radius;
  j["margin"] = c.margin;
  j["epsilons"] = c.epsilons;
  j["deltas"] = c.deltas;
  j["final_ratio"] = c.final_ratio;
  j["moments"] = c.moments;
  j["central_fraction"] = c.central_fraction;
  j["slack"] = c.slack;
  j["bandwidth"] = c.bandwidth ? nlohmann::json(*c.bandwidth) : nlohmann::json();
  j["measure"] = {{"kind", c.measure.lebesgue ? "lebesgue" : "weighted"},
                  {"q", c.measure.q},
                  {"lo", c.measure.lo},
                  {"hi", c.measure.hi}};
  j["grid"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"cells", c.grid.cells}};
  j["field_params"] = {{"sigma_scale", c.field_params.sigma_scale},
                       {"vseries_terms", c.field_params.vseries_terms},
                       {"vseries_table", c.field_params.vseries_table},
                       {"power", c.field_params.power}};
  j["fpe"] = {{"scheme", c.fpe.scheme},         {"resolution", c.fpe.resolution},
              {"dt", c.fpe.dt},                 {"boundary", c.fpe.boundary},
              {"snapshots", c.fpe.snapshots},   {"uniqueness", c.fpe.uniqueness}};
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  // worker count and output location do not change results
  j.erase("workers");
  j.erase("output");
  return sha256_hex(j.dump());
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  switch (kind) {
    case ExperimentKind::OsgoodCertify:
      c.field = "vseries";
      c.modulus = "loglinear";
      c.radius = 1.0;
      c.pairs = 100000;
      c.margin = 1.25;
      c.grid = {{-1.0}, {1.0}, {64}};
      break;
    case ExperimentKind::MollifyLadder:
      c.field = "vseries";
      c.ladder = {4, 8, 16, 32, 64};
      c.radius = 2.0;
      c.grid = {{-2.0}, {2.0}, {512}};
      break;
    case ExperimentKind::FlowCauchy:
      c.field = "vseries";
      c.ladder = {4, 8, 16, 32, 64};
      c.field_params.sigma_scale = 0.5;
      c.field_params.vseries_table = 1 << 17;
      c.measure.q = 2.0;
      c.particles = 1000;
      c.paths = 20;
      c.steps = 512;
      c.radius = 4.0;
      break;
    case ExperimentKind::DensityBound:
      c.field = "contracting";
      c.field_params.sigma_scale = 0.2;
      c.measure = {true, 2.0, {-2.0}, {2.0}};
      c.grid = {{-2.0}, {2.0}, {128}};
      c.particles = 20000;
      c.paths = 16;
      c.steps = 128;
      c.moments = {1.0, 2.0};
      break;
    case ExperimentKind::FpeDuality:
      c.field = "ou";
      c.field_params.sigma_scale = std::sqrt(2.0);
      c.measure.q = 4.0;  // tail mass outside [-8, 8] stays below 1e-8
      c.grid = {{-8.0}, {8.0}, {256}};
      c.fpe = {"crank-nicolson", 512, 0.01, "zero-flux", 4, false};
      c.particles = 500;
      c.paths = 100;
      c.steps = 200;
      break;
  }
  return c;
}

}  // namespace oslab
