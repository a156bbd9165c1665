#include "oslab/flow.hpp"

#include "oslab/errors.hpp"
#include "oslab/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace oslab {

namespace {

constexpr double kBlowup = 1e150;
constexpr std::size_t kParticleBlock = 256;

bool finite_state(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i)) || std::abs(x(i)) > kBlowup) return false;
  return true;
}

void warn_rough(const CoefficientPair& pair) {
  if (pair.rough() && pair.smoothness() != Smoothness::Mollified)
    std::clog << "oslab: warning: integrating non-Lipschitz field '" << pair.name()
              << "' directly; results show unregularized behaviour\n";
}

}  // namespace

WeightedPoints WeightedPoints::single(const Vec& x) { return {{x}, {1.0}}; }

WeightedPoints WeightedPoints::equal_weights(std::vector<Vec> points) {
  WeightedPoints out;
  const double w = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
  out.weights.assign(points.size(), w);
  out.points = std::move(points);
  return out;
}

// ---------------------------------------------------------------------------

BrownianStore::BrownianStore(std::uint64_t master_seed, int n_paths, int dim_m, double horizon,
                             int n_steps) {
  if (n_paths < 1 || n_steps < 1) throw ParameterError("Brownian store needs paths and steps");
  if (dim_m < 1 || dim_m > kMaxDim) throw ParameterError("noise dimension must be in 1..3");
  if (!(horizon > 0.0)) throw ParameterError("horizon must be positive");
  impl_ = std::make_shared<const Impl>(Impl{master_seed, n_paths, dim_m, horizon, n_steps});
}

double BrownianStore::increment(int path, int step, int component) const {
  const auto z = normal_pair(impl_->seed, static_cast<std::uint64_t>(path),
                             static_cast<std::uint64_t>(step) * 2 + component / 2);
  return std::sqrt(dt()) * z[component % 2];
}

std::vector<double> BrownianStore::path_increments(int path, int stride) const {
  if (stride < 1 || impl_->n_steps % stride != 0)
    throw ParameterError("stride must divide the fine step count");
  const int m = impl_->dim_m;
  const int coarse = impl_->n_steps / stride;
  std::vector<double> out(static_cast<std::size_t>(coarse) * m, 0.0);
  const double sdt = std::sqrt(dt());
  for (int k = 0; k < impl_->n_steps; ++k) {
    double* row = &out[static_cast<std::size_t>(k / stride) * m];
    for (int block = 0; block * 2 < m; ++block) {
      const auto z = normal_pair(impl_->seed, static_cast<std::uint64_t>(path),
                                 static_cast<std::uint64_t>(k) * 2 + block);
      row[2 * block] += sdt * z[0];
      if (2 * block + 1 < m) row[2 * block + 1] += sdt * z[1];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FlowEnsemble::FlowEnsemble(BrownianStore noise, std::shared_ptr<const WeightedPoints> starts,
                           int stride, int dim_d, bool stored,
                           std::optional<double> stopping_radius, std::string field,
                           int record_every)
    : noise_(std::move(noise)),
      starts_(std::move(starts)),
      stride_(stride),
      dim_d_(dim_d),
      stored_(stored),
      stopping_radius_(stopping_radius),
      field_(std::move(field)),
      record_every_(record_every) {
  if (record_every_ < 1 || n_steps() % record_every_ != 0)
    throw ParameterError("record_every must divide the coarse step count");
  const std::size_t n = n_trajectories();
  final_.assign(n * dim_d_, 0.0);
  sup_norm_.assign(n, 0.0);
  stopped_at_.assign(n, n_steps());
  exited_.assign(n, 0);
  diverged_.assign(n, 0);
  if (stored_) traj_.assign(n * n_records() * dim_d_, 0.0);
}

Vec FlowEnsemble::state(int path, std::size_t particle, int k) const {
  if (!stored_) throw CapabilityError("ensemble was integrated without trajectory storage");
  if (k < 0 || k > n_steps() || !recorded(k)) throw ParameterError("step was not recorded");
  Vec x(dim_d_);
  const double* p = &traj_[(flat(path, particle) * n_records() + k / record_every_) * dim_d_];
  for (int i = 0; i < dim_d_; ++i) x(i) = p[i];
  return x;
}

Vec FlowEnsemble::final_state(int path, std::size_t particle) const {
  Vec x(dim_d_);
  const double* p = &final_[flat(path, particle) * dim_d_];
  for (int i = 0; i < dim_d_; ++i) x(i) = p[i];
  return x;
}

std::size_t FlowEnsemble::diverged_count() const {
  return static_cast<std::size_t>(std::count(diverged_.begin(), diverged_.end(), 1));
}

namespace {

// One Euler-Maruyama / Milstein step; returns the proposed next state.
struct Stepper {
  const CoefficientPair& pair;
  Scheme scheme;
  double dt;
  int d, m;
  const Tabulation1D* tab;

  Vec step(const Vec& x, const double* dB) const {
    if (tab && d == 1 && tab->drift.covers(x(0)) && tab->sigma.covers(x(0))) {
      const double b = tab->drift.eval(x(0));
      const double s = tab->sigma.eval(x(0));
      double next = x(0) + b * dt + s * dB[0];
      if (scheme == Scheme::Milstein1D) {
        const double hs = 1e-6;
        const double ds = (tab->sigma.eval(std::min(x(0) + hs, tab->sigma.hi())) -
                           tab->sigma.eval(std::max(x(0) - hs, tab->sigma.lo))) / (2 * hs);
        next += 0.5 * s * ds * (dB[0] * dB[0] - dt);
      }
      Vec out(1);
      out(0) = next;
      return out;
    }
    Vec next = x + pair.drift(x) * dt;
    const Mat s = pair.sigma(x);
    for (int k = 0; k < m; ++k) next += s.col(k) * dB[k];
    if (scheme == Scheme::Milstein1D && !pair.constant_sigma()) {
      const double ds = pair.grad_sigma(x).slices[0](0, 0);
      next(0) += 0.5 * s(0, 0) * ds * (dB[0] * dB[0] - dt);
    }
    return next;
  }
};

void validate_integration(const CoefficientPair& pair, const WeightedPoints& starts,
                          const BrownianStore& noise, const IntegrationOptions& opt) {
  if (starts.size() == 0) throw ParameterError("integration needs at least one start point");
  if (starts.dim() != pair.dim_d()) throw ParameterError("start points do not match field dimension");
  if (noise.dim_m() != pair.dim_m()) throw ParameterError("noise dimension does not match sigma");
  if (opt.stride < 1 || noise.n_steps() % opt.stride != 0)
    throw ParameterError("stride must divide the Brownian step count");
  if (opt.scheme == Scheme::Milstein1D && (pair.dim_d() != 1 || pair.dim_m() != 1))
    throw ParameterError("Milstein scheme is offered only for d = m = 1");
  if (opt.stopping_radius && !(*opt.stopping_radius > 0.0))
    throw ParameterError("stopping radius must be positive");
}

}  // namespace

FlowEnsemble integrate(const CoefficientPair& pair, const WeightedPoints& starts,
                       const BrownianStore& noise, const IntegrationOptions& options) {
  return integrate_shared(pair, std::make_shared<const WeightedPoints>(starts), noise, options);
}

FlowEnsemble integrate_shared(const CoefficientPair& pair, std::shared_ptr<const WeightedPoints> starts,
                              const BrownianStore& noise, const IntegrationOptions& opt) {
  validate_integration(pair, *starts, noise, opt);
  warn_rough(pair);
  const int d = pair.dim_d(), m = pair.dim_m();
  FlowEnsemble e(noise, starts, opt.stride, d, opt.store_trajectories, opt.stopping_radius,
                 pair.name(), opt.record_every);
  const int N = e.n_steps();
  const int T = e.n_records();
  const int every = e.record_every();
  const std::size_t P = starts->size();
  const std::size_t blocks = (P + kParticleBlock - 1) / kParticleBlock;
  const Stepper stepper{pair, opt.scheme, e.dt(), d, m, pair.tabulation().get()};
  const double lambda = opt.stopping_radius.value_or(std::numeric_limits<double>::infinity());

  parallel_chunks(static_cast<std::size_t>(noise.n_paths()) * blocks, 1, opt.workers,
                  [&](std::size_t item, std::size_t) {
    const int path = static_cast<int>(item / blocks);
    const std::size_t p0 = (item % blocks) * kParticleBlock;
    const std::size_t p1 = std::min(P, p0 + kParticleBlock);
    const std::vector<double> dB = noise.path_increments(path, opt.stride);
    for (std::size_t i = p0; i < p1; ++i) {
      const std::size_t f = e.flat(path, i);
      Vec x = starts->points[i];
      double sup = x.norm();
      bool frozen = false;
      double* store = e.stored_ ? &e.traj_[f * T * d] : nullptr;
      auto record = [&](int k) {
        if (store && k % every == 0)
          for (int c = 0; c < d; ++c) store[(k / every) * d + c] = x(c);
      };
      if (sup >= lambda) {
        e.stopped_at_[f] = 0;
        e.exited_[f] = 1;
        frozen = true;
      }
      record(0);
      for (int k = 0; k < N; ++k) {
        if (!frozen) {
          Vec next = stepper.step(x, &dB[static_cast<std::size_t>(k) * m]);
          if (!finite_state(next)) {
            e.diverged_[f] = 1;
            frozen = true;
          } else {
            x = next;
            const double r = x.norm();
            sup = std::max(sup, r);
            if (r >= lambda) {
              e.stopped_at_[f] = k + 1;
              e.exited_[f] = 1;
              frozen = true;
            }
          }
        }
        record(k + 1);
      }
      e.sup_norm_[f] = sup;
      for (int c = 0; c < d; ++c) e.final_[f * d + c] = x(c);
    }
  });
  return e;
}

// ---------------------------------------------------------------------------

namespace {

void require_coupled(const FlowEnsemble& a, const FlowEnsemble& b) {
  if (!a.noise().same_as(b.noise()))
    throw CouplingError("flows were integrated with different Brownian stores");
  if (a.starts_ptr() != b.starts_ptr()) {
    const auto& sa = a.starts();
    const auto& sb = b.starts();
    bool same = sa.size() == sb.size();
    for (std::size_t i = 0; same && i < sa.size(); ++i)
      same = sa.points[i] == sb.points[i] && sa.weights[i] == sb.weights[i];
    if (!same) throw CouplingError("flows were started from different point sets");
  }
  if (a.dim() != b.dim()) throw ParameterError("flows have different dimensions");
}

}  // namespace

std::vector<double> sup_distance(const FlowEnsemble& a, const FlowEnsemble& b) {
  require_coupled(a, b);
  if (a.stride() != b.stride()) throw ParameterError("sup_distance needs identical time grids");
  if (!a.stored() || !b.stored()) throw CapabilityError("sup_distance needs stored trajectories");
  if (a.record_every() != 1 || b.record_every() != 1)
    throw CapabilityError("sup_distance needs every step recorded");
  const std::size_t n = a.n_trajectories();
  const int T = a.n_times(), d = a.dim();
  std::vector<double> out(n, 0.0);
  const auto& ta = a.trajectories();
  const auto& tb = b.trajectories();
  for (std::size_t f = 0; f < n; ++f) {
    double best = 0.0;
    for (int k = 0; k < T; ++k) {
      double sq = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = ta[(f * T + k) * d + c] - tb[(f * T + k) * d + c];
        sq += diff * diff;
      }
      best = std::max(best, sq);
    }
    out[f] = std::sqrt(best);
  }
  return out;
}

std::vector<double> sup_distance_nested(const FlowEnsemble& coarse, const FlowEnsemble& fine) {
  require_coupled(coarse, fine);
  if (!coarse.stored() || !fine.stored())
    throw CapabilityError("sup_distance_nested needs stored trajectories");
  if (coarse.record_every() != 1 || fine.record_every() != 1)
    throw CapabilityError("sup_distance_nested needs every step recorded");
  if (coarse.stride() % fine.stride() != 0)
    throw ParameterError("fine grid must refine the coarse grid");
  const int ratio = coarse.stride() / fine.stride();
  const std::size_t n = coarse.n_trajectories();
  const int Tc = coarse.n_times(), Tf = fine.n_times(), d = coarse.dim();
  const auto& tc = coarse.trajectories();
  const auto& tf = fine.trajectories();
  std::vector<double> out(n, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    double best = 0.0;
    for (int k = 0; k < Tf; ++k) {
      const int kc = std::min(k / ratio, Tc - 2);
      const double w = static_cast<double>(k - kc * ratio) / ratio;
      double sq = 0.0;
      for (int c = 0; c < d; ++c) {
        const double xc = (1.0 - w) * tc[(f * Tc + kc) * d + c] + w * tc[(f * Tc + kc + 1) * d + c];
        const double diff = xc - tf[(f * Tf + k) * d + c];
        sq += diff * diff;
      }
      best = std::max(best, sq);
    }
    out[f] = std::sqrt(best);
  }
  return out;
}

namespace {

// Per-path weighted sums of a per-trajectory quantity, then mean/stderr over paths.
template <typename F>
Estimate path_estimate(int n_paths, std::size_t n_particles, const std::vector<double>& weights,
                       F&& value) {
  std::vector<double> per_path(n_paths, 0.0);
  std::vector<double> terms(n_particles);
  for (int p = 0; p < n_paths; ++p) {
    for (std::size_t i = 0; i < n_particles; ++i)
      terms[i] = weights[i] * value(p * n_particles + i);
    per_path[p] = pairwise_sum(terms);
  }
  const auto ms = mean_stderr(per_path);
  return {ms.mean, ms.std_error};
}

}  // namespace

Estimate psi_stability(const FlowEnsemble& a, const FlowEnsemble& b, const AuxiliaryFunction& aux,
                       double level_R) {
  const auto gap = sup_distance(a, b);
  return path_estimate(a.n_paths(), a.n_particles(), a.starts().weights, [&](std::size_t f) {
    const int p = static_cast<int>(f / a.n_particles());
    const std::size_t i = f % a.n_particles();
    if (a.sup_norm(p, i) > level_R || b.sup_norm(p, i) > level_R) return 0.0;
    return aux(gap[f] * gap[f]);
  });
}

Estimate moment_report(const FlowEnsemble& e, double exponent) {
  if (!(exponent > 0.0)) throw ParameterError("moment exponent must be positive");
  return path_estimate(e.n_paths(), e.n_particles(), e.starts().weights, [&](std::size_t f) {
    const int p = static_cast<int>(f / e.n_particles());
    return std::pow(e.sup_norm(p, f % e.n_particles()), exponent);
  });
}

// ---------------------------------------------------------------------------

LadderResult integrate_ladder(const std::vector<CoefficientPair>& levels, std::size_t reference,
                              const WeightedPoints& starts, const BrownianStore& noise,
                              const IntegrationOptions& opt) {
  if (levels.size() < 2) throw ParameterError("ladder needs at least two levels");
  if (reference >= levels.size()) throw ParameterError("reference level out of range");
  for (const auto& pair : levels) {
    validate_integration(pair, starts, noise, opt);
    warn_rough(pair);
  }
  const std::size_t L = levels.size();
  const int d = levels[0].dim_d(), m = levels[0].dim_m();
  const std::size_t P = starts.size();
  const int N = noise.n_steps() / opt.stride;
  const double dt = noise.dt() * opt.stride;

  LadderResult r;
  r.n_paths = noise.n_paths();
  r.n_particles = P;
  r.weights = starts.weights;
  r.reference = reference;
  const std::size_t n = static_cast<std::size_t>(r.n_paths) * P;
  r.sup_gap.assign(L, std::vector<double>(n, 0.0));
  r.sup_norm.assign(L, std::vector<double>(n, 0.0));
  std::vector<std::uint8_t> diverged(n, 0);

  std::vector<Stepper> steppers;
  for (const auto& pair : levels)
    steppers.push_back(Stepper{pair, opt.scheme, dt, d, m, pair.tabulation().get()});

  const std::size_t blocks = (P + kParticleBlock - 1) / kParticleBlock;
  parallel_chunks(static_cast<std::size_t>(r.n_paths) * blocks, 1, opt.workers,
                  [&](std::size_t item, std::size_t) {
    const int path = static_cast<int>(item / blocks);
    const std::size_t p0 = (item % blocks) * kParticleBlock;
    const std::size_t p1 = std::min(P, p0 + kParticleBlock);
    const std::vector<double> dB = noise.path_increments(path, opt.stride);
    std::vector<Vec> x(L);
    std::vector<double> gap(L), norm(L);
    for (std::size_t i = p0; i < p1; ++i) {
      const std::size_t f = static_cast<std::size_t>(path) * P + i;
      for (std::size_t l = 0; l < L; ++l) {
        x[l] = starts.points[i];
        gap[l] = 0.0;
        norm[l] = x[l].norm();
      }
      bool bad = false;
      for (int k = 0; k < N && !bad; ++k) {
        const double* inc = &dB[static_cast<std::size_t>(k) * m];
        for (std::size_t l = 0; l < L; ++l) {
          Vec next = steppers[l].step(x[l], inc);
          if (!finite_state(next)) {
            bad = true;
            break;
          }
          x[l] = next;
          norm[l] = std::max(norm[l], x[l].norm());
        }
        if (bad) break;
        for (std::size_t l = 0; l < L; ++l)
          gap[l] = std::max(gap[l], (x[l] - x[reference]).norm());
      }
      diverged[f] = bad ? 1 : 0;
      for (std::size_t l = 0; l < L; ++l) {
        r.sup_gap[l][f] = bad ? std::numeric_limits<double>::infinity() : gap[l];
        r.sup_norm[l][f] = bad ? std::numeric_limits<double>::infinity() : norm[l];
      }
    }
  });
  r.diverged = static_cast<std::size_t>(std::count(diverged.begin(), diverged.end(), 1));
  return r;
}

Estimate ladder_cauchy_metric(const LadderResult& r, std::size_t level) {
  return path_estimate(r.n_paths, r.n_particles, r.weights, [&](std::size_t f) {
    const double g = r.sup_gap[level][f];
    return std::min(1.0, g * g);
  });
}

Estimate ladder_psi(const LadderResult& r, std::size_t level, const AuxiliaryFunction& aux,
                    double level_R) {
  return path_estimate(r.n_paths, r.n_particles, r.weights, [&](std::size_t f) {
    if (r.sup_norm[level][f] > level_R || r.sup_norm[r.reference][f] > level_R) return 0.0;
    const double g = r.sup_gap[level][f];
    return aux(g * g);
  });
}

// ---------------------------------------------------------------------------

bool ProbeReport::all_hold() const {
  return std::all_of(rows.begin(), rows.end(), [](const ProbeRow& r) { return r.holds; });
}

ProbeReport uniqueness_probe(const CoefficientPair& pair, const BrownianStore& noise,
                             const WeightedPoints& starts, const OsgoodModulus& modulus,
                             const std::vector<double>& deltas, double eta, double lambda,
                             const IntegrationOptions& first, const IntegrationOptions& second) {
  if (!(eta > 0.0) || !(lambda > 0.0)) throw ParameterError("eta and lambda must be positive");
  auto shared = std::make_shared<const WeightedPoints>(starts);
  IntegrationOptions o1 = first, o2 = second;
  o1.stopping_radius = o2.stopping_radius = lambda;
  o1.store_trajectories = o2.store_trajectories = true;
  o1.record_every = o2.record_every = 1;
  const FlowEnsemble a = integrate_shared(pair, shared, noise, o1);
  const FlowEnsemble b = integrate_shared(pair, shared, noise, o2);

  // Common grid: the coarser of the two.
  const int coarse_stride = std::max(a.stride(), b.stride());
  if (coarse_stride % a.stride() != 0 || coarse_stride % b.stride() != 0)
    throw ParameterError("probe discretizations must share a common grid");
  const int ra = coarse_stride / a.stride(), rb = coarse_stride / b.stride();
  const int N = noise.n_steps() / coarse_stride;

  const std::size_t P = starts.size();
  const std::size_t n = a.n_trajectories();
  std::vector<double> z2(n, 0.0);
  for (int path = 0; path < a.n_paths(); ++path)
    for (std::size_t i = 0; i < P; ++i) {
      // tau on the common grid: first coarse index at which either process has stopped.
      const int ta = a.exited(path, i) ? (a.stopped_at(path, i) + ra - 1) / ra : N;
      const int tb = b.exited(path, i) ? (b.stopped_at(path, i) + rb - 1) / rb : N;
      const int k = std::min({N, ta, tb});
      const Vec z = a.state(path, i, k * ra) - b.state(path, i, k * rb);
      z2[a.flat(path, i)] = z.squaredNorm();
    }

  ProbeReport rep;
  rep.eta = eta;
  rep.lambda = lambda;
  {
    const auto ms = path_estimate(a.n_paths(), P, starts.weights, [&](std::size_t f) { return z2[f]; });
    rep.rms_gap = std::sqrt(ms.value);
  }
  const auto prob = path_estimate(a.n_paths(), P, starts.weights,
                                  [&](std::size_t f) { return z2[f] > eta * eta ? 1.0 : 0.0; });
  for (double delta : deltas) {
    const AuxiliaryFunction aux(modulus, delta);
    const double denom = aux(eta * eta);
    const auto mp = path_estimate(a.n_paths(), P, starts.weights,
                                  [&](std::size_t f) { return aux(z2[f]); });
    ProbeRow row;
    row.delta = delta;
    row.probability = prob.value;
    row.probability_se = prob.std_error;
    row.mean_psi = mp.value;
    row.mean_psi_se = mp.std_error;
    row.bound = mp.value / denom;
    row.bound_se = mp.std_error / denom;
    const double se = std::hypot(row.probability_se, row.bound_se);
    row.holds = row.probability <= row.bound + 3.0 * se;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "OSLABTRJ1\n";

template <typename T>
void write_column(std::ofstream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_column(std::ifstream& in, std::vector<T>& v, std::size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw ParameterError("truncated trajectory file");
}

}  // namespace

void write_trajectories(const std::string& path, const FlowEnsemble& e) {
  if (!e.stored()) throw CapabilityError("ensemble has no stored trajectories to dump");
  nlohmann::json h;
  h["format"] = "oslab-trajectories";
  h["version"] = 1;
  h["field"] = e.field();
  h["dim_d"] = e.dim();
  h["dim_m"] = e.noise().dim_m();
  h["n_paths"] = e.n_paths();
  h["n_particles"] = e.n_particles();
  h["n_records"] = e.n_records();
  h["record_every"] = e.record_every();
  h["stride"] = e.stride();
  h["horizon"] = e.noise().horizon();
  h["fine_steps"] = e.noise().n_steps();
  h["noise_seed"] = e.noise().master_seed();
  h["stopping_radius"] = e.stopping_radius() ? nlohmann::json(*e.stopping_radius()) : nlohmann::json();
  h["columns"] = nlohmann::json::array();
  for (int c = 0; c < e.dim(); ++c) h["columns"].push_back("x" + std::to_string(c + 1));
  h["columns"].push_back("sup_norm");
  h["columns"].push_back("stopped_at:int32");
  h["columns"].push_back("diverged:uint8");
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(len));

  const std::size_t n = e.n_trajectories();
  const int T = e.n_records(), d = e.dim();
  const auto& traj = e.trajectories();
  for (int c = 0; c < d; ++c) {
    std::vector<double> col(n * T);
    for (std::size_t f = 0; f < n; ++f)
      for (int k = 0; k < T; ++k) col[f * T + k] = traj[(f * T + k) * d + c];
    write_column(out, col);
  }
  std::vector<double> sup(n);
  std::vector<std::int32_t> stop(n);
  std::vector<std::uint8_t> div(n);
  for (std::size_t f = 0; f < n; ++f) {
    const int p = static_cast<int>(f / e.n_particles());
    const std::size_t i = f % e.n_particles();
    sup[f] = e.sup_norm(p, i);
    stop[f] = e.stopped_at(p, i);
    div[f] = e.diverged(p, i) ? 1 : 0;
  }
  write_column(out, sup);
  write_column(out, stop);
  write_column(out, div);
}

namespace {

std::string read_header(std::ifstream& in) {
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ParameterError("not an oslab trajectory file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParameterError("truncated trajectory header");
  return header;
}

}  // namespace

std::string read_trajectory_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path);
  return read_header(in);
}

FlowEnsemble read_trajectories(const std::string& path, const BrownianStore& noise,
                               std::shared_ptr<const WeightedPoints> starts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path);
  const auto h = nlohmann::json::parse(read_header(in));
  if (h.at("noise_seed").get<std::uint64_t>() != noise.master_seed() ||
      h.at("n_paths").get<int>() != noise.n_paths() ||
      h.at("fine_steps").get<int>() != noise.n_steps() ||
      h.at("n_particles").get<std::size_t>() != starts->size())
    throw ParameterError("trajectory file does not match the supplied noise and starts");
  std::optional<double> lambda;
  if (!h.at("stopping_radius").is_null()) lambda = h.at("stopping_radius").get<double>();
  FlowEnsemble e(noise, starts, h.at("stride").get<int>(), h.at("dim_d").get<int>(), true, lambda,
                 h.at("field").get<std::string>(), h.value("record_every", 1));
  const std::size_t n = e.n_trajectories();
  const int T = e.n_records(), d = e.dim();
  for (int c = 0; c < d; ++c) {
    std::vector<double> col;
    read_column(in, col, n * T);
    for (std::size_t f = 0; f < n; ++f)
      for (int k = 0; k < T; ++k) e.traj_[(f * T + k) * d + c] = col[f * T + k];
  }
  std::vector<std::int32_t> stop;
  read_column(in, e.sup_norm_, n);
  read_column(in, stop, n);
  read_column(in, e.diverged_, n);
  for (std::size_t f = 0; f < n; ++f) {
    e.stopped_at_[f] = stop[f];
    e.exited_[f] = lambda && stop[f] < e.n_steps() ? 1 : 0;
    for (int c = 0; c < d; ++c) e.final_[f * d + c] = e.traj_[(f * T + T - 1) * d + c];
  }
  return e;
}

void write_psi_summary(const std::string& path, const std::vector<PsiSummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "n_level,delta,psi_value,stderr\n" << std::setprecision(12);
  for (const auto& r : rows)
    out << r.n_level << ',' << r.delta << ',' << r.psi_value << ',' << r.std_error << '\n';
}

}  // namespace oslab
