#include "oslab/fokker_planck.hpp"

#include "oslab/errors.hpp"
#include "oslab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace oslab {

std::string to_string(FpeScheme s) {
  switch (s) {
    case FpeScheme::ExplicitEuler: return "explicit";
    case FpeScheme::ImplicitEuler: return "implicit";
    case FpeScheme::CrankNicolson: return "crank-nicolson";
  }
  return "?";
}

std::string to_string(Boundary b) { return b == Boundary::ZeroFlux ? "zero-flux" : "dirichlet0"; }

FpeScheme parse_scheme(const std::string& s) {
  if (s == "explicit") return FpeScheme::ExplicitEuler;
  if (s == "implicit") return FpeScheme::ImplicitEuler;
  if (s == "crank-nicolson" || s == "cn") return FpeScheme::CrankNicolson;
  throw ParameterError("unknown FPE scheme '" + s + "'");
}

Boundary parse_boundary(const std::string& s) {
  if (s == "zero-flux") return Boundary::ZeroFlux;
  if (s == "dirichlet0") return Boundary::Dirichlet0;
  throw ParameterError("unknown boundary '" + s + "'");
}

GeneratorGrid::GeneratorGrid(const CoefficientPair& pair, const UniformGrid& grid, Boundary boundary,
                             bool upwinding)
    : grid_(grid), boundary_(boundary), upwinding_(upwinding) {
  if (grid.dim() != pair.dim_d()) throw ParameterError("grid and field dimensions differ");
  const std::size_t n = grid.size();
  a_.resize(n);
  b_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const Vec x = grid.center(c);
    a_[c] = pair.diffusion_matrix(x);
    b_[c] = pair.drift(x);
    for (int i = 0; i < dim(); ++i) max_a_ = std::max(max_a_, a_[c](i, i));
    max_b_ = std::max(max_b_, b_[c].cwiseAbs().maxCoeff());
  }
  assemble();
}

double GeneratorGrid::explicit_dt_limit() const {
  double h = grid_.spacing(0);
  for (int i = 1; i < dim(); ++i) h = std::min(h, grid_.spacing(i));
  double limit = std::numeric_limits<double>::infinity();
  if (max_a_ > 0.0) limit = std::min(limit, h * h / (2.0 * dim() * max_a_));
  if (max_b_ > 0.0) limit = std::min(limit, h / max_b_);
  return limit;
}

void GeneratorGrid::assemble() {
  const int d = dim();
  const std::size_t n = grid_.size();
  faces_.clear();
  upwind_faces_ = 0;
  for (int i = 0; i < d; ++i) {
    const double h = grid_.spacing(i);
    const int cells = grid_.cells(i);
    for (std::size_t c = 0; c < n; ++c) {
      const auto idx = grid_.unflatten(c);
      // faces to the right of every cell, plus the left boundary face
      std::vector<std::pair<long, long>> pairs;
      if (idx[i] == 0) pairs.emplace_back(-1, static_cast<long>(c));
      pairs.emplace_back(static_cast<long>(c),
                         idx[i] + 1 < cells ? static_cast<long>(c + grid_.stride(i)) : -1L);
      for (auto [l, r] : pairs) {
        if ((l < 0 || r < 0) && boundary_ == Boundary::ZeroFlux) continue;
        const double al = l >= 0 ? a_[l](i, i) : a_[r](i, i);
        const double ar = r >= 0 ? a_[r](i, i) : a_[l](i, i);
        const double bl = l >= 0 ? b_[l](i) : b_[r](i);
        const double br = r >= 0 ? b_[r](i) : b_[l](i);
        const double v = 0.5 * (bl + br);
        const double af = 0.5 * (al + ar);
        double theta = 0.5;
        if (upwinding_ && std::abs(v) * h > 2.0 * af) {
          theta = v > 0.0 ? 1.0 : 0.0;
          ++upwind_faces_;
        }
        Face f{i, l, r, 0.0, 0.0};
        if (l >= 0) f.w_left = 0.5 * al / h + theta * bl;
        if (r >= 0) f.w_right = -0.5 * ar / h + (1.0 - theta) * br;
        faces_.push_back(f);
      }
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  for (const Face& f : faces_) {
    const double h = grid_.spacing(f.axis);
    for (auto [cell, w] : {std::pair{f.left, f.w_left}, std::pair{f.right, f.w_right}}) {
      if (cell < 0) continue;
      if (f.left >= 0) trip.emplace_back(f.left, cell, -w / h);
      if (f.right >= 0) trip.emplace_back(f.right, cell, w / h);
    }
  }
  // mixed second derivatives
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double scale = 1.0 / (4.0 * grid_.spacing(i) * grid_.spacing(j));
      for (std::size_t c = 0; c < n; ++c) {
        const auto idx = grid_.unflatten(c);
        for (int si : {-1, 1})
          for (int sj : {-1, 1}) {
            auto t = idx;
            t[i] += si;
            t[j] += sj;
            if (t[i] < 0 || t[i] >= grid_.cells(i) || t[j] < 0 || t[j] >= grid_.cells(j)) continue;
            const std::size_t src = grid_.flatten(t);
            trip.emplace_back(c, src, si * sj * scale * a_[src](i, j));
          }
      }
    }
  adjoint_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adjoint_.setFromTriplets(trip.begin(), trip.end());
  adjoint_.makeCompressed();
}

bool interior_supported(const ScalarGrid& phi, int ring) {
  const auto& g = phi.grid;
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (phi.values[c] == 0.0) continue;
    const auto idx = g.unflatten(c);
    for (int i = 0; i < g.dim(); ++i)
      if (idx[i] < ring || idx[i] >= g.cells(i) - ring) return false;
  }
  return true;
}

ScalarGrid apply_L(const GeneratorGrid& G, const ScalarGrid& phi) {
  if (!(phi.grid == G.grid())) throw ParameterError("phi lives on a different grid");
  if (!interior_supported(phi))
    std::clog << "oslab: warning: apply_L test function is nonzero on the boundary ring\n";
  const auto& g = G.grid();
  ScalarGrid out(g);
  const auto& u = phi.values;
  for (const auto& f : G.faces()) {
    const double ul = f.left >= 0 ? u[f.left] : 0.0;
    const double ur = f.right >= 0 ? u[f.right] : 0.0;
    const double jump = (ur - ul) / g.spacing(f.axis);
    if (f.left >= 0) out.values[f.left] += f.w_left * jump;
    if (f.right >= 0) out.values[f.right] += f.w_right * jump;
  }
  const int d = g.dim();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double scale = 1.0 / (4.0 * g.spacing(i) * g.spacing(j));
      for (std::size_t c = 0; c < g.size(); ++c) {
        const auto idx = g.unflatten(c);
        double acc = 0.0;
        for (int si : {-1, 1})
          for (int sj : {-1, 1}) {
            auto t = idx;
            t[i] += si;
            t[j] += sj;
            if (t[i] < 0 || t[i] >= g.cells(i) || t[j] < 0 || t[j] >= g.cells(j)) continue;
            acc += si * sj * u[g.flatten(t)];
          }
        out.values[c] += G.a(c)(i, j) * scale * acc;
      }
    }
  return out;
}

ScalarGrid apply_adjoint(const GeneratorGrid& G, const ScalarGrid& u) {
  if (!(u.grid == G.grid())) throw ParameterError("u lives on a different grid");
  ScalarGrid out(G.grid());
  Eigen::Map<const Eigen::VectorXd> in(u.values.data(), static_cast<Eigen::Index>(u.values.size()));
  Eigen::Map<Eigen::VectorXd> res(out.values.data(), static_cast<Eigen::Index>(out.values.size()));
  res = G.adjoint_matrix() * in;
  return out;
}

DensityGrid initial_density(const UniformGrid& grid, const ScalarFunction& u0, bool normalize) {
  DensityGrid g;
  g.values = ScalarGrid::tabulate(grid, u0);
  g.kind = DensityKind::PDE;
  if (g.values.min() < 0.0) throw DomainError("initial density must be nonnegative");
  if (normalize) {
    const double m = g.values.integral();
    if (!(m > 0.0)) throw ParameterError("initial density has no mass on the grid");
    for (double& v : g.values.values) v /= m;
  }
  return g;
}

DensityGrid uniform_density(const UniformGrid& grid) {
  const double v = 1.0 / grid.box().volume();
  return initial_density(grid, [v](const Vec&) { return v; }, false);
}

AdjointStepper::AdjointStepper(const GeneratorGrid& G, double dt, FpeScheme scheme)
    : G_(G), dt_(dt), scheme_(scheme) {
  if (!(dt > 0.0)) throw ParameterError("time step must be positive");
  const auto& A = G.adjoint_matrix();
  Eigen::SparseMatrix<double> I(A.rows(), A.cols());
  I.setIdentity();
  switch (scheme) {
    case FpeScheme::ExplicitEuler: {
      const double limit = G.explicit_dt_limit();
      if (dt > limit) {
        std::ostringstream os;
        os << "explicit step dt=" << dt << " violates CFL; admissible dt <= " << limit;
        throw CflError(os.str(), limit);
      }
      rhs_ = I + dt * A;
      break;
    }
    case FpeScheme::ImplicitEuler:
      rhs_ = I;
      lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu_->compute(Eigen::SparseMatrix<double>(I - dt * A));
      break;
    case FpeScheme::CrankNicolson:
      rhs_ = I + 0.5 * dt * A;
      lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu_->compute(Eigen::SparseMatrix<double>(I - 0.5 * dt * A));
      break;
  }
  if (lu_ && lu_->info() != Eigen::Success) throw std::runtime_error("FPE matrix factorization failed");
}

DensityGrid AdjointStepper::step(const DensityGrid& u) const {
  if (!(u.values.grid == G_.grid())) throw ParameterError("density lives on a different grid");
  DensityGrid out = u;
  out.kind = DensityKind::PDE;
  out.time = u.time + dt_;
  const Eigen::Index n = static_cast<Eigen::Index>(u.values.values.size());
  Eigen::Map<const Eigen::VectorXd> in(u.values.values.data(), n);
  Eigen::Map<Eigen::VectorXd> res(out.values.values.data(), n);
  Eigen::VectorXd r = rhs_ * in;
  if (lu_) res = lu_->solve(r);
  else res = r;
  const double vol = u.values.grid.cell_volume();
  for (double& v : out.values.values)
    if (v < 0.0) {
      ++out.clipped;
      out.clipped_mass += -v * vol;
      v = 0.0;
    }
  return out;
}

DensityGrid step_adjoint(const GeneratorGrid& G, const DensityGrid& u, double dt, FpeScheme scheme) {
  return AdjointStepper(G, dt, scheme).step(u);
}

double WeakSolutionPath::sup_l1() const {
  double m = 0.0;
  for (const auto& s : stats) m = std::max(m, s.l1);
  return m;
}

double WeakSolutionPath::sup_linf() const {
  double m = 0.0;
  for (const auto& s : stats) m = std::max(m, s.linf);
  return m;
}

namespace {

SnapshotStats stats_of(const DensityGrid& u) {
  SnapshotStats s;
  s.time = u.time;
  s.mass = u.values.integral();
  double l1 = 0.0, linf = 0.0;
  for (double v : u.values.values) {
    l1 += std::abs(v);
    linf = std::max(linf, std::abs(v));
  }
  s.l1 = l1 * u.values.grid.cell_volume();
  s.linf = linf;
  return s;
}

}  // namespace

WeakSolutionPath solve_fpe(const GeneratorGrid& G, const DensityGrid& u0, double horizon, double dt,
                           FpeScheme scheme, int snapshots) {
  if (!(horizon > 0.0)) throw ParameterError("horizon must be positive");
  if (!(dt > 0.0)) throw ParameterError("time step must be positive");
  if (snapshots < 1) throw ParameterError("need at least one snapshot interval");
  const int per = std::max(1, static_cast<int>(std::ceil(horizon / (snapshots * dt) - 1e-9)));
  const double step = horizon / (static_cast<double>(per) * snapshots);
  const AdjointStepper stepper(G, step, scheme);
  WeakSolutionPath out;
  out.scheme = scheme;
  out.dt = step;
  DensityGrid u = u0;
  u.kind = DensityKind::PDE;
  u.time = 0.0;
  u.clipped = 0;
  u.clipped_mass = 0.0;
  out.snapshots.push_back(u);
  out.stats.push_back(stats_of(u));
  for (int s = 1; s <= snapshots; ++s) {
    for (int k = 0; k < per; ++k) {
      u = stepper.step(u);
      out.clipped_cells += u.clipped;
      out.clipped_mass += u.clipped_mass;
      u.clipped = 0;
      u.clipped_mass = 0.0;
    }
    u.time = horizon * s / snapshots;
    out.snapshots.push_back(u);
    out.stats.push_back(stats_of(u));
  }
  return out;
}

bool DualityReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const DualityRow& r) { return r.passed; });
}

DualityReport duality_check(const FlowEnsemble& e, const WeakSolutionPath& path,
                            const std::vector<TestFunction>& tests, const DualityOptions& opt) {
  DualityReport rep;
  for (const auto& snap : path.snapshots) {
    int k = -1;
    for (int j = 0; j <= e.n_steps(); ++j)
      if (std::abs(e.time(j) - snap.time) <= 1e-9 * std::max(1.0, snap.time)) {
        k = j;
        break;
      }
    if (k < 0) continue;
    if (k != 0 && k != e.n_steps() && (!e.stored() || !e.recorded(k))) continue;
    const auto& g = snap.values.grid;
    const double vol = g.cell_volume();
    for (const auto& tf : tests) {
      std::vector<double> terms(g.size()), abs_terms(g.size());
      for (std::size_t c = 0; c < g.size(); ++c) {
        const double v = tf.phi(g.center(c)) * snap.values.values[c];
        terms[c] = v;
        abs_terms[c] = std::abs(v);
      }
      DualityRow row;
      row.time = snap.time;
      row.name = tf.name;
      row.pde = pairwise_sum(terms) * vol;
      const double abs_int = pairwise_sum(abs_terms) * vol;

      auto at = [&](int p, std::size_t i) {
        if (k == 0) return tf.phi(e.starts().points[i]);
        if (k == e.n_steps()) return tf.phi(e.final_state(p, i));
        return tf.phi(e.state(p, i, k));
      };
      const std::size_t P = e.n_particles();
      if (e.n_paths() >= 2) {
        std::vector<double> per_path(e.n_paths());
        std::vector<double> t(P), per_particle(P, 0.0);
        for (int p = 0; p < e.n_paths(); ++p) {
          for (std::size_t i = 0; i < P; ++i) {
            const double v = at(p, i);
            t[i] = e.starts().weights[i] * v;
            per_particle[i] += v / e.n_paths();
          }
          per_path[p] = pairwise_sum(t);
        }
        const auto ms = mean_stderr(per_path);
        row.particles = ms.mean;
        // starts are shared by every path, so the path spread misses the
        // sampling error of the starts; add the crossed particle term
        double start_var = 0.0;
        if (P >= 2) {
          const double W = pairwise_sum(e.starts().weights);
          const double mbar = W > 0.0 ? ms.mean / W : 0.0;
          for (std::size_t i = 0; i < P; ++i) {
            const double w = e.starts().weights[i];
            t[i] = w * w * (per_particle[i] - mbar) * (per_particle[i] - mbar);
          }
          start_var = pairwise_sum(t) * static_cast<double>(P) / static_cast<double>(P - 1);
        }
        row.std_error = std::sqrt(ms.std_error * ms.std_error + start_var);
      } else {
        std::vector<double> vals(P);
        for (std::size_t i = 0; i < P; ++i) vals[i] = at(0, i);
        const auto ms = mean_stderr(vals);
        row.particles = ms.mean;
        row.std_error = ms.std_error;
      }
      row.gap = std::abs(row.pde - row.particles);
      row.tolerance = opt.mc_sigmas * row.std_error + opt.grid_budget * abs_int;
      row.passed = row.gap <= row.tolerance;
      rep.max_relative_gap =
          std::max(rep.max_relative_gap, row.gap / std::max(std::abs(row.pde), 1e-300));
      rep.rows.push_back(row);
    }
  }
  return rep;
}

DensityGrid restrict_to(const DensityGrid& fine, const UniformGrid& coarse) {
  const auto& fg = fine.values.grid;
  if (fg.dim() != coarse.dim()) throw ParameterError("restriction across dimensions");
  std::array<int, kMaxDim> ratio{1, 1, 1};
  for (int i = 0; i < fg.dim(); ++i) {
    if (fg.cells(i) % coarse.cells(i) != 0 ||
        std::abs(fg.box().lo(i) - coarse.box().lo(i)) > 1e-12 ||
        std::abs(fg.box().hi(i) - coarse.box().hi(i)) > 1e-12)
      throw ParameterError("grids are not nested");
    ratio[i] = fg.cells(i) / coarse.cells(i);
  }
  DensityGrid out = fine;
  out.values = ScalarGrid(coarse);
  const double scale = coarse.cell_volume() > 0 ? fg.cell_volume() / coarse.cell_volume() : 0.0;
  for (std::size_t f = 0; f < fg.size(); ++f) {
    auto idx = fg.unflatten(f);
    for (int i = 0; i < fg.dim(); ++i) idx[i] /= ratio[i];
    out.values.values[coarse.flatten(idx)] += scale * fine.values.values[f];
  }
  return out;
}

double l1_distance(const DensityGrid& a, const DensityGrid& b) {
  const auto& ga = a.values.grid;
  const auto& gb = b.values.grid;
  if (ga.size() > gb.size()) return l1_distance(restrict_to(a, gb), b);
  if (gb.size() > ga.size()) return l1_distance(a, restrict_to(b, ga));
  if (!(ga == gb)) throw ParameterError("grids are not comparable");
  std::vector<double> diff(ga.size());
  for (std::size_t c = 0; c < ga.size(); ++c) diff[c] = std::abs(a.values.values[c] - b.values.values[c]);
  return pairwise_sum(diff) * ga.cell_volume();
}

namespace {

UniformGrid refined(const UniformGrid& base, int factor) {
  std::array<int, kMaxDim> cells = base.cells();
  for (int i = 0; i < base.dim(); ++i) cells[i] *= factor;
  return UniformGrid(base.box(), cells);
}

double sup_distance_at(const CoefficientPair& pair, const UniformGrid& base, Boundary boundary,
                       const ScalarFunction& u0, double horizon, int snapshots,
                       const Discretization& first, const Discretization& second, int level) {
  const int scale = 1 << level;
  auto run = [&](const Discretization& D) {
    const UniformGrid g = refined(base, D.refine * scale);
    const GeneratorGrid G(pair, g, boundary);
    return solve_fpe(G, initial_density(g, u0), horizon, D.dt / scale, D.scheme, snapshots);
  };
  const WeakSolutionPath a = run(first);
  const WeakSolutionPath b = run(second);
  const UniformGrid common = refined(base, std::min(first.refine, second.refine) * scale);
  double sup = 0.0;
  for (std::size_t s = 0; s < a.snapshots.size(); ++s)
    sup = std::max(sup, l1_distance(restrict_to(a.snapshots[s], common),
                                    restrict_to(b.snapshots[s], common)));
  return sup;
}

}  // namespace

UniquenessReport uniqueness_experiment(const CoefficientPair& pair, const UniformGrid& base,
                                       Boundary boundary, const ScalarFunction& u0, double horizon,
                                       int snapshots, const Discretization& first,
                                       const Discretization& second, double ratio_threshold) {
  if (first.refine < 1 || second.refine < 1) throw ParameterError("refinement must be >= 1");
  UniquenessReport r;
  r.distance_coarse = sup_distance_at(pair, base, boundary, u0, horizon, snapshots, first, second, 0);
  r.distance_fine = sup_distance_at(pair, base, boundary, u0, horizon, snapshots, first, second, 1);
  r.ratio = r.distance_coarse > 0.0 ? r.distance_fine / r.distance_coarse : 0.0;
  r.passed = r.distance_coarse == 0.0 || r.ratio < ratio_threshold;
  r.note = "solutions compared on a truncated box with " + to_string(boundary) +
           " boundary; uniqueness is tested for this box analogue";
  return r;
}

void write_fpe_report(const std::string& path, const WeakSolutionPath& sol, const DualityReport* duality) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::vector<std::string> names;
  if (duality)
    for (const auto& row : duality->rows)
      if (std::find(names.begin(), names.end(), row.name) == names.end()) names.push_back(row.name);
  out << "time,mass,linf,l1";
  for (const auto& n : names) out << ",duality_gap_" << n;
  out << '\n' << std::setprecision(12);
  for (const auto& s : sol.stats) {
    out << s.time << ',' << s.mass << ',' << s.linf << ',' << s.l1;
    for (const auto& n : names) {
      out << ',';
      for (const auto& row : duality->rows)
        if (row.name == n && std::abs(row.time - s.time) <= 1e-9 * std::max(1.0, s.time)) out << row.gap;
    }
    out << '\n';
  }
}

}  // namespace oslab
