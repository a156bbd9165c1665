#include "oslab/density.hpp"

#include "oslab/errors.hpp"
#include "oslab/parallel.hpp"
#include "oslab/rng.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace oslab {

WeightedMeasure WeightedMeasure::weighted(int dim_d, double q) {
  if (!(q > 1.0)) throw ParameterError("weighted measure needs q > 1");
  if (dim_d < 1 || dim_d > kMaxDim) throw ParameterError("dimension must be in 1..3");
  WeightedMeasure mu;
  mu.dim_d_ = dim_d;
  mu.q_ = q;
  // int (1+|x|^2)^{-a} dx = pi^{d/2} Gamma(a - d/2) / Gamma(a)
  const double a = mu.exponent();
  mu.normalization_ = std::pow(std::numbers::pi, 0.5 * dim_d) *
                      std::exp(std::lgamma(a - 0.5 * dim_d) - std::lgamma(a));
  mu.box_ = symmetric_box(dim_d, std::numeric_limits<double>::infinity());
  return mu;
}

WeightedMeasure WeightedMeasure::lebesgue(const Box& box) {
  if (box.dim() < 1 || box.dim() > kMaxDim) throw ParameterError("dimension must be in 1..3");
  if (!(box.volume() > 0.0)) throw ParameterError("Lebesgue box must have positive volume");
  WeightedMeasure mu;
  mu.lebesgue_ = true;
  mu.dim_d_ = box.dim();
  mu.box_ = box;
  mu.normalization_ = box.volume();
  return mu;
}

double WeightedMeasure::density(const Vec& x) const {
  if (lebesgue_) return box_.contains(x) ? 1.0 / normalization_ : 0.0;
  return std::pow(1.0 + x.squaredNorm(), -exponent()) / normalization_;
}

double WeightedMeasure::radial_cdf(double r) const {
  if (lebesgue_) throw CapabilityError("radial CDF is defined for the weighted measure only");
  if (r <= 0.0) return 0.0;
  const double u = r * r / (1.0 + r * r);
  return boost::math::ibeta(0.5 * dim_d_, exponent() - 0.5 * dim_d_, u);
}

std::string WeightedMeasure::describe() const {
  std::ostringstream os;
  if (lebesgue_) {
    os << "lebesgue box [";
    for (int i = 0; i < dim_d_; ++i) os << (i ? " x " : "") << box_.lo(i) << "," << box_.hi(i);
    os << "]";
  } else {
    os << "weighted q=" << q_ << " d=" << dim_d_;
  }
  return os.str();
}

WeightedPoints sample_measure(const WeightedMeasure& mu, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ParameterError("sample count must be positive");
  const int d = mu.dim();
  std::vector<Vec> pts(n);
  const double alpha = 0.5 * d;
  const double beta = mu.exponent() - 0.5 * d;
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, i);
    Vec x(d);
    if (mu.is_lebesgue()) {
      for (int c = 0; c < d; ++c)
        x(c) = mu.box().lo(c) + rng.uniform() * (mu.box().hi(c) - mu.box().lo(c));
    } else {
      // r^2 / (1 + r^2) ~ Beta(d/2, a - d/2); direction uniform on the sphere.
      const double u = boost::math::ibeta_inv(alpha, beta, rng.uniform());
      const double r = std::sqrt(u / (1.0 - u));
      if (d == 1) {
        x(0) = rng.uniform() < 0.5 ? -r : r;
      } else {
        Vec g(d);
        do {
          for (int c = 0; c < d; ++c) g(c) = rng.normal();
        } while (g.norm() == 0.0);
        x = r * g / g.norm();
      }
    }
    pts[i] = x;
  }
  return WeightedPoints::equal_weights(std::move(pts));
}

double silverman_bandwidth(double spread, std::size_t n, int dim) {
  if (n == 0 || !(spread > 0.0)) throw ParameterError("Silverman rule needs samples with spread");
  return std::pow(4.0 / (dim + 2.0), 1.0 / (dim + 4.0)) * spread *
         std::pow(static_cast<double>(n), -1.0 / (dim + 4.0));
}

namespace {

Vec position(const FlowEnsemble& e, int path, std::size_t i, int k) {
  if (k == e.n_steps()) return e.final_state(path, i);
  if (k == 0) return e.starts().points[i];
  return e.state(path, i, k);
}

void check_time(const FlowEnsemble& e, int k, const UniformGrid& grid) {
  if (e.n_trajectories() == 0) throw ParameterError("empty ensemble");
  if (k < 0 || k > e.n_steps()) throw ParameterError("time index is not on the ensemble grid");
  if (k != 0 && k != e.n_steps() && (!e.stored() || !e.recorded(k)))
    throw CapabilityError("intermediate times need stored trajectories");
  if (grid.dim() != e.dim()) throw ParameterError("grid and ensemble dimensions differ");
}

double sample_spread(const FlowEnsemble& e, int k, int p0, int p1) {
  const int d = e.dim();
  double total = 0.0;
  for (int c = 0; c < d; ++c) {
    std::vector<double> xs;
    for (int p = p0; p < p1; ++p)
      for (std::size_t i = 0; i < e.n_particles(); ++i) xs.push_back(position(e, p, i, k)(c));
    const double mean = pairwise_sum(xs) / xs.size();
    for (double& x : xs) x = (x - mean) * (x - mean);
    total += std::sqrt(pairwise_sum(xs) / std::max<std::size_t>(1, xs.size() - 1));
  }
  return total / d;
}

// Linear binning of weighted samples onto cell centres followed by separable
// Gaussian smoothing. Returns the Lebesgue density; mass that falls off the grid is lost.
std::vector<double> binned_kde(const UniformGrid& grid, const std::vector<Vec>& xs,
                               const std::vector<double>& ws, double bandwidth) {
  const int d = grid.dim();
  std::vector<double> mass(grid.size(), 0.0);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    std::array<int, kMaxDim> i0{0, 0, 0};
    std::array<double, kMaxDim> fr{0, 0, 0};
    bool outside = false;
    for (int c = 0; c < d; ++c) {
      const double u = (xs[s](c) - grid.box().lo(c)) / grid.spacing(c) - 0.5;
      if (!(u > -1.0 && u < grid.cells(c))) {
        outside = true;
        break;
      }
      const double f = std::floor(u);
      i0[c] = static_cast<int>(f);
      fr[c] = u - f;
    }
    if (outside) continue;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::array<int, kMaxDim> idx{0, 0, 0};
      double w = ws[s];
      bool ok = true;
      for (int c = 0; c < d; ++c) {
        const int bit = (corner >> c) & 1;
        idx[c] = i0[c] + bit;
        w *= bit ? fr[c] : 1.0 - fr[c];
        if (idx[c] < 0 || idx[c] >= grid.cells(c)) ok = false;
      }
      if (ok && w != 0.0) mass[grid.flatten(idx)] += w;
    }
  }
  std::vector<double> tmp(grid.size());
  for (int c = 0; c < d; ++c) {
    const double h = grid.spacing(c);
    const int radius = static_cast<int>(std::ceil(4.0 * bandwidth / h));
    std::vector<double> kernel(2 * radius + 1);
    for (int j = -radius; j <= radius; ++j)
      kernel[j + radius] = std::exp(-0.5 * (j * h / bandwidth) * (j * h / bandwidth));
    const double ksum = std::accumulate(kernel.begin(), kernel.end(), 0.0);
    for (double& k : kernel) k /= ksum;
    const std::size_t stride = grid.stride(c);
    const int n = grid.cells(c);
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t f = 0; f < grid.size(); ++f) {
      if (mass[f] == 0.0) continue;
      const int i = grid.unflatten(f)[c];
      const int lo = std::max(-radius, -i), hi = std::min(radius, n - 1 - i);
      for (int j = lo; j <= hi; ++j)
        tmp[static_cast<std::size_t>(static_cast<long>(f) + static_cast<long>(j) * static_cast<long>(stride))] +=
            kernel[j + radius] * mass[f];
    }
    mass.swap(tmp);
  }
  const double vol = grid.cell_volume();
  for (double& m : mass) m /= vol;
  return mass;
}

void gather(const FlowEnsemble& e, int k, int p0, int p1, std::vector<Vec>& xs,
            std::vector<double>& ws) {
  const double scale = 1.0 / (p1 - p0);
  for (int p = p0; p < p1; ++p)
    for (std::size_t i = 0; i < e.n_particles(); ++i) {
      xs.push_back(position(e, p, i, k));
      ws.push_back(e.starts().weights[i] * scale);
    }
}

}  // namespace

DensityGrid pushforward_density(const FlowEnsemble& e, const WeightedMeasure& mu, int k,
                                const UniformGrid& grid, const KdeOptions& opt) {
  check_time(e, k, grid);
  if (opt.path >= e.n_paths()) throw ParameterError("path index out of range");
  const int p0 = opt.path < 0 ? 0 : opt.path;
  const int p1 = opt.path < 0 ? e.n_paths() : opt.path + 1;
  const std::size_t n = static_cast<std::size_t>(p1 - p0) * e.n_particles();
  const double bw = opt.bandwidth ? *opt.bandwidth
                                  : silverman_bandwidth(sample_spread(e, k, p0, p1), n, e.dim());
  if (!(bw > 0.0)) throw ParameterError("bandwidth must be positive");
  std::vector<Vec> xs;
  std::vector<double> ws;
  gather(e, k, p0, p1, xs, ws);
  DensityGrid out;
  out.values = ScalarGrid(grid);
  out.values.values = binned_kde(grid, xs, ws, bw);
  out.time = e.time(k);
  out.kind = DensityKind::Pushforward;
  out.bandwidth = bw;
  out.leakage = std::max(0.0, 1.0 - out.values.integral());
  if (opt.relative_to_mu)
    for (std::size_t f = 0; f < grid.size(); ++f) {
      const double m = mu.density(grid.center(f));
      out.values.values[f] = m > 0.0 ? out.values.values[f] / m : 0.0;
    }
  return out;
}

MomentGrid density_moment(const FlowEnsemble& e, const WeightedMeasure& mu, int k,
                          const UniformGrid& grid, double p, std::optional<double> bandwidth) {
  check_time(e, k, grid);
  if (!(p > 0.0)) throw ParameterError("moment order must be positive");
  const int P = e.n_paths();
  double bw = 0.0;
  if (bandwidth) {
    bw = *bandwidth;
  } else {
    // Silverman per path, averaged over paths.
    std::vector<double> bws(P);
    for (int path = 0; path < P; ++path)
      bws[path] = silverman_bandwidth(sample_spread(e, k, path, path + 1), e.n_particles(), e.dim());
    bw = pairwise_sum(bws) / P;
  }
  if (!(bw > 0.0)) throw ParameterError("bandwidth must be positive");
  std::vector<double> inv_mu(grid.size());
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const double m = mu.density(grid.center(f));
    inv_mu[f] = m > 0.0 ? 1.0 / m : 0.0;
  }
  std::vector<std::vector<double>> per_path(P);
  std::vector<double> leak(P);
  std::vector<std::vector<double>> dens(P);
  parallel_chunks(P, 1, 1, [&](std::size_t path, std::size_t) {
    std::vector<Vec> xs;
    std::vector<double> ws;
    gather(e, k, static_cast<int>(path), static_cast<int>(path) + 1, xs, ws);
    dens[path] = binned_kde(grid, xs, ws, bw);
    leak[path] = 1.0 - pairwise_sum(dens[path]) * grid.cell_volume();
    per_path[path].resize(grid.size());
    for (std::size_t f = 0; f < grid.size(); ++f)
      per_path[path][f] = std::pow(dens[path][f] * inv_mu[f], p);
  });
  MomentGrid out;
  out.mean = ScalarGrid(grid);
  out.std_error = ScalarGrid(grid);
  out.mass_density = ScalarGrid(grid);
  out.bandwidth = bw;
  out.leakage = std::max(0.0, pairwise_sum(leak) / P);
  std::vector<double> col(P), dcol(P);
  for (std::size_t f = 0; f < grid.size(); ++f) {
    for (int path = 0; path < P; ++path) {
      col[path] = per_path[path][f];
      dcol[path] = dens[path][f];
    }
    const auto ms = mean_stderr(col);
    out.mean.values[f] = ms.mean;
    out.std_error.values[f] = ms.std_error;
    out.mass_density.values[f] = pairwise_sum(dcol) / P;
  }
  return out;
}

std::vector<std::size_t> central_cells(const ScalarGrid& m, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("central fraction must be in (0, 1]");
  const auto& g = m.grid;
  const double total = m.sum();
  if (!(total > 0.0)) throw ParameterError("density has no mass on the grid");
  Vec c = Vec::Zero(g.dim());
  for (std::size_t f = 0; f < g.size(); ++f) c += m.values[f] * g.center(f);
  c /= total;
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(g.size());
  for (std::size_t f = 0; f < g.size(); ++f) dist[f] = (g.center(f) - c).squaredNorm();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<std::size_t> out;
  double acc = 0.0;
  for (std::size_t f : order) {
    out.push_back(f);
    acc += m.values[f];
    if (acc >= fraction * total) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

ScalarGrid density_bracket(const CoefficientPair& pair, double p, const UniformGrid& grid,
                           const BracketOptions& opt) {
  if (grid.dim() != pair.dim_d()) throw ParameterError("grid and field dimensions differ");
  const int d = pair.dim_d(), m = pair.dim_m();
  const bool const_sigma = pair.constant_sigma();
  if (!opt.allow_finite_differences) {
    if (!const_sigma)
      throw CapabilityError("second derivatives of sigma need finite differences");
    if (!pair.has_div_drift() && !pair.has_grad_drift())
      throw CapabilityError("div b is not available without finite differences");
  }
  double h = 0.0;
  for (int c = 0; c < d; ++c) h = std::max(h, grid.spacing(c));
  const double fd = 1e-5;
  ScalarGrid out(grid);
  for (std::size_t f = 0; f < grid.size(); ++f) {
    const Vec x = grid.center(f);
    double value = -pair.div_drift(x, fd);
    if (!const_sigma) {
      const Mat s = pair.sigma(x);
      const Tensor3 g = pair.grad_sigma(x, fd);  // g.slices[l](i, k) = d_l s^{ik}
      double div2 = 0.0;
      for (int k = 0; k < m; ++k) {
        double dk = 0.0;
        for (int i = 0; i < d; ++i) dk += g.slices[i](i, k);
        div2 += dk * dk;
      }
      value += 0.5 * p * div2;
      // d_i d_j s^{jk} by central differences of the gradient with step h.
      std::array<Tensor3, kMaxDim> gp, gm;
      for (int i = 0; i < d; ++i) {
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        gp[i] = pair.grad_sigma(xp, fd);
        gm[i] = pair.grad_sigma(xm, fd);
      }
      for (int k = 0; k < m; ++k)
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) {
            const double dij = (gp[i].slices[j](j, k) - gm[i].slices[j](j, k)) / (2.0 * h);
            value += 0.5 * g.slices[i](j, k) * g.slices[j](i, k) + s(i, k) * dij;
          }
    }
    out.values[f] = value;
  }
  return out;
}

double density_bound_rhs(const CoefficientPair& pair, double p, double horizon,
                         const UniformGrid& grid, const BracketOptions& opt) {
  if (!(p >= 1.0)) throw ParameterError("density bound needs p >= 1");
  if (!(horizon >= 0.0)) throw ParameterError("horizon must be nonnegative");
  const ScalarGrid br = density_bracket(pair, p, grid, opt);
  return std::exp(p * horizon * std::max(0.0, br.max()));
}

DensityBoundReport density_bound_check(const CoefficientPair& pair, const FlowEnsemble& e,
                                       const WeightedMeasure& mu, double p, int k,
                                       const UniformGrid& grid, const DensityBoundOptions& opt) {
  const MomentGrid mg = density_moment(e, mu, k, grid, p, opt.bandwidth);
  const auto cells = central_cells(mg.mass_density, opt.central_fraction);
  DensityBoundReport r;
  r.p = p;
  r.time = e.time(k);
  r.bound = density_bound_rhs(pair, p, e.noise().horizon(), grid);
  r.slack = opt.slack;
  r.central_fraction = opt.central_fraction;
  r.central_count = cells.size();
  r.leakage = mg.leakage;
  r.empirical = -1.0;
  r.central_min = std::numeric_limits<double>::infinity();
  for (std::size_t f : cells) {
    if (mg.mean.values[f] > r.empirical) {
      r.empirical = mg.mean.values[f];
      r.std_error = mg.std_error.values[f];
    }
    r.central_min = std::min(r.central_min, mg.mean.values[f]);
  }
  r.passed = r.empirical <= r.bound * (1.0 + r.slack);
  return r;
}

namespace {

const char* kind_name(DensityKind k) { return k == DensityKind::PDE ? "pde" : "pushforward"; }

}  // namespace

void write_density(const std::string& path, const DensityGrid& g) {
  write_grid_csv(path, g.values, "value");
  const auto& grid = g.values.grid;
  nlohmann::json meta;
  meta["kind"] = kind_name(g.kind);
  meta["time"] = g.time;
  meta["bandwidth"] = g.bandwidth;
  meta["leakage"] = g.leakage;
  meta["clipped"] = g.clipped;
  meta["clipped_mass"] = g.clipped_mass;
  meta["box_lo"] = nlohmann::json::array();
  meta["box_hi"] = nlohmann::json::array();
  meta["resolution"] = nlohmann::json::array();
  for (int c = 0; c < grid.dim(); ++c) {
    meta["box_lo"].push_back(grid.box().lo(c));
    meta["box_hi"].push_back(grid.box().hi(c));
    meta["resolution"].push_back(grid.cells(c));
  }
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write " + path + ".json");
  out << meta.dump(2) << '\n';
}

DensityGrid read_density(const std::string& path) {
  std::ifstream meta_in(path + ".json");
  if (!meta_in) throw ParameterError("missing density metadata " + path + ".json");
  const auto meta = nlohmann::json::parse(meta_in);
  const int d = static_cast<int>(meta.at("resolution").size());
  Box box{Vec(d), Vec(d)};
  std::array<int, kMaxDim> cells{1, 1, 1};
  for (int c = 0; c < d; ++c) {
    box.lo(c) = meta["box_lo"][c].get<double>();
    box.hi(c) = meta["box_hi"][c].get<double>();
    cells[c] = meta["resolution"][c].get<int>();
  }
  DensityGrid g;
  g.values = ScalarGrid(UniformGrid(box, cells));
  g.time = meta.at("time").get<double>();
  g.kind = meta.at("kind").get<std::string>() == "pde" ? DensityKind::PDE : DensityKind::Pushforward;
  g.bandwidth = meta.value("bandwidth", 0.0);
  g.leakage = meta.value("leakage", 0.0);
  g.clipped = meta.value("clipped", std::size_t{0});
  g.clipped_mass = meta.value("clipped_mass", 0.0);

  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  for (std::size_t f = 0; f < g.values.grid.size(); ++f) {
    if (!std::getline(in, line)) throw ParameterError("density CSV has too few rows");
    const auto comma = line.rfind(',');
    g.values.values[f] = std::stod(line.substr(comma + 1));
  }
  return g;
}

}  // namespace oslab
