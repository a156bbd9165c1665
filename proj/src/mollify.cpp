#include "oslab/mollify.hpp"

#include "oslab/errors.hpp"
#include "oslab/moduli.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace oslab {

namespace {

double raw_bump(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// Smooth transition: 0 for t <= 0, positive for t > 0.
double transition(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double transition_deriv(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

}  // namespace

double bump_normalization(int d) {
  static std::mutex mutex;
  static std::map<int, double> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(d); it != cache.end()) return it->second;
  // Radial integral: |S^{d-1}| int_0^1 r^{d-1} exp(-1/(1-r^2)) dr.
  const double sphere = 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
  auto f = [d](double r) { return std::pow(r, d - 1) * raw_bump(r * r); };
  const double radial = integrate_panels(f, 0.0, 1.0, {0.5, 0.9, 0.99}, 1e-14);
  const double c = 1.0 / (sphere * radial);
  cache[d] = c;
  return c;
}

double bump(const Vec& y) {
  return bump_normalization(static_cast<int>(y.size())) * raw_bump(y.squaredNorm());
}

Vec bump_gradient(const Vec& y) {
  const double r2 = y.squaredNorm();
  if (r2 >= 1.0) return Vec::Zero(y.size());
  const double one_minus = 1.0 - r2;
  // d/dy exp(-1/(1-r^2)) = exp(.) * (-2 y / (1-r^2)^2)
  return bump(y) * (-2.0 / (one_minus * one_minus)) * y;
}

double cutoff(const Vec& x) {
  const double r = x.norm();
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  const double a = transition(2.0 - r), b = transition(r - 1.0);
  return a / (a + b);
}

Vec cutoff_gradient(const Vec& x) {
  const double r = x.norm();
  if (r <= 1.0 || r >= 2.0) return Vec::Zero(x.size());
  const double a = transition(2.0 - r), b = transition(r - 1.0);
  const double da = -transition_deriv(2.0 - r), db = transition_deriv(r - 1.0);
  const double dphi_dr = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
  return dphi_dr * x / r;
}

std::shared_ptr<const MollifierNodes> mollifier_nodes(int d, int Q) {
  if (d < 1 || d > kMaxDim) throw ParameterError("mollifier dimension must be in 1..3");
  if (Q < 2) throw ParameterError("mollifier needs at least 2 quadrature points per axis");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const MollifierNodes>> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find({d, Q}); it != cache.end()) return it->second;

  auto nodes = std::make_shared<MollifierNodes>();
  nodes->dim = d;
  const double h = 2.0 / Q;
  const double cell = std::pow(h, d);
  std::array<int, kMaxDim> n{Q, d > 1 ? Q : 1, d > 2 ? Q : 1};
  for (int a = 0; a < n[0]; ++a)
    for (int b = 0; b < n[1]; ++b)
      for (int c = 0; c < n[2]; ++c) {
        Vec y(d);
        const std::array<int, kMaxDim> idx{a, b, c};
        for (int i = 0; i < d; ++i) y(i) = -1.0 + (idx[i] + 0.5) * h;
        const double w = bump(y) * cell;
        if (w <= 0.0) continue;
        nodes->nodes.push_back(y);
        nodes->weights.push_back(w);
        nodes->grad_weights.push_back(bump_gradient(y) * cell);
      }
  double mass = 0.0;
  for (double w : nodes->weights) mass += w;
  nodes->raw_mass = mass;
  for (auto& w : nodes->weights) w /= mass;
  for (auto& g : nodes->grad_weights) g /= mass;
  cache[{d, Q}] = nodes;
  return nodes;
}

CoefficientPair mollify_pair(const CoefficientPair& pair, const MollifierSpec& spec) {
  if (spec.level_n <= 0) throw ParameterError("mollification level must be positive");
  const int d = pair.dim_d(), m = pair.dim_m();
  const double n = spec.level_n;
  auto nodes = mollifier_nodes(d, spec.quadrature_points);
  auto base = std::make_shared<const CoefficientPair>(pair);
  const bool convolve_sigma = spec.mode == MollifyMode::Convolve && !pair.constant_sigma();

  // (f * chi_n)(x) = int f(x - y / n) chi(y) dy.
  auto conv_drift = [base, nodes, n](const Vec& x) {
    Vec acc = Vec::Zero(x.size());
    for (std::size_t q = 0; q < nodes->nodes.size(); ++q)
      acc += nodes->weights[q] * base->drift(x - nodes->nodes[q] / n);
    return acc;
  };
  auto conv_sigma = [base, nodes, n, convolve_sigma](const Vec& x) -> Mat {
    if (!convolve_sigma) return base->sigma(x);
    Mat acc = Mat::Zero(base->dim_d(), base->dim_m());
    for (std::size_t q = 0; q < nodes->nodes.size(); ++q)
      acc += nodes->weights[q] * base->sigma(x - nodes->nodes[q] / n);
    return acc;
  };

  CoefficientPair out(
      d, m, [conv_sigma, n](const Vec& x) -> Mat { return cutoff(x / n) * conv_sigma(x); },
      [conv_drift, n](const Vec& x) -> Vec { return cutoff(x / n) * conv_drift(x); },
      Smoothness::Mollified,
      pair.name() + "@n=" + std::to_string(spec.level_n) +
          (spec.mode == MollifyMode::CutoffOnly ? "(cutoff)" : ""));

  // d/dx_j (b * chi_n)_i(x) = n int b_i(x - y/n) d_j chi(y) dy. grad chi is rougher than chi,
  // so derivatives use twice the nodes (32 midpoint nodes leave ~1e-3 relative error).
  auto gnodes = mollifier_nodes(d, 2 * spec.quadrature_points);
  auto grad_conv_drift = [base, gnodes, n, d](const Vec& x) -> Mat {
    Mat g = Mat::Zero(d, d);
    for (std::size_t q = 0; q < gnodes->nodes.size(); ++q)
      g += n * base->drift(x - gnodes->nodes[q] / n) * gnodes->grad_weights[q].transpose();
    return g;
  };
  out.with_grad_drift([conv_drift, grad_conv_drift, n](const Vec& x) -> Mat {
    const Vec xs = x / n;
    const double phi = cutoff(xs);
    Mat g = phi * grad_conv_drift(x);
    const Vec dphi = cutoff_gradient(xs) / n;
    if (dphi.squaredNorm() > 0.0) g += conv_drift(x) * dphi.transpose();
    return g;
  });
  out.with_div_drift([conv_drift, grad_conv_drift, n](const Vec& x) {
    const Vec xs = x / n;
    double div = cutoff(xs) * grad_conv_drift(x).trace();
    const Vec dphi = cutoff_gradient(xs) / n;
    if (dphi.squaredNorm() > 0.0) div += conv_drift(x).dot(dphi);
    return div;
  });

  out.with_grad_sigma([base, gnodes, n, d, m, convolve_sigma, conv_sigma](const Vec& x) {
    Tensor3 t;
    const Vec xs = x / n;
    const double phi = cutoff(xs);
    const Vec dphi = cutoff_gradient(xs) / n;
    Tensor3 inner;
    if (convolve_sigma) {
      for (int l = 0; l < d; ++l) inner.slices[l] = Mat::Zero(d, m);
      for (std::size_t q = 0; q < gnodes->nodes.size(); ++q) {
        const Mat s = base->sigma(x - gnodes->nodes[q] / n);
        for (int l = 0; l < d; ++l) inner.slices[l] += n * gnodes->grad_weights[q](l) * s;
      }
    } else {
      inner = base->grad_sigma(x);
    }
    const bool edge = dphi.squaredNorm() > 0.0;
    const Mat s0 = edge ? conv_sigma(x) : Mat();
    for (int l = 0; l < d; ++l) {
      t.slices[l] = phi * inner.slices[l];
      if (edge) t.slices[l] += dphi(l) * s0;
    }
    return t;
  });
  return out;
}

namespace {

struct NormAccumulator {
  double sigma = 0.0;
  double drift = 0.0;
};

MollificationDistance finish(const NormAccumulator& acc, DistanceNorm norm, double q,
                             double cell) {
  MollificationDistance out;
  switch (norm) {
    case DistanceNorm::L1:
      out.sigma_norm = acc.sigma * cell;
      out.drift_norm = acc.drift * cell;
      out.combined = out.sigma_norm + out.drift_norm;
      break;
    case DistanceNorm::L2:
      out.sigma_norm = std::sqrt(acc.sigma * cell);
      out.drift_norm = std::sqrt(acc.drift * cell);
      out.combined = out.sigma_norm + out.drift_norm;
      break;
    case DistanceNorm::L2q:
      out.sigma_norm = std::pow(acc.sigma * cell, 1.0 / (2.0 * q));
      out.drift_norm = std::pow(acc.drift * cell, 1.0 / q);
      out.combined = std::pow(out.sigma_norm + out.drift_norm, 2.0);
      break;
  }
  return out;
}

}  // namespace

MollificationDistance pair_distance(const CoefficientPair& a, const CoefficientPair& b,
                                    double box_radius, DistanceNorm norm,
                                    const DistanceOptions& opt) {
  if (a.dim_d() != b.dim_d() || a.dim_m() != b.dim_m())
    throw ParameterError("pair_distance needs pairs of equal shape");
  if (!(box_radius > 0.0)) throw ParameterError("distance ball radius must be positive");
  const int d = a.dim_d();
  const int P = opt.points_per_axis;
  const double h = 2.0 * box_radius / P;
  const double ps = norm == DistanceNorm::L1 ? 1.0 : (norm == DistanceNorm::L2 ? 2.0 : 2.0 * opt.q);
  const double pb = norm == DistanceNorm::L1 ? 1.0 : (norm == DistanceNorm::L2 ? 2.0 : opt.q);

  NormAccumulator acc;
  std::array<int, kMaxDim> n{P, d > 1 ? P : 1, d > 2 ? P : 1};
  for (int i0 = 0; i0 < n[0]; ++i0)
    for (int i1 = 0; i1 < n[1]; ++i1)
      for (int i2 = 0; i2 < n[2]; ++i2) {
        const std::array<int, kMaxDim> idx{i0, i1, i2};
        Vec x(d);
        for (int i = 0; i < d; ++i) x(i) = -box_radius + (idx[i] + 0.5) * h;
        if (x.norm() > box_radius) continue;
        acc.sigma += std::pow((a.sigma(x) - b.sigma(x)).norm(), ps);
        acc.drift += std::pow((a.drift(x) - b.drift(x)).norm(), pb);
      }
  return finish(acc, norm, opt.q, std::pow(h, d));
}

MollificationDistance mollification_distance(const CoefficientPair& pair, const MollifierSpec& spec_n,
                                             const MollifierSpec& spec_l, double box_radius,
                                             DistanceNorm norm, const DistanceOptions& options) {
  if (spec_n.level_n == spec_l.level_n && spec_n.mode == spec_l.mode &&
      spec_n.quadrature_points == spec_l.quadrature_points)
    return {};
  return pair_distance(mollify_pair(pair, spec_n), mollify_pair(pair, spec_l), box_radius, norm,
                       options);
}

// ---------------------------------------------------------------------------

CoefficientPair tabulate_pair_1d(const CoefficientPair& pair, double lo, double hi, int cells) {
  if (pair.dim_d() != 1 || pair.dim_m() != 1)
    throw CapabilityError("tabulate_pair_1d supports d = m = 1 only");
  if (!(hi > lo) || cells < 2) throw ParameterError("tabulation needs hi > lo and >= 2 cells");
  const double h = (hi - lo) / cells;
  auto tab = std::make_shared<Tabulation1D>();
  tab->drift.lo = tab->sigma.lo = lo;
  tab->drift.h = tab->sigma.h = h;
  tab->drift.cells = tab->sigma.cells = cells;
  Vec x(1);
  for (int i = 0; i <= cells; ++i) {
    x(0) = lo + i * h;
    tab->drift.value.push_back(pair.drift(x)(0));
    tab->drift.slope.push_back(pair.grad_drift(x)(0, 0));
    tab->sigma.value.push_back(pair.sigma(x)(0, 0));
    tab->sigma.slope.push_back(pair.grad_sigma(x).slices[0](0, 0));
  }
  auto base = std::make_shared<const CoefficientPair>(pair);
  std::shared_ptr<const Tabulation1D> shared = tab;
  CoefficientPair out(
      1, 1,
      [base, shared](const Vec& x) -> Mat {
        if (!shared->sigma.covers(x(0))) return base->sigma(x);
        Mat s(1, 1);
        s(0, 0) = shared->sigma.eval(x(0));
        return s;
      },
      [base, shared](const Vec& x) -> Vec {
        if (!shared->drift.covers(x(0))) return base->drift(x);
        Vec b(1);
        b(0) = shared->drift.eval(x(0));
        return b;
      },
      pair.smoothness(), pair.name() + "[tab]");
  out.with_constant_sigma(pair.constant_sigma()).with_rough(pair.rough()).with_tabulation(shared);
  return out;
}

}  // namespace oslab
