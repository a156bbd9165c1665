#include "oslab/fields.hpp"

#include "oslab/errors.hpp"
#include "oslab/parallel.hpp"
#include "oslab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace oslab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Mat scaled_identity(int d, int m, double s) { return s * Mat::Identity(d, m); }

void require_dims(int d, int m) {
  if (d < 1 || d > kMaxDim || m < 1 || m > kMaxDim)
    throw ParameterError("dimensions d and m must lie in 1..3");
}

}  // namespace

CoefficientPair::CoefficientPair(int dim_d, int dim_m, MatrixFunction sigma, VectorFunction drift,
                                 Smoothness smoothness, std::string name)
    : dim_d_(dim_d),
      dim_m_(dim_m),
      sigma_(std::move(sigma)),
      b_(std::move(drift)),
      smoothness_(smoothness),
      name_(std::move(name)) {
  require_dims(dim_d, dim_m);
}

Mat CoefficientPair::sigma(const Vec& x) const { return sigma_(x); }

Mat CoefficientPair::diffusion_matrix(const Vec& x) const {
  const Mat s = sigma_(x);
  return s * s.transpose();
}

CoefficientPair& CoefficientPair::with_grad_sigma(TensorFunction f) {
  grad_sigma_ = std::move(f);
  return *this;
}
CoefficientPair& CoefficientPair::with_grad_drift(MatrixFunction f) {
  grad_b_ = std::move(f);
  return *this;
}
CoefficientPair& CoefficientPair::with_div_drift(ScalarFunction f) {
  div_b_ = std::move(f);
  return *this;
}
CoefficientPair& CoefficientPair::with_constant_sigma(bool flag) {
  constant_sigma_ = flag;
  return *this;
}
CoefficientPair& CoefficientPair::with_tabulation(std::shared_ptr<const Tabulation1D> tab) {
  tabulation_ = std::move(tab);
  return *this;
}
CoefficientPair& CoefficientPair::with_rough(bool flag) {
  rough_ = flag;
  return *this;
}

Tensor3 CoefficientPair::grad_sigma(const Vec& x, double h) const {
  if (grad_sigma_) return grad_sigma_(x);
  Tensor3 out;
  for (int l = 0; l < dim_d_; ++l) {
    if (constant_sigma_) {
      out.slices[l] = Mat::Zero(dim_d_, dim_m_);
      continue;
    }
    Vec xp = x, xm = x;
    xp(l) += h;
    xm(l) -= h;
    out.slices[l] = (sigma_(xp) - sigma_(xm)) / (2.0 * h);
  }
  return out;
}

Mat CoefficientPair::grad_drift(const Vec& x, double h) const {
  if (grad_b_) return grad_b_(x);
  Mat out(dim_d_, dim_d_);
  for (int j = 0; j < dim_d_; ++j) {
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    out.col(j) = (b_(xp) - b_(xm)) / (2.0 * h);
  }
  return out;
}

double CoefficientPair::div_drift(const Vec& x, double h) const {
  if (div_b_) return div_b_(x);
  if (grad_b_) return grad_b_(x).trace();
  double acc = 0.0;
  for (int i = 0; i < dim_d_; ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    acc += (b_(xp)(i) - b_(xm)(i)) / (2.0 * h);
  }
  return acc;
}

double divergence(const CoefficientPair& pair, const Vec& x, double h) {
  if (!(h > 0.0)) throw ParameterError("divergence step must be positive");
  return pair.div_drift(x, h);
}

// ---------------------------------------------------------------------------
// V-series

VSeries::VSeries(int truncation_K, int table_size) : K_(truncation_K) {
  if (truncation_K < 1) throw ParameterError("V-series truncation must be >= 1");
  auto inv = std::make_shared<std::vector<double>>(K_ + 1, 0.0);
  for (int k = 1; k <= K_; ++k) (*inv)[k] = 1.0 / (static_cast<double>(k) * k);
  inv_k2_ = inv;

  if (table_size > 0) {
    // On nodes t_j = 2 pi j / M, sin(k t_j) = sin(2 pi ((k j) mod M) / M).
    const std::size_t M = static_cast<std::size_t>(table_size);
    std::vector<double> abs_sin(M);
    for (std::size_t i = 0; i < M; ++i) abs_sin[i] = std::abs(std::sin(kTwoPi * i / M));
    auto table = std::make_shared<std::vector<double>>(M + 1, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      double acc = 0.0;
      std::size_t idx = 0;
      for (int k = 1; k <= K_; ++k) {
        idx += j;
        if (idx >= M) idx -= M;
        acc += abs_sin[idx] * (*inv)[k];
      }
      (*table)[j] = acc;
    }
    (*table)[M] = (*table)[0];
    table_ = table;
  }
}

double VSeries::exact(double t) const {
  t = std::fmod(t, kTwoPi);
  const double c1 = std::cos(t), s1 = std::sin(t);
  const auto& inv = *inv_k2_;
  double acc = 0.0;
  double ck = c1, sk = s1;
  for (int k = 1; k <= K_; ++k) {
    if ((k & 63) == 0) {
      ck = std::cos(k * t);
      sk = std::sin(k * t);
    }
    acc += std::abs(sk) * inv[k];
    const double cn = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = cn;
  }
  return acc;
}

double VSeries::operator()(double t) const {
  if (!table_) return exact(t);
  const auto& tab = *table_;
  const std::size_t M = tab.size() - 1;
  double u = std::fmod(t, kTwoPi);
  if (u < 0.0) u += kTwoPi;
  const double pos = u / kTwoPi * static_cast<double>(M);
  std::size_t i = std::min(static_cast<std::size_t>(pos), M - 1);
  const double f = pos - static_cast<double>(i);
  return tab[i] + f * (tab[i + 1] - tab[i]);
}

VSeriesValue eval_V_series(double t, int truncation_K) {
  VSeries v(truncation_K);
  return {v.exact(t), v.tail_bound()};
}

// ---------------------------------------------------------------------------
// Built-in fields

std::vector<std::string> builtin_field_keys() {
  return {"vseries", "linear", "ou", "tanh", "sobolev-power", "zero", "rotation", "contracting"};
}

bool is_known_field_key(const std::string& key) {
  if (key.rfind("csv:", 0) == 0) return true;
  const auto keys = builtin_field_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

CoefficientPair make_field(const std::string& key, const FieldParams& p) {
  const int d = p.dim_d, m = p.dim_m;
  require_dims(d, m);
  const double s = p.sigma_scale;
  const Mat sig = scaled_identity(d, m, s);
  auto const_sigma = [sig](const Vec&) { return sig; };

  if (key == "vseries") {
    VSeries v(p.vseries_terms, p.vseries_table);
    CoefficientPair pair(d, m, const_sigma, [v](const Vec& x) {
      Vec out(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = v(x(i));
      return out;
    }, Smoothness::Analytic, "vseries");
    pair.with_constant_sigma().with_rough();
    return pair;
  }
  if (key == "linear" || key == "ou" || key == "contracting") {
    const double slope = key == "linear" ? 1.0 : (key == "ou" ? -1.0 : -1.0 / d);
    CoefficientPair pair(d, m, const_sigma, [slope](const Vec& x) -> Vec { return slope * x; },
                         Smoothness::Analytic, key);
    pair.with_constant_sigma()
        .with_grad_drift([slope, d](const Vec&) -> Mat { return slope * Mat::Identity(d, d); })
        .with_div_drift([slope, d](const Vec&) { return slope * d; });
    return pair;
  }
  if (key == "zero") {
    const Mat zero = Mat::Zero(d, m);
    CoefficientPair pair(d, m, [zero](const Vec&) { return zero; },
                         [d](const Vec&) -> Vec { return Vec::Zero(d); }, Smoothness::Analytic,
                         "zero");
    pair.with_constant_sigma()
        .with_grad_drift([d](const Vec&) -> Mat { return Mat::Zero(d, d); })
        .with_div_drift([](const Vec&) { return 0.0; });
    return pair;
  }
  if (key == "rotation") {
    if (d != 2) throw ParameterError("rotation field requires d = 2");
    CoefficientPair pair(d, m, const_sigma, [](const Vec& x) -> Vec {
      Vec out(2);
      out << -x(1), x(0);
      return out;
    }, Smoothness::Analytic, "rotation");
    pair.with_constant_sigma()
        .with_grad_drift([](const Vec&) -> Mat {
          Mat g(2, 2);
          g << 0.0, -1.0, 1.0, 0.0;
          return g;
        })
        .with_div_drift([](const Vec&) { return 0.0; });
    return pair;
  }
  if (key == "tanh") {
    const int r = std::min(d, m);
    CoefficientPair pair(d, m, [d, m, r](const Vec& x) {
      Mat out = Mat::Zero(d, m);
      for (int i = 0; i < r; ++i) out(i, i) = std::tanh(x(i));
      return out;
    }, [d](const Vec&) -> Vec { return Vec::Zero(d); }, Smoothness::Analytic, "tanh");
    pair.with_grad_sigma([d, m, r](const Vec& x) {
          Tensor3 t;
          for (int l = 0; l < d; ++l) {
            t.slices[l] = Mat::Zero(d, m);
            if (l < r) {
              const double c = std::cosh(x(l));
              t.slices[l](l, l) = 1.0 / (c * c);
            }
          }
          return t;
        })
        .with_grad_drift([d](const Vec&) -> Mat { return Mat::Zero(d, d); })
        .with_div_drift([](const Vec&) { return 0.0; });
    return pair;
  }
  if (key == "sobolev-power") {
    const double alpha = p.power;
    CoefficientPair pair(d, m, [d, m, alpha](const Vec& x) -> Mat {
      return std::pow(x.norm(), alpha) * Mat::Identity(d, m);
    }, [d](const Vec&) -> Vec { return Vec::Zero(d); }, Smoothness::Analytic, "sobolev-power");
    pair.with_grad_sigma([d, m, alpha](const Vec& x) {
          Tensor3 t;
          const double r = x.norm();
          for (int l = 0; l < d; ++l) {
            const double g = r > 0.0 ? alpha * std::pow(r, alpha - 2.0) * x(l) : 0.0;
            t.slices[l] = g * Mat::Identity(d, m);
          }
          return t;
        })
        .with_div_drift([](const Vec&) { return 0.0; })
        .with_rough();
    return pair;
  }
  if (key.rfind("csv:", 0) == 0) return load_grid_field(key.substr(4), s);
  throw ParameterError("unknown field key '" + key + "'");
}

CoefficientPair load_grid_field(const std::string& path, double sigma_scale) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open field table " + path);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  int d = 0;
  while (d < static_cast<int>(cols.size()) && !cols[d].empty() && cols[d][0] == 'x') ++d;
  const int n_values = static_cast<int>(cols.size()) - d;
  if (d < 1 || d > kMaxDim || n_values != d)
    throw ParameterError("field CSV needs d coordinate columns x* followed by d drift columns");

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> row(cols.size());
    for (auto& v : row) ss >> v;
    if (!ss) throw ParameterError("malformed row in " + path);
    rows.push_back(std::move(row));
  }
  std::array<std::vector<double>, kMaxDim> coords;
  for (int i = 0; i < d; ++i) {
    for (const auto& r : rows) coords[i].push_back(r[i]);
    std::sort(coords[i].begin(), coords[i].end());
    coords[i].erase(std::unique(coords[i].begin(), coords[i].end()), coords[i].end());
    if (coords[i].size() < 2) throw ParameterError("field CSV needs >= 2 nodes per axis");
  }
  Box box{Vec(d), Vec(d)};
  std::array<int, kMaxDim> cells{1, 1, 1};
  for (int i = 0; i < d; ++i) {
    const auto& c = coords[i];
    const double h = (c.back() - c.front()) / (c.size() - 1);
    box.lo(i) = c.front() - 0.5 * h;
    box.hi(i) = c.back() + 0.5 * h;
    cells[i] = static_cast<int>(c.size());
  }
  UniformGrid grid(box, cells);
  if (rows.size() != grid.size()) throw ParameterError("field CSV is not a full regular grid");
  auto comps = std::make_shared<std::vector<ScalarGrid>>(d, ScalarGrid(grid));
  for (const auto& r : rows) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = r[i];
    const long c = grid.locate(x);
    for (int k = 0; k < d; ++k) (*comps)[k].values[c] = r[d + k];
  }
  const Mat sig = scaled_identity(d, d, sigma_scale);
  CoefficientPair pair(d, d, [sig](const Vec&) { return sig; }, [comps, d](const Vec& x) {
    Vec out(d);
    for (int k = 0; k < d; ++k) out(k) = (*comps)[k].interpolate(x);
    return out;
  }, Smoothness::GridTabulated, "csv:" + path);
  pair.with_constant_sigma().with_rough();
  return pair;
}

// ---------------------------------------------------------------------------
// Local maximal function

std::vector<double> maximal_function_radii(const UniformGrid& grid, double radius_R,
                                           int radii_count) {
  if (radii_count < 1) throw ParameterError("radii_count must be >= 1");
  double h = 0.0;
  double half_extent = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.dim(); ++i) {
    h = std::max(h, grid.spacing(i));
    half_extent = std::min(half_extent, 0.5 * (grid.box().hi(i) - grid.box().lo(i)));
  }
  if (!(radius_R > 0.0) || radius_R > half_extent)
    throw DomainError("maximal-function radius exceeds half the grid extent");
  if (!(radius_R > h)) throw ParameterError("maximal-function radius must exceed the grid step");
  std::vector<double> radii(radii_count);
  for (int k = 1; k <= radii_count; ++k)
    radii[k - 1] = k == radii_count ? radius_R
                                    : h * std::pow(radius_R / h, static_cast<double>(k) / radii_count);
  return radii;
}

ScalarGrid local_maximal_function(const ScalarGrid& f, double radius_R, int radii_count) {
  const UniformGrid& g = f.grid;
  const int d = g.dim();
  for (double v : f.values)
    if (v < 0.0) throw DomainError("maximal function needs a nonnegative field");
  const auto radii = maximal_function_radii(g, radius_R, radii_count);
  const double r_max2 = radius_R * radius_R;

  struct Offset {
    std::array<int, kMaxDim> o;
    double d2;
  };
  std::vector<Offset> offsets;
  std::array<int, kMaxDim> reach{0, 0, 0};
  for (int i = 0; i < d; ++i) reach[i] = static_cast<int>(std::ceil(radius_R / g.spacing(i)));
  for (int a = -reach[0]; a <= reach[0]; ++a)
    for (int b = -reach[1]; b <= reach[1]; ++b)
      for (int c = -reach[2]; c <= reach[2]; ++c) {
        const std::array<int, kMaxDim> o{a, b, c};
        double d2 = 0.0;
        for (int i = 0; i < d; ++i) {
          const double dx = o[i] * g.spacing(i);
          d2 += dx * dx;
        }
        if (d2 <= r_max2) offsets.push_back({o, d2});
      }
  std::stable_sort(offsets.begin(), offsets.end(),
                   [](const Offset& x, const Offset& y) { return x.d2 < y.d2; });

  ScalarGrid out(g);
  for (std::size_t cell = 0; cell < g.size(); ++cell) {
    const auto idx = g.unflatten(cell);
    double sum = 0.0;
    long count = 0;
    std::size_t p = 0;
    double best = 0.0;
    for (double r : radii) {
      const double r2 = r * r;
      for (; p < offsets.size() && offsets[p].d2 <= r2; ++p) {
        auto j = idx;
        bool inside = true;
        for (int i = 0; i < d; ++i) {
          j[i] += offsets[p].o[i];
          if (j[i] < 0 || j[i] >= g.cells(i)) { inside = false; break; }
        }
        if (!inside) continue;
        sum += f.values[g.flatten(j)];
        ++count;
      }
      if (count > 0) best = std::max(best, sum / static_cast<double>(count));
    }
    out.values[cell] = best;
  }
  return out;
}

ScalarGrid tabulate_gradient_norm(const CoefficientPair& pair, FieldPart part,
                                  const UniformGrid& grid, double h) {
  ScalarGrid out(grid);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Vec x = grid.center(c);
    double sq = 0.0;
    if (part == FieldPart::Sigma) {
      const Tensor3 t = pair.grad_sigma(x, h);
      for (int l = 0; l < pair.dim_d(); ++l) sq += t.slices[l].squaredNorm();
    } else {
      sq = pair.grad_drift(x, h).squaredNorm();
    }
    out.values[c] = std::sqrt(sq);
  }
  return out;
}

ScalarFunction maximal_function_weight(const ScalarGrid& maximal, double scale, double power) {
  auto grid = std::make_shared<const ScalarGrid>(maximal);
  return [grid, scale, power](const Vec& x) {
    return scale * std::pow(grid->interpolate(x), power);
  };
}

// ---------------------------------------------------------------------------
// Pair-sampling certificates

namespace {

struct PairDraw {
  Vec x, y;
};

PairDraw draw_pair(std::uint64_t seed, std::size_t index, double R, const PairSampling& s) {
  CounterStream rng(seed, index);
  const int d = s.box.dim();
  Vec x(d);
  for (int i = 0; i < d; ++i) x(i) = s.box.lo(i) + (s.box.hi(i) - s.box.lo(i)) * rng.uniform();
  const bool log_scale = rng.uniform() < s.log_scale_fraction;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vec dir(d);
    for (int i = 0; i < d; ++i) dir(i) = rng.normal();
    dir /= dir.norm();
    const double u = rng.uniform();
    const double r = log_scale ? R * std::pow(s.min_scale, u) : R * std::pow(u, 1.0 / d);
    Vec y = x + r * dir;
    if (s.box.contains(y)) return {x, y};
  }
  return {x, x};
}

double lhs_value(const CoefficientPair& pair, FieldPart part, const Vec& x, const Vec& y) {
  if (part == FieldPart::Drift) return std::abs((x - y).dot(pair.drift(x) - pair.drift(y)));
  return (pair.sigma(x) - pair.sigma(y)).squaredNorm();
}

struct ChunkStats {
  std::size_t violations = 0;
  double worst = 0.0;
};

OsgoodCertificate certify_part(const CoefficientPair& pair, FieldPart part,
                               const OsgoodModulus& modulus, const ScalarFunction& g_R,
                               double radius_R, std::size_t n_pairs, std::uint64_t seed,
                               const CertifyOptions& opt) {
  if (n_pairs < 1) throw ParameterError("certificate needs n_pairs >= 1");
  if (!(radius_R > 0.0)) throw ParameterError("certificate radius must be positive");
  if (opt.sampling.box.dim() != pair.dim_d())
    throw ParameterError("sampling box dimension does not match the field");

  constexpr std::size_t kChunk = 1024;
  const std::size_t n_chunks = (n_pairs + kChunk - 1) / kChunk;
  std::vector<ChunkStats> stats(n_chunks);
  parallel_chunks(n_pairs, kChunk, opt.workers, [&](std::size_t begin, std::size_t end) {
    ChunkStats& st = stats[begin / kChunk];
    for (std::size_t i = begin; i < end; ++i) {
      const auto [x, y] = draw_pair(seed, i, radius_R, opt.sampling);
      const double gx = g_R(x), gy = g_R(y);
      if (gx < 0.0 || gy < 0.0) throw DomainError("g_R must be nonnegative");
      const double lhs = lhs_value(pair, part, x, y);
      const double rhs = (gx + gy) * modulus((x - y).squaredNorm());
      double ratio = 0.0;
      if (lhs > 0.0) ratio = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
      if (lhs > rhs) ++st.violations;
      st.worst = std::max(st.worst, ratio);
    }
  });

  OsgoodCertificate cert;
  cert.radius_R = radius_R;
  cert.g_R = g_R;
  cert.modulus = modulus;
  cert.n_pairs = n_pairs;
  cert.tolerance = opt.tolerance;
  for (const auto& st : stats) {
    cert.violations += st.violations;
    cert.worst_ratio = std::max(cert.worst_ratio, st.worst);
  }
  cert.violation_rate = static_cast<double>(cert.violations) / static_cast<double>(n_pairs);
  return cert;
}

}  // namespace

OsgoodCertificate certify_Hq(const CoefficientPair& pair, const OsgoodModulus& modulus,
                             const ScalarFunction& g_R, double radius_R, std::size_t n_pairs,
                             std::uint64_t seed, const CertifyOptions& options) {
  return certify_part(pair, FieldPart::Drift, modulus, g_R, radius_R, n_pairs, seed, options);
}

OsgoodCertificate certify_Hsigma(const CoefficientPair& pair, const OsgoodModulus& modulus,
                                 const ScalarFunction& g_R, double radius_R,
                                 std::size_t n_pairs, std::uint64_t seed,
                                 const CertifyOptions& options) {
  return certify_part(pair, FieldPart::Sigma, modulus, g_R, radius_R, n_pairs, seed, options);
}

double sweep_weight_scale(const CoefficientPair& pair, const OsgoodModulus& modulus,
                          FieldPart part, const ScalarFunction& base_weight, double radius_R,
                          std::size_t n_pairs, std::uint64_t seed, const CertifyOptions& options) {
  // A certificate run against the base weight reports max LHS / RHS directly.
  return certify_part(pair, part, modulus, base_weight, radius_R, n_pairs, seed, options)
      .worst_ratio;
}

}  // namespace oslab
