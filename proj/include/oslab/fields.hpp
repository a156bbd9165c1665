#pragma once

#include "oslab/grid.hpp"
#include "oslab/moduli.hpp"
#include "oslab/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace oslab {

enum class Smoothness { Analytic, GridTabulated, Mollified };

// Cubic Hermite table on a uniform 1-d grid (values and slopes at nodes).
struct HermiteTable1D {
  double lo = 0.0;
  double h = 1.0;
  int cells = 0;
  std::vector<double> value;
  std::vector<double> slope;

  double hi() const { return lo + h * cells; }
  bool covers(double x) const { return x >= lo && x <= hi(); }
  double eval(double x) const {
    const double u = (x - lo) / h;
    int i = static_cast<int>(u);
    if (i >= cells) i = cells - 1;
    const double t = u - i;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * value[i] + (t3 - 2 * t2 + t) * h * slope[i] +
           (-2 * t3 + 3 * t2) * value[i + 1] + (t3 - t2) * h * slope[i + 1];
  }
};

// Fast path for d = m = 1 pairs: drift and sigma tables valid on [lo, hi].
struct Tabulation1D {
  HermiteTable1D drift;
  HermiteTable1D sigma;
};

// Diffusion sigma: R^d -> R^{d x m} and drift b: R^d -> R^d, with optional
// derivative data. Missing derivatives fall back to central differences.
class CoefficientPair {
 public:
  CoefficientPair(int dim_d, int dim_m, MatrixFunction sigma, VectorFunction drift,
                  Smoothness smoothness, std::string name);

  int dim_d() const { return dim_d_; }
  int dim_m() const { return dim_m_; }
  Smoothness smoothness() const { return smoothness_; }
  const std::string& name() const { return name_; }

  Mat sigma(const Vec& x) const;
  Vec drift(const Vec& x) const { return b_(x); }
  // a = sigma sigma^T.
  Mat diffusion_matrix(const Vec& x) const;

  CoefficientPair& with_grad_sigma(TensorFunction f);
  CoefficientPair& with_grad_drift(MatrixFunction f);  // (i, j) = d b_i / d x_j
  CoefficientPair& with_div_drift(ScalarFunction f);
  // Marks sigma as spatially constant (lets schemes skip derivative work).
  CoefficientPair& with_constant_sigma(bool flag = true);
  // Non-Lipschitz data: integrating it directly is allowed but warned about.
  CoefficientPair& with_rough(bool flag = true);

  bool has_grad_sigma() const { return static_cast<bool>(grad_sigma_); }
  bool has_grad_drift() const { return static_cast<bool>(grad_b_); }
  bool has_div_drift() const { return static_cast<bool>(div_b_); }
  bool constant_sigma() const { return constant_sigma_; }
  bool rough() const { return rough_; }

  CoefficientPair& with_tabulation(std::shared_ptr<const Tabulation1D> tab);
  const std::shared_ptr<const Tabulation1D>& tabulation() const { return tabulation_; }

  // Analytic values when present, central differences with step h otherwise.
  Tensor3 grad_sigma(const Vec& x, double h = 1e-5) const;
  Mat grad_drift(const Vec& x, double h = 1e-5) const;
  double div_drift(const Vec& x, double h = 1e-5) const;

  const MatrixFunction& sigma_fn() const { return sigma_; }
  const VectorFunction& drift_fn() const { return b_; }

 private:
  int dim_d_;
  int dim_m_;
  MatrixFunction sigma_;
  VectorFunction b_;
  TensorFunction grad_sigma_;
  MatrixFunction grad_b_;
  ScalarFunction div_b_;
  Smoothness smoothness_;
  std::string name_;
  bool constant_sigma_ = false;
  bool rough_ = false;
  std::shared_ptr<const Tabulation1D> tabulation_;
};

// div b at x: analytic when available, else sum_i (b_i(x + h e_i) - b_i(x - h e_i)) / 2h.
double divergence(const CoefficientPair& pair, const Vec& x, double h);

// V(t) = sum_{k >= 1} |sin kt| / k^2, truncated at K terms.
struct VSeriesValue {
  double value;
  double tail_bound;  // sum_{k > K} 1/k^2 < 1/K
};
VSeriesValue eval_V_series(double t, int truncation_K);

// Truncated V-series evaluator. With table_size > 0 the 2 pi-periodic function is
// precomputed on that many nodes and evaluated by linear interpolation.
class VSeries {
 public:
  explicit VSeries(int truncation_K, int table_size = 0);

  int terms() const { return K_; }
  double tail_bound() const { return 1.0 / K_; }
  double operator()(double t) const;
  double exact(double t) const;

 private:
  int K_;
  std::shared_ptr<const std::vector<double>> inv_k2_;
  std::shared_ptr<const std::vector<double>> table_;
};

struct FieldParams {
  int dim_d = 1;
  int dim_m = 1;
  double sigma_scale = 0.5;
  int vseries_terms = 10000;
  int vseries_table = 0;
  double power = 0.9;  // exponent of the sobolev-power field
};

// Built-in pairs by key: "vseries", "linear", "ou", "tanh", "sobolev-power",
// "zero", "rotation", "contracting", or "csv:<path>".
CoefficientPair make_field(const std::string& key, const FieldParams& params);
std::vector<std::string> builtin_field_keys();
bool is_known_field_key(const std::string& key);

// Grid-tabulated drift loaded from CSV (header row, coordinates then value columns).
CoefficientPair load_grid_field(const std::string& path, double sigma_scale);

// M_R f(x) = sup over radii_count log-spaced radii r in (h, R] of the average of f
// over grid cells whose centers lie within distance r of x.
ScalarGrid local_maximal_function(const ScalarGrid& f, double radius_R, int radii_count);

// Radii used by local_maximal_function.
std::vector<double> maximal_function_radii(const UniformGrid& grid, double radius_R,
                                           int radii_count);

// |grad sigma| (Frobenius over d x d x m) or |grad b| tabulated at cell centers.
enum class FieldPart { Sigma, Drift };
ScalarGrid tabulate_gradient_norm(const CoefficientPair& pair, FieldPart part,
                                  const UniformGrid& grid, double h = 1e-5);

struct PairSampling {
  Box box;
  // Fraction of pairs whose separation is log-uniform in [R * min_scale, R];
  // the rest are uniform in the R-ball around x.
  double log_scale_fraction = 0.5;
  double min_scale = 1e-6;
};

struct OsgoodCertificate {
  double radius_R = 0.0;
  ScalarFunction g_R;
  OsgoodModulus modulus = OsgoodModulus::linear();
  std::size_t n_pairs = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;
  double worst_ratio = 0.0;   // max over pairs of LHS / RHS
  double tolerance = 0.0;     // accepted violation rate
  bool passed() const { return violation_rate <= tolerance; }
};

struct CertifyOptions {
  PairSampling sampling;
  double tolerance = 0.0;
  int workers = 1;
};

// |<x - y, b(x) - b(y)>| <= (g(x) + g(y)) rho(|x - y|^2) on sampled pairs.
OsgoodCertificate certify_Hq(const CoefficientPair& pair, const OsgoodModulus& modulus,
                             const ScalarFunction& g_R, double radius_R, std::size_t n_pairs,
                             std::uint64_t seed, const CertifyOptions& options);

// ||sigma(x) - sigma(y)||_F^2 <= (g(x) + g(y)) rho(|x - y|^2) on sampled pairs.
OsgoodCertificate certify_Hsigma(const CoefficientPair& pair, const OsgoodModulus& modulus,
                                 const ScalarFunction& g_R, double radius_R,
                                 std::size_t n_pairs, std::uint64_t seed,
                                 const CertifyOptions& options);

// Largest LHS / ((w(x) + w(y)) rho(|x - y|^2)) over sampled pairs: the smallest
// multiple c such that g = c w is not refuted by the sample. With w == 1 this
// sweeps for a constant g.
double sweep_weight_scale(const CoefficientPair& pair, const OsgoodModulus& modulus,
                          FieldPart part, const ScalarFunction& base_weight, double radius_R,
                          std::size_t n_pairs, std::uint64_t seed, const CertifyOptions& options);

// g(x) = scale * (M_R |grad f|(x))^power from a grid, looked up by interpolation.
ScalarFunction maximal_function_weight(const ScalarGrid& maximal, double scale, double power);

}  // namespace oslab
