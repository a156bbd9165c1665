#pragma once

#include "oslab/fields.hpp"

#include <memory>
#include <vector>

namespace oslab {

enum class MollifyMode { Convolve, CutoffOnly };

// chi(x) = c exp(-1 / (1 - |x|^2)) on the unit ball, c fixing unit mass in R^d.
double bump_normalization(int d);
double bump(const Vec& y);  // normalized
Vec bump_gradient(const Vec& y);

// phi(x): 1 on B_1, 0 outside B_2, smooth in between; values in [0, 1].
double cutoff(const Vec& x);
Vec cutoff_gradient(const Vec& x);

struct MollifierSpec {
  int level_n = 1;
  int quadrature_points = 32;  // midpoint nodes per axis on [-1, 1]
  MollifyMode mode = MollifyMode::Convolve;
};

// Tensor-product midpoint nodes y_q inside B_1 with weights w_q = chi(y_q) h^d,
// rescaled to sum to one, plus the matching weights for grad chi.
struct MollifierNodes {
  int dim = 1;
  std::vector<Vec> nodes;
  std::vector<double> weights;
  std::vector<Vec> grad_weights;
  double raw_mass = 0.0;  // sum of chi(y_q) h^d before rescaling
};

std::shared_ptr<const MollifierNodes> mollifier_nodes(int d, int quadrature_points);

// sigma_n = (sigma * chi_n) phi_n, b_n = (b * chi_n) phi_n with chi_n(x) = n^d chi(n x) and
// phi_n(x) = phi(x / n). In CutoffOnly mode sigma_n = sigma phi_n.
CoefficientPair mollify_pair(const CoefficientPair& pair, const MollifierSpec& spec);

enum class DistanceNorm { L1, L2, L2q };

struct DistanceOptions {
  double q = 2.0;             // for L2q: sigma in L^{2q}, b in L^q
  int points_per_axis = 256;  // midpoint grid over [-R, R]^d restricted to B_R
};

struct MollificationDistance {
  double sigma_norm = 0.0;
  double drift_norm = 0.0;
  // L1/L2: sigma_norm + drift_norm. L2q: (sigma_norm + drift_norm)^2.
  double combined = 0.0;
};

MollificationDistance mollification_distance(const CoefficientPair& pair, const MollifierSpec& spec_n,
                                             const MollifierSpec& spec_l, double box_radius,
                                             DistanceNorm norm, const DistanceOptions& options = {});

// Same norms between two arbitrary pairs (e.g. a mollified level and the rough field).
MollificationDistance pair_distance(const CoefficientPair& a, const CoefficientPair& b,
                                    double box_radius, DistanceNorm norm,
                                    const DistanceOptions& options = {});

// Accelerator for one-dimensional pairs: drift and sigma sampled on [lo, hi] and
// evaluated by cubic Hermite interpolation; queries outside fall back to the pair.
CoefficientPair tabulate_pair_1d(const CoefficientPair& pair, double lo, double hi, int cells);

}  // namespace oslab
