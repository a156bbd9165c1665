#pragma once

#include "oslab/fields.hpp"
#include "oslab/flow.hpp"
#include "oslab/grid.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oslab {

// Reference measure: the probability measure proportional to (1+|x|^2)^{-q-(d+1)/2},
// or (Lebesgue flag) the uniform measure on a box.
class WeightedMeasure {
 public:
  static WeightedMeasure weighted(int dim_d, double q);
  static WeightedMeasure lebesgue(const Box& box);

  bool is_lebesgue() const { return lebesgue_; }
  int dim() const { return dim_d_; }
  double q() const { return q_; }
  const Box& box() const { return box_; }
  // Total mass of the unnormalized weight (or box volume).
  double normalization() const { return normalization_; }
  double exponent() const { return q_ + 0.5 * (dim_d_ + 1); }

  // Probability density at x (zero outside the box for the Lebesgue flag).
  double density(const Vec& x) const;
  // P(|X| <= r) for the weighted measure.
  double radial_cdf(double r) const;
  std::string describe() const;

 private:
  bool lebesgue_ = false;
  int dim_d_ = 1;
  double q_ = 0.0;
  Box box_;
  double normalization_ = 1.0;
};

// i.i.d. samples with equal weights 1/n. Sample i depends only on (seed, i).
WeightedPoints sample_measure(const WeightedMeasure& mu, std::size_t n, std::uint64_t seed);

enum class DensityKind { Pushforward, PDE };

struct DensityGrid {
  ScalarGrid values;
  double time = 0.0;
  DensityKind kind = DensityKind::Pushforward;
  double bandwidth = 0.0;
  double leakage = 0.0;       // probability mass not represented on the grid
  std::size_t clipped = 0;    // negative cells reset to zero (PDE snapshots)
  double clipped_mass = 0.0;

  double mass() const { return values.integral(); }
};

// Silverman's rule for n equally weighted samples with per-axis spread `spread`.
double silverman_bandwidth(double spread, std::size_t n, int dim);

struct KdeOptions {
  std::optional<double> bandwidth;  // Silverman when empty
  int path = -1;                    // restrict to one Brownian path; -1 = all
  bool relative_to_mu = true;       // divide by the density of mu
};

// Binned Gaussian KDE of X_{t_k} under (paths x weighted particles). With
// relative_to_mu the cell values estimate E K_t = d[(X_t)_# mu]/d mu; otherwise
// the Lebesgue density of the law of X_t.
DensityGrid pushforward_density(const FlowEnsemble& e, const WeightedMeasure& mu, int time_index,
                                const UniformGrid& grid, const KdeOptions& options = {});

// E K_t^p per cell, averaged over paths of per-path KDEs, with the standard error.
struct MomentGrid {
  ScalarGrid mean;
  ScalarGrid std_error;
  ScalarGrid mass_density;  // path-averaged Lebesgue density of X_t
  double bandwidth = 0.0;
  double leakage = 0.0;
};
MomentGrid density_moment(const FlowEnsemble& e, const WeightedMeasure& mu, int time_index,
                          const UniformGrid& grid, double p, std::optional<double> bandwidth = {});

// Cells closest to the centre of mass of `mass_density` that together hold `fraction`
// of its mass.
std::vector<std::size_t> central_cells(const ScalarGrid& mass_density, double fraction);

struct BracketOptions {
  bool allow_finite_differences = true;
};

// The pointwise expression whose positive sup controls E K_t^p:
// p/2 |div sigma|^2 - div b + sum_k sum_ij [1/2 d_i s^{jk} d_j s^{ik} + s^{ik} d_ij s^{jk}].
ScalarGrid density_bracket(const CoefficientPair& pair, double p, const UniformGrid& grid,
                           const BracketOptions& options = {});
// exp(p T sup(bracket)^+).
double density_bound_rhs(const CoefficientPair& pair, double p, double horizon,
                         const UniformGrid& grid, const BracketOptions& options = {});

struct DensityBoundOptions {
  std::optional<double> bandwidth;
  double central_fraction = 0.8;
  double slack = 0.15;
};

struct DensityBoundReport {
  double p = 1.0;
  double time = 0.0;
  double empirical = 0.0;  // sup over central cells of E K_t^p
  double std_error = 0.0;  // at the maximizing cell
  double bound = 0.0;      // exp(p T sup bracket^+)
  double slack = 0.0;
  double central_fraction = 0.0;
  std::size_t central_count = 0;
  double central_min = 0.0;  // min over central cells of E K_t^p
  double leakage = 0.0;
  bool passed = false;
};

DensityBoundReport density_bound_check(const CoefficientPair& pair, const FlowEnsemble& e,
                                       const WeightedMeasure& mu, double p, int time_index,
                                       const UniformGrid& grid,
                                       const DensityBoundOptions& options = {});

// CSV of cell centres and values, plus "<path>.json" metadata.
void write_density(const std::string& path, const DensityGrid& g);
DensityGrid read_density(const std::string& path);

}  // namespace oslab
