#pragma once

#include "oslab/fields.hpp"
#include "oslab/moduli.hpp"
#include "oslab/parallel.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace oslab {

// Starting points with initial-measure weights (summing to one).
struct WeightedPoints {
  std::vector<Vec> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  static WeightedPoints single(const Vec& x);
  static WeightedPoints equal_weights(std::vector<Vec> points);
};

// Brownian increments on a uniform fine grid over [0, T]. Each increment is a pure
// function of (master_seed, path, step, component). Copies share identity, and
// two-flow comparisons require the same identity.
class BrownianStore {
 public:
  BrownianStore(std::uint64_t master_seed, int n_paths, int dim_m, double horizon, int n_steps);

  std::uint64_t master_seed() const { return impl_->seed; }
  int n_paths() const { return impl_->n_paths; }
  int dim_m() const { return impl_->dim_m; }
  double horizon() const { return impl_->horizon; }
  int n_steps() const { return impl_->n_steps; }
  double dt() const { return impl_->horizon / impl_->n_steps; }

  double increment(int path, int step, int component) const;
  // Increments aggregated over `stride` fine steps: (n_steps / stride) rows of m.
  std::vector<double> path_increments(int path, int stride) const;

  bool same_as(const BrownianStore& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::uint64_t seed;
    int n_paths, dim_m;
    double horizon;
    int n_steps;
  };
  std::shared_ptr<const Impl> impl_;
};

enum class Scheme { EulerMaruyama, Milstein1D };

struct IntegrationOptions {
  Scheme scheme = Scheme::EulerMaruyama;
  int stride = 1;  // coarse step = stride fine Brownian steps
  std::optional<double> stopping_radius;
  bool store_trajectories = true;
  int record_every = 1;  // with storage, keep every record_every-th coarse state
  int workers = 1;
};

class FlowEnsemble {
 public:
  FlowEnsemble(BrownianStore noise, std::shared_ptr<const WeightedPoints> starts, int stride,
               int dim_d, bool stored, std::optional<double> stopping_radius, std::string field,
               int record_every = 1);

  const BrownianStore& noise() const { return noise_; }
  const WeightedPoints& starts() const { return *starts_; }
  const std::shared_ptr<const WeightedPoints>& starts_ptr() const { return starts_; }
  int stride() const { return stride_; }
  int dim() const { return dim_d_; }
  int n_paths() const { return noise_.n_paths(); }
  std::size_t n_particles() const { return starts_->size(); }
  std::size_t n_trajectories() const { return n_paths() * n_particles(); }
  int n_steps() const { return noise_.n_steps() / stride_; }
  int n_times() const { return n_steps() + 1; }
  double time(int k) const { return k * stride_ * noise_.dt(); }
  double dt() const { return stride_ * noise_.dt(); }
  bool stored() const { return stored_; }
  int record_every() const { return record_every_; }
  // Number of stored states per trajectory.
  int n_records() const { return n_steps() / record_every_ + 1; }
  bool recorded(int k) const { return k % record_every_ == 0; }
  const std::optional<double>& stopping_radius() const { return stopping_radius_; }
  const std::string& field() const { return field_; }

  std::size_t flat(int path, std::size_t particle) const { return path * n_particles() + particle; }

  // State at coarse step k (k must be a recorded step).
  Vec state(int path, std::size_t particle, int k) const;
  Vec final_state(int path, std::size_t particle) const;
  // max over recorded steps of |X_k|
  double sup_norm(int path, std::size_t particle) const { return sup_norm_[flat(path, particle)]; }
  // First step with |X_k| >= lambda, or n_steps() when the trajectory never exits.
  int stopped_at(int path, std::size_t particle) const { return stopped_at_[flat(path, particle)]; }
  bool exited(int path, std::size_t particle) const { return exited_[flat(path, particle)] != 0; }
  bool diverged(int path, std::size_t particle) const { return diverged_[flat(path, particle)] != 0; }
  std::size_t diverged_count() const;

  // Raw storage, layout [trajectory][record][component].
  const std::vector<double>& trajectories() const { return traj_; }

 private:
  friend FlowEnsemble integrate(const CoefficientPair&, const WeightedPoints&, const BrownianStore&,
                                const IntegrationOptions&);
  friend FlowEnsemble integrate_shared(const CoefficientPair&, std::shared_ptr<const WeightedPoints>,
                                       const BrownianStore&, const IntegrationOptions&);
  friend FlowEnsemble read_trajectories(const std::string&, const BrownianStore&,
                                        std::shared_ptr<const WeightedPoints>);

  BrownianStore noise_;
  std::shared_ptr<const WeightedPoints> starts_;
  int stride_;
  int dim_d_;
  bool stored_;
  std::optional<double> stopping_radius_;
  std::string field_;
  int record_every_;
  std::vector<double> traj_;
  std::vector<double> final_;
  std::vector<double> sup_norm_;
  std::vector<int> stopped_at_;
  std::vector<std::uint8_t> exited_;
  std::vector<std::uint8_t> diverged_;
};

// X_{k+1} = X_k + sigma(X_k) dB_k + b(X_k) dt for every path and start point.
FlowEnsemble integrate(const CoefficientPair& pair, const WeightedPoints& starts,
                       const BrownianStore& noise, const IntegrationOptions& options = {});
// Same, sharing the start set with other ensembles (needed for comparisons).
FlowEnsemble integrate_shared(const CoefficientPair& pair, std::shared_ptr<const WeightedPoints> starts,
                              const BrownianStore& noise, const IntegrationOptions& options = {});

// ||X - X~||_{infty,T} per trajectory on identical grids.
std::vector<double> sup_distance(const FlowEnsemble& a, const FlowEnsemble& b);
// Coarse ensemble linearly interpolated onto the fine one's grid (fine stride must divide coarse).
std::vector<double> sup_distance_nested(const FlowEnsemble& coarse, const FlowEnsemble& fine);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;  // across independent Brownian paths
};

// E int_{G_R} psi_delta(||X - X~||^2_{infty,T}) dmu.
Estimate psi_stability(const FlowEnsemble& a, const FlowEnsemble& b, const AuxiliaryFunction& aux,
                       double level_R);
// int E sup_t |X_t|^{exponent} dmu.
Estimate moment_report(const FlowEnsemble& e, double exponent);

// Several pairs integrated under the same noise in lockstep; records, for every
// level, sup_t |X^level - X^reference| and sup_t |X^level| per trajectory without
// storing paths.
struct LadderResult {
  int n_paths = 0;
  std::size_t n_particles = 0;
  std::vector<double> weights;
  std::size_t reference = 0;
  std::vector<std::vector<double>> sup_gap;   // [level][trajectory]
  std::vector<std::vector<double>> sup_norm;  // [level][trajectory]
  std::size_t diverged = 0;
};

LadderResult integrate_ladder(const std::vector<CoefficientPair>& levels, std::size_t reference,
                              const WeightedPoints& starts, const BrownianStore& noise,
                              const IntegrationOptions& options = {});

// E int (1 ^ ||X^level - X^ref||^2) dmu.
Estimate ladder_cauchy_metric(const LadderResult& r, std::size_t level);
// E int_{G_R} psi_delta(||X^level - X^ref||^2) dmu.
Estimate ladder_psi(const LadderResult& r, std::size_t level, const AuxiliaryFunction& aux,
                    double level_R);

struct ProbeRow {
  double delta = 0.0;
  double probability = 0.0;  // P(|Z_{T ^ tau}| > eta)
  double probability_se = 0.0;
  double mean_psi = 0.0;     // E psi_delta(|Z|^2)
  double mean_psi_se = 0.0;
  double bound = 0.0;        // mean_psi / psi_delta(eta^2)
  double bound_se = 0.0;
  bool holds = false;        // probability <= bound + 3 (combined stderr)
};

struct ProbeReport {
  double eta = 0.0;
  double lambda = 0.0;
  double rms_gap = 0.0;
  std::vector<ProbeRow> rows;
  bool all_hold() const;
};

// Two discretizations of the same pair under shared noise, both stopped at radius
// lambda; Z = X^(1) - X^(2) at T ^ min(tau^(1), tau^(2)) on the common grid.
ProbeReport uniqueness_probe(const CoefficientPair& pair, const BrownianStore& noise,
                             const WeightedPoints& starts, const OsgoodModulus& modulus,
                             const std::vector<double>& deltas, double eta, double lambda,
                             const IntegrationOptions& first, const IntegrationOptions& second);

// Binary columnar dump: magic line, 8-byte header length, JSON header, then
// one float64 column per component ([trajectory][time]), sup norms, exit steps (int32),
// diverged flags (uint8).
void write_trajectories(const std::string& path, const FlowEnsemble& e);
FlowEnsemble read_trajectories(const std::string& path, const BrownianStore& noise,
                               std::shared_ptr<const WeightedPoints> starts);
std::string read_trajectory_header(const std::string& path);

struct PsiSummaryRow {
  int n_level = 0;
  double delta = 0.0;
  double psi_value = 0.0;
  double std_error = 0.0;
};
void write_psi_summary(const std::string& path, const std::vector<PsiSummaryRow>& rows);

}  // namespace oslab
