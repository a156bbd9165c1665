#pragma once

#include "oslab/density.hpp"
#include "oslab/fields.hpp"
#include "oslab/flow.hpp"
#include "oslab/grid.hpp"

#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace oslab {

enum class Boundary { Dirichlet0, ZeroFlux };
enum class FpeScheme { ExplicitEuler, ImplicitEuler, CrankNicolson };

std::string to_string(FpeScheme s);
std::string to_string(Boundary b);
FpeScheme parse_scheme(const std::string& s);
Boundary parse_boundary(const std::string& s);

// Coefficients a = sigma sigma^T and b tabulated at cell centres, plus the
// flux-form discretization of L* u = 1/2 d_ij(a^ij u) - d_i(b^i u).
//
// Each face between cells l and r on axis i carries the flux
//   F = -1/2 ((a^ii u)_r - (a^ii u)_l) / h + theta b^i_l u_l + (1 - theta) b^i_r u_r,
// theta = 1/2 unless the face Peclet number |b| h / a^ii exceeds 2, in which case
// the upwind cell takes the whole drift flux. Mixed terms i != j use central
// D_i D_j (a^ij u) with zero ghosts. L is the exact transpose of this stencil.
class GeneratorGrid {
 public:
  GeneratorGrid(const CoefficientPair& pair, const UniformGrid& grid, Boundary boundary,
                bool upwinding = true);

  const UniformGrid& grid() const { return grid_; }
  Boundary boundary() const { return boundary_; }
  int dim() const { return grid_.dim(); }
  const Mat& a(std::size_t cell) const { return a_[cell]; }
  const Vec& b(std::size_t cell) const { return b_[cell]; }
  double max_diffusion() const { return max_a_; }
  double max_drift() const { return max_b_; }
  std::size_t upwind_faces() const { return upwind_faces_; }
  std::size_t total_faces() const { return faces_.size(); }
  // Largest explicit step satisfying both CFL restrictions.
  double explicit_dt_limit() const;

  // L* as a sparse matrix acting on cell values.
  const Eigen::SparseMatrix<double>& adjoint_matrix() const { return adjoint_; }

  struct Face {
    int axis;
    long left, right;  // -1 for a ghost cell outside the box
    double w_left, w_right;
  };
  const std::vector<Face>& faces() const { return faces_; }

 private:
  void assemble();

  UniformGrid grid_;
  Boundary boundary_;
  std::vector<Mat> a_;
  std::vector<Vec> b_;
  std::vector<Face> faces_;
  double max_a_ = 0.0;
  double max_b_ = 0.0;
  std::size_t upwind_faces_ = 0;
  bool upwinding_;
  Eigen::SparseMatrix<double> adjoint_;
};

// L phi = 1/2 a^ij d_ij phi + b^i d_i phi. Warns on stderr when phi is nonzero on
// the boundary ring, where the discrete identity with L* no longer describes the PDE.
ScalarGrid apply_L(const GeneratorGrid& G, const ScalarGrid& phi);
ScalarGrid apply_adjoint(const GeneratorGrid& G, const ScalarGrid& u);
// True when phi vanishes on the outermost `ring` cells.
bool interior_supported(const ScalarGrid& phi, int ring = 2);

// u0(x) at cell centres, rescaled to unit mass when `normalize`.
DensityGrid initial_density(const UniformGrid& grid, const ScalarFunction& u0, bool normalize = true);
// The uniform density 1/|box|.
DensityGrid uniform_density(const UniformGrid& grid);

class AdjointStepper {
 public:
  AdjointStepper(const GeneratorGrid& G, double dt, FpeScheme scheme);
  FpeScheme scheme() const { return scheme_; }
  double dt() const { return dt_; }
  // One step; negative cells are clipped to zero and counted.
  DensityGrid step(const DensityGrid& u) const;

 private:
  const GeneratorGrid& G_;
  double dt_;
  FpeScheme scheme_;
  Eigen::SparseMatrix<double> rhs_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

DensityGrid step_adjoint(const GeneratorGrid& G, const DensityGrid& u, double dt, FpeScheme scheme);

struct SnapshotStats {
  double time = 0.0;
  double mass = 0.0;
  double l1 = 0.0;
  double linf = 0.0;
};

struct WeakSolutionPath {
  std::vector<DensityGrid> snapshots;
  std::vector<SnapshotStats> stats;
  FpeScheme scheme = FpeScheme::CrankNicolson;
  double dt = 0.0;
  std::size_t clipped_cells = 0;
  double clipped_mass = 0.0;
  double sup_l1() const;
  double sup_linf() const;
};

// Solves up to `horizon` with steps of (about) dt, recording `snapshots` + 1
// equally spaced snapshots including t = 0.
WeakSolutionPath solve_fpe(const GeneratorGrid& G, const DensityGrid& u0, double horizon, double dt,
                           FpeScheme scheme, int snapshots);

struct TestFunction {
  std::string name;
  ScalarFunction phi;
};

struct DualityRow {
  double time = 0.0;
  std::string name;
  double pde = 0.0;        // int phi u_t dx
  double particles = 0.0;  // E phi(X_t)
  double std_error = 0.0;
  double gap = 0.0;
  double tolerance = 0.0;  // mc_sigmas * stderr + grid_budget * int |phi| u_t
  bool passed = false;
};

struct DualityReport {
  std::vector<DualityRow> rows;
  double max_relative_gap = 0.0;
  bool passed() const;
};

struct DualityOptions {
  double mc_sigmas = 3.0;
  double grid_budget = 0.01;
};

// Every snapshot whose time lies on the ensemble grid is compared.
DualityReport duality_check(const FlowEnsemble& e, const WeakSolutionPath& path,
                            const std::vector<TestFunction>& tests, const DualityOptions& options = {});

// L^1 distance of two snapshots; a finer grid (integer refinement) is averaged onto the coarser.
double l1_distance(const DensityGrid& a, const DensityGrid& b);
DensityGrid restrict_to(const DensityGrid& fine, const UniformGrid& coarse);

struct Discretization {
  FpeScheme scheme = FpeScheme::CrankNicolson;
  int refine = 1;     // cells per base cell
  double dt = 0.01;
};

struct UniquenessReport {
  double distance_coarse = 0.0;  // sup_t L^1 at the base resolution
  double distance_fine = 0.0;    // both discretizations refined by 2 (dt halved)
  double ratio = 0.0;
  bool passed = false;
  std::string note;
};

UniquenessReport uniqueness_experiment(const CoefficientPair& pair, const UniformGrid& base,
                                       Boundary boundary, const ScalarFunction& u0, double horizon,
                                       int snapshots, const Discretization& first,
                                       const Discretization& second, double ratio_threshold = 0.6);

// Columns time, mass, linf, l1, then duality_gap_<name> per test function.
void write_fpe_report(const std::string& path, const WeakSolutionPath& sol, const DualityReport* duality);

}  // namespace oslab
