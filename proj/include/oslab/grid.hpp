#pragma once

#include "oslab/types.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace oslab {

// Axis-aligned box [lo, hi] in R^d.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x) const;
  double volume() const;
};

Box symmetric_box(int d, double half_width);

// Cell-centered uniform grid over a box.
class UniformGrid {
 public:
  UniformGrid() = default;
  UniformGrid(Box box, std::array<int, kMaxDim> cells);
  UniformGrid(Box box, int cells_per_axis);

  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  int cells(int axis) const { return cells_[axis]; }
  const std::array<int, kMaxDim>& cells() const { return cells_; }
  double spacing(int axis) const { return h_[axis]; }
  double cell_volume() const;
  std::size_t size() const { return size_; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  Vec center(std::size_t flat) const;
  std::array<int, kMaxDim> unflatten(std::size_t flat) const;
  std::size_t flatten(const std::array<int, kMaxDim>& idx) const;
  // Index of the cell containing x, or -1 when x lies outside the box.
  long locate(const Vec& x) const;

  bool operator==(const UniformGrid& other) const;

 private:
  Box box_;
  std::array<int, kMaxDim> cells_{1, 1, 1};
  std::array<double, kMaxDim> h_{1.0, 1.0, 1.0};
  std::array<std::size_t, kMaxDim> stride_{1, 1, 1};
  std::size_t size_ = 0;
};

// Scalar field sampled at cell centers.
struct ScalarGrid {
  UniformGrid grid;
  std::vector<double> values;

  ScalarGrid() = default;
  explicit ScalarGrid(UniformGrid g, double fill = 0.0)
      : grid(std::move(g)), values(grid.size(), fill) {}

  static ScalarGrid tabulate(const UniformGrid& g, const ScalarFunction& f);

  double sum() const;
  double integral() const { return sum() * grid.cell_volume(); }
  double max() const;
  double min() const;
  // Multilinear interpolation between cell centers, clamped at the box edge.
  double interpolate(const Vec& x) const;
  // Empirical L^q norm over the grid (Lebesgue quadrature).
  double lq_norm(double q) const;
};

// Central-difference |grad f| (one-sided on the boundary ring).
ScalarGrid gradient_magnitude(const ScalarGrid& f);

// Writes "coord_1,...,coord_d,value" rows with a header.
void write_grid_csv(const std::string& path, const ScalarGrid& f, const std::string& value_name);

}  // namespace oslab
