#include "oslab/grid.hpp"

#include "oslab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace oslab {

bool Box::contains(const Vec& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x(i) < lo(i) || x(i) > hi(i)) return false;
  return true;
}

double Box::volume() const { return (hi - lo).prod(); }

Box symmetric_box(int d, double half_width) {
  return Box{Vec::Constant(d, -half_width), Vec::Constant(d, half_width)};
}

UniformGrid::UniformGrid(Box box, std::array<int, kMaxDim> cells) : box_(std::move(box)) {
  const int d = box_.dim();
  if (d < 1 || d > kMaxDim) throw ParameterError("grid dimension must be in 1..3");
  size_ = 1;
  for (int i = 0; i < kMaxDim; ++i) {
    if (i < d) {
      if (cells[i] < 1) throw ParameterError("grid needs at least one cell per axis");
      if (!(box_.hi(i) > box_.lo(i))) throw ParameterError("grid box must have positive extent");
      cells_[i] = cells[i];
      h_[i] = (box_.hi(i) - box_.lo(i)) / cells[i];
    } else {
      cells_[i] = 1;
      h_[i] = 1.0;
    }
  }
  // Axis 0 varies fastest.
  std::size_t s = 1;
  for (int i = 0; i < kMaxDim; ++i) {
    stride_[i] = s;
    s *= static_cast<std::size_t>(cells_[i]);
  }
  size_ = s;
}

UniformGrid::UniformGrid(Box box, int cells_per_axis)
    : UniformGrid(std::move(box), {cells_per_axis, cells_per_axis, cells_per_axis}) {}

double UniformGrid::cell_volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= h_[i];
  return v;
}

std::array<int, kMaxDim> UniformGrid::unflatten(std::size_t flat) const {
  std::array<int, kMaxDim> idx{0, 0, 0};
  for (int i = 0; i < kMaxDim; ++i) {
    idx[i] = static_cast<int>(flat % cells_[i]);
    flat /= cells_[i];
  }
  return idx;
}

std::size_t UniformGrid::flatten(const std::array<int, kMaxDim>& idx) const {
  std::size_t flat = 0;
  for (int i = 0; i < kMaxDim; ++i) flat += static_cast<std::size_t>(idx[i]) * stride_[i];
  return flat;
}

Vec UniformGrid::center(std::size_t flat) const {
  const auto idx = unflatten(flat);
  Vec x(dim());
  for (int i = 0; i < dim(); ++i) x(i) = box_.lo(i) + (idx[i] + 0.5) * h_[i];
  return x;
}

long UniformGrid::locate(const Vec& x) const {
  std::array<int, kMaxDim> idx{0, 0, 0};
  for (int i = 0; i < dim(); ++i) {
    const double u = (x(i) - box_.lo(i)) / h_[i];
    if (!(u >= 0.0) || u > cells_[i]) return -1;
    idx[i] = std::min(static_cast<int>(u), cells_[i] - 1);
  }
  return static_cast<long>(flatten(idx));
}

bool UniformGrid::operator==(const UniformGrid& other) const {
  if (dim() != other.dim()) return false;
  for (int i = 0; i < dim(); ++i)
    if (cells_[i] != other.cells_[i] || box_.lo(i) != other.box_.lo(i) || box_.hi(i) != other.box_.hi(i))
      return false;
  return true;
}

ScalarGrid ScalarGrid::tabulate(const UniformGrid& g, const ScalarFunction& f) {
  ScalarGrid out(g);
  for (std::size_t c = 0; c < g.size(); ++c) out.values[c] = f(g.center(c));
  return out;
}

double ScalarGrid::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

double ScalarGrid::max() const { return *std::max_element(values.begin(), values.end()); }
double ScalarGrid::min() const { return *std::min_element(values.begin(), values.end()); }

double ScalarGrid::interpolate(const Vec& x) const {
  const int d = grid.dim();
  std::array<int, kMaxDim> base{0, 0, 0};
  std::array<double, kMaxDim> frac{0.0, 0.0, 0.0};
  for (int i = 0; i < d; ++i) {
    const int n = grid.cells(i);
    double u = (x(i) - grid.box().lo(i)) / grid.spacing(i) - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    int b = std::min(static_cast<int>(u), std::max(n - 2, 0));
    base[i] = b;
    frac[i] = n > 1 ? u - b : 0.0;
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    auto idx = base;
    for (int i = 0; i < d; ++i) {
      const bool up = (corner >> i) & 1;
      if (up) {
        if (grid.cells(i) == 1) { w = 0.0; break; }
        idx[i] += 1;
        w *= frac[i];
      } else {
        w *= 1.0 - frac[i];
      }
    }
    if (w != 0.0) acc += w * values[grid.flatten(idx)];
  }
  return acc;
}

double ScalarGrid::lq_norm(double q) const {
  double s = 0.0;
  for (double v : values) s += std::pow(std::abs(v), q);
  return std::pow(s * grid.cell_volume(), 1.0 / q);
}

ScalarGrid gradient_magnitude(const ScalarGrid& f) {
  const UniformGrid& g = f.grid;
  ScalarGrid out(g);
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto idx = g.unflatten(c);
    double sq = 0.0;
    for (int i = 0; i < g.dim(); ++i) {
      const int n = g.cells(i);
      if (n < 2) continue;
      auto lo = idx, hi = idx;
      double span = 2.0 * g.spacing(i);
      if (idx[i] == 0) { span = g.spacing(i); hi[i] += 1; }
      else if (idx[i] == n - 1) { span = g.spacing(i); lo[i] -= 1; }
      else { lo[i] -= 1; hi[i] += 1; }
      const double deriv = (f.values[g.flatten(hi)] - f.values[g.flatten(lo)]) / span;
      sq += deriv * deriv;
    }
    out.values[c] = std::sqrt(sq);
  }
  return out;
}

void write_grid_csv(const std::string& path, const ScalarGrid& f, const std::string& value_name) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int d = f.grid.dim();
  for (int i = 0; i < d; ++i) out << "x" << (i + 1) << ',';
  out << value_name << '\n';
  out << std::setprecision(17);
  for (std::size_t c = 0; c < f.grid.size(); ++c) {
    const Vec x = f.grid.center(c);
    for (int i = 0; i < d; ++i) out << x(i) << ',';
    out << f.values[c] << '\n';
  }
}

}  // namespace oslab
