#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>

namespace oslab {

// Spatial dimension d and noise dimension m never exceed this.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

// slices[l] holds the partial derivative along x_l of a d x m matrix field.
struct Tensor3 {
  std::array<Mat, kMaxDim> slices;
};

using ScalarFunction = std::function<double(const Vec&)>;
using VectorFunction = std::function<Vec(const Vec&)>;
using MatrixFunction = std::function<Mat(const Vec&)>;
using TensorFunction = std::function<Tensor3(const Vec&)>;

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace oslab
