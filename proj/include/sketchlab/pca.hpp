#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "sketchlab/errors.hpp"

namespace sketchlab {

struct Projection2D {
  Eigen::MatrixXd points;               // n x k
  Eigen::MatrixXd component_axes;       // k x C, orthonormal rows
  std::vector<double> explained_variance;  // descending, sample variance
  Eigen::VectorXd mean;                 // C

  std::vector<std::array<double, 2>> xy() const {
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      out[i] = {points(i, 0), points.cols() > 1 ? points(i, 1) : 0.0};
    }
    return out;
  }
};

/// Flips `axis` so its largest-magnitude component is positive (the first
/// one on ties).
inline void canonical_sign(Eigen::Ref<Eigen::VectorXd> axis) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < axis.size(); ++i) {
    if (std::abs(axis[i]) > std::abs(axis[best])) best = i;
  }
  if (axis[best] < 0) axis = -axis;
}

/// Mean-centered projection onto the top-k principal axes.
template <typename Vec>
Projection2D pca_project(const std::vector<Vec>& vectors, int k = 2) {
  if (vectors.size() < 2) throw ValidationError("pca_project: need at least 2 vectors");
  const auto n = static_cast<Eigen::Index>(vectors.size());
  const auto c = static_cast<Eigen::Index>(vectors.front().size());
  if (k < 1 || c < k) throw ShapeError("pca_project: dimension smaller than k");

  Eigen::MatrixXd x(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != c) {
      throw ShapeError("pca_project: mixed vector dimensions");
    }
    for (Eigen::Index j = 0; j < c; ++j) x(i, j) = static_cast<double>(vectors[i][j]);
  }
  Projection2D out;
  out.mean = x.colwise().mean().transpose();
  x.rowwise() -= out.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::Index avail = svd.matrixV().cols();
  out.component_axes = Eigen::MatrixXd::Zero(k, c);
  for (int a = 0; a < k; ++a) {
    if (a < avail) {
      Eigen::VectorXd axis = svd.matrixV().col(a);
      canonical_sign(axis);
      out.component_axes.row(a) = axis.transpose();
      const double s = svd.singularValues()[a];
      out.explained_variance.push_back(s * s / static_cast<double>(n - 1));
    } else {
      out.explained_variance.push_back(0.0);
    }
  }
  out.points = x * out.component_axes.transpose();
  return out;
}

}  // namespace sketchlab
