#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sketchlab/tensor.hpp"

namespace sketchlab::testing {

template <typename T>
Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(c, h, w);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data()[i]) * b.data()[i];
  return s;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite difference of `f` with respect to the scalar `*slot`.
inline double central_difference(double* slot, const std::function<double()>& f, double h) {
  const double saved = *slot;
  *slot = saved + h;
  const double up = f();
  *slot = saved - h;
  const double down = f();
  *slot = saved;
  return (up - down) / (2 * h);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sketchlab_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix (row-major,
/// n x n). Returns eigenvalues descending with matching unit eigenvectors.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> jacobi_eigen(
    std::vector<double> a, int n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;
  double total = 0;
  for (double x : a) total += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off <= 1e-26 * total) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x * n + x] > a[y * n + y]; });
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  for (int i : order) {
    values.push_back(a[i * n + i]);
    std::vector<double> col(n);
    for (int k = 0; k < n; ++k) col[k] = v[k * n + i];
    vectors.push_back(std::move(col));
  }
  return {values, vectors};
}

/// Oracle PCA coordinates (n x k) from the eigendecomposition of the
/// centered Gram matrix: coordinate = eigenvector * sqrt(eigenvalue).
template <typename Vec>
std::vector<std::vector<double>> oracle_pca_points(const std::vector<Vec>& data, int k) {
  const int n = static_cast<int>(data.size());
  const std::size_t c = data.front().size();
  std::vector<double> mean(c, 0.0);
  for (const auto& row : data)
    for (std::size_t j = 0; j < c; ++j) mean[j] += row[j];
  for (auto& m : mean) m /= n;
  std::vector<double> gram(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double s = 0;
      for (std::size_t d = 0; d < c; ++d) s += (data[i][d] - mean[d]) * (data[j][d] - mean[d]);
      gram[i * n + j] = gram[j * n + i] = s;
    }
  }
  auto [values, vectors] = jacobi_eigen(gram, n);
  std::vector<std::vector<double>> pts(n, std::vector<double>(k, 0.0));
  for (int a = 0; a < k; ++a) {
    const double sigma = std::sqrt(std::max(values[a], 0.0));
    for (int i = 0; i < n; ++i) pts[i][a] = vectors[a][i] * sigma;
  }
  return pts;
}

/// Max coordinate difference between two n x k point sets, each axis
/// compared under the better of the two signs.
inline double max_diff_up_to_sign(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b) {
  double worst = 0;
  const std::size_t k = a.front().size();
  for (std::size_t axis = 0; axis < k; ++axis) {
    double same = 0, flipped = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      same = std::max(same, std::abs(a[i][axis] - b[i][axis]));
      flipped = std::max(flipped, std::abs(a[i][axis] + b[i][axis]));
    }
    worst = std::max(worst, std::min(same, flipped));
  }
  return worst;
}

}  // namespace sketchlab::testing
