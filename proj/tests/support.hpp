#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "thepose/error.hpp"
#include "thepose/geometry.hpp"

namespace thepose::testing {

// Error code thrown by f, or "" when it returns normally.
template <typename F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

inline Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline Matrixd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                             double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrixd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline PointCloudd random_cloud(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 3, scale);
}

// Exhaustive k nearest neighbours of every point under
// alpha |f_i - f_j| + (1 - alpha) |p_i - p_j|, evaluated with Eigen norms and a
// full stable sort. Returns one neighbour set per point.
inline std::vector<std::set<int>> brute_force_knn(const Matrixd& features, const PointCloudd& cloud,
                                                  int k, double alpha) {
  const int n = static_cast<int>(cloud.rows());
  std::vector<std::set<int>> out(static_cast<std::size_t>(n));
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      d[static_cast<std::size_t>(j)] = alpha * (features.row(i) - features.row(j)).norm() +
                                       (1 - alpha) * (cloud.row(i) - cloud.row(j)).norm();
    }
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return d[static_cast<std::size_t>(a)] < d[static_cast<std::size_t>(b)]; });
    out[static_cast<std::size_t>(i)] = std::set<int>(order.begin(), order.begin() + k);
  }
  return out;
}

template <typename Graph>
std::vector<std::set<int>> neighbor_sets(const Graph& g) {
  std::vector<std::set<int>> out;
  for (int i = 0; i < g.size(); ++i) out.emplace_back(g.of(i).begin(), g.of(i).end());
  return out;
}

}  // namespace thepose::testing
