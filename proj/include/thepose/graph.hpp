#pragma once

// Hybrid receptive field: k-nearest-neighbour graphs under the blended
// distance  alpha * |f_i - f_j| + (1 - alpha) * |p_i - p_j|.

#include <Eigen/Core>

#include <span>
#include <vector>

#include "thepose/autodiff.hpp"
#include "thepose/geometry.hpp"

#include <json.hpp>

namespace thepose {

struct HybridGraph {
  int k = 0;
  double alpha = 0.0;
  std::vector<int> neighbors;     // N x k, nearest first
  std::vector<double> distances;  // hybrid distance of each neighbour

  int size() const { return k == 0 ? 0 : static_cast<int>(neighbors.size()) / k; }
  std::span<const int> of(int i) const {
    return {neighbors.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
  }
  // Aggregation groups for the autodiff engine; with include_self each group
  // starts with the point itself.
  ad::Groups groups(bool include_self = false) const;
};

// Plain sums of squares, no reassociation: the reference every graph is
// ranked with.
double hybrid_distance(std::span<const double> fi, std::span<const double> fj,
                       const Vector3d& pi, const Vector3d& pj, double alpha);

// Exact k nearest neighbours (self excluded, ties to the lower index).
// Candidates are prefiltered with Gram-matrix distances and a rounding-error
// margin, then re-ranked with hybrid_distance.
HybridGraph build_receptive_field(const Matrixd& features, const PointCloudd& cloud, int k,
                                  double alpha);

// N x N Euclidean distances, evaluated the same way as hybrid_distance.
Matrixd point_distances(const PointCloudd& cloud);

// Several alphas over the same features, sharing the pairwise work.
// `point_dist` may carry point_distances(cloud) computed earlier.
std::vector<HybridGraph> build_receptive_fields(const Matrixd& features,
                                                const PointCloudd& cloud, int k,
                                                std::span<const double> alphas,
                                                const Matrixd* point_dist = nullptr);

nlohmann::json graph_to_json(const HybridGraph& graph);

}  // namespace thepose
