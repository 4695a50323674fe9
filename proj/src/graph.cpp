#include "thepose/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace thepose {

ad::Groups HybridGraph::groups(bool include_self) const {
  ad::Groups g;
  const int n = size();
  g.members.reserve(static_cast<std::size_t>(n) * (k + (include_self ? 1 : 0)));
  for (int i = 0; i < n; ++i) {
    if (include_self) g.members.push_back(i);
    const auto nb = of(i);
    g.members.insert(g.members.end(), nb.begin(), nb.end());
    g.offsets.push_back(static_cast<int>(g.members.size()));
  }
  return g;
}

double hybrid_distance(std::span<const double> fi, std::span<const double> fj,
                       const Vector3d& pi, const Vector3d& pj, double alpha) {
  if (fi.size() != fj.size()) throw Error("shape", "feature widths differ");
  double f2 = 0.0;
  for (std::size_t d = 0; d < fi.size(); ++d) {
    const double diff = fi[d] - fj[d];
    f2 += diff * diff;
  }
  double p2 = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double diff = pi[d] - pj[d];
    p2 += diff * diff;
  }
  return alpha * std::sqrt(f2) + (1.0 - alpha) * std::sqrt(p2);
}

HybridGraph build_receptive_field(const Matrixd& features, const PointCloudd& cloud, int k,
                                  double alpha) {
  const double a[] = {alpha};
  return std::move(build_receptive_fields(features, cloud, k, a).front());
}

Matrixd point_distances(const PointCloudd& cloud) {
  const Eigen::Index n = cloud.rows();
  const Eigen::ArrayXd xs = cloud.col(0), ys = cloud.col(1), zs = cloud.col(2);
  Matrixd pd(n, n);
  Eigen::ArrayXd p2(n), diff(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Same operation order as hybrid_distance.
    diff = cloud(i, 0) - xs;
    p2 = diff * diff;
    diff = cloud(i, 1) - ys;
    p2 += diff * diff;
    diff = cloud(i, 2) - zs;
    p2 += diff * diff;
    pd.row(i) = p2.sqrt().transpose();
  }
  return pd;
}

std::vector<HybridGraph> build_receptive_fields(const Matrixd& features,
                                                const PointCloudd& cloud, int k,
                                                std::span<const double> alphas,
                                                const Matrixd* point_dist) {
  const int n = static_cast<int>(cloud.rows());
  if (features.rows() != n) throw Error("shape", "features and cloud disagree on N");
  if (k < 1 || k >= n) {
    throw Error("invalid-argument", "need 1 <= k < N (k=" + std::to_string(k) +
                                        ", N=" + std::to_string(n) + ")");
  }
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("invalid-argument", "alpha outside [0, 1]");
  }
  if (point_dist && (point_dist->rows() != n || point_dist->cols() != n)) {
    throw Error("shape", "point distance matrix does not match the cloud");
  }
  const Eigen::Index D = features.cols();
  bool need_features = false;
  for (double alpha : alphas) need_features = need_features || (alpha > 0.0 && D > 0);

  Matrixd own_pd;
  if (!point_dist) {
    own_pd = point_distances(cloud);
    point_dist = &own_pd;
  }
  const Matrixd& pd = *point_dist;

  // Approximate feature distances from the Gram matrix. Each entry of
  // |f_i|^2 + |f_j|^2 - 2 f_i.f_j is off by at most gamma (|f_i|^2 + |f_j|^2),
  // so the distance is off by at most sqrt of that.
  Matrixd gram;
  Eigen::RowVectorXd sq;
  double max_sq = 0.0;
  if (need_features) {
    gram.resize(n, n);
    gram.noalias() = features * features.transpose();
    sq = features.rowwise().squaredNorm().transpose();
    max_sq = sq.maxCoeff();
  }
  const double unit = std::numeric_limits<double>::epsilon();
  const double gamma = 8.0 * static_cast<double>(D + 4) * unit;

  std::vector<HybridGraph> graphs;
  Eigen::RowVectorXd approx(n), fd(n);
  std::vector<double> best(static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> cand;
  for (double alpha : alphas) {
    HybridGraph g;
    g.k = k;
    g.alpha = alpha;
    g.neighbors.resize(static_cast<std::size_t>(n) * k);
    g.distances.resize(static_cast<std::size_t>(n) * k);
    const bool use_f = alpha > 0.0 && D > 0;
    for (int i = 0; i < n; ++i) {
      if (use_f) {
        fd = (sq.array() + sq[i] - 2.0 * gram.row(i).array()).cwiseMax(0.0).sqrt();
        approx = (1.0 - alpha) * pd.row(i) + alpha * fd;
      } else {
        approx = (1.0 - alpha) * pd.row(i);
      }
      const double row_max = approx.maxCoeff();
      approx[i] = std::numeric_limits<double>::infinity();
      // k smallest approximate distances, ascending.
      std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
      for (int j = 0; j < n; ++j) {
        const double v = approx[j];
        if (!(v < best[static_cast<std::size_t>(k - 1)])) continue;
        std::size_t pos = static_cast<std::size_t>(k - 1);
        while (pos > 0 && best[pos - 1] > v) {
          best[pos] = best[pos - 1];
          --pos;
        }
        best[pos] = v;
      }
      const double margin =
          (use_f ? 2.0 * alpha * std::sqrt(gamma * (sq[i] + max_sq)) : 0.0) +
          64.0 * unit * (row_max + 1.0);
      const double threshold = best[static_cast<std::size_t>(k - 1)] + margin;

      cand.clear();
      const std::span<const double> fi(features.data() + static_cast<Eigen::Index>(i) * D,
                                       static_cast<std::size_t>(D));
      const Vector3d pi = cloud.row(i).transpose();
      for (int j = 0; j < n; ++j) {
        if (j == i || approx[j] > threshold) continue;
        const std::span<const double> fj(features.data() + static_cast<Eigen::Index>(j) * D,
                                         static_cast<std::size_t>(D));
        cand.emplace_back(hybrid_distance(fi, fj, pi, cloud.row(j).transpose(), alpha), j);
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      for (int m = 0; m < k; ++m) {
        g.neighbors[static_cast<std::size_t>(i) * k + m] = cand[static_cast<std::size_t>(m)].second;
        g.distances[static_cast<std::size_t>(i) * k + m] = cand[static_cast<std::size_t>(m)].first;
      }
    }
    graphs.push_back(std::move(g));
  }
  return graphs;
}

nlohmann::json graph_to_json(const HybridGraph& graph) {
  nlohmann::json j;
  j["alpha"] = graph.alpha;
  j["k"] = graph.k;
  j["n"] = graph.size();
  nlohmann::json nbrs = nlohmann::json::array();
  nlohmann::json dists = nlohmann::json::array();
  for (int i = 0; i < graph.size(); ++i) {
    const auto nb = graph.of(i);
    nbrs.push_back(std::vector<int>(nb.begin(), nb.end()));
    dists.push_back(std::vector<double>(
        graph.distances.begin() + static_cast<std::ptrdiff_t>(i) * graph.k,
        graph.distances.begin() + static_cast<std::ptrdiff_t>(i + 1) * graph.k));
  }
  j["neighbors"] = std::move(nbrs);
  j["distances"] = std::move(dists);
  return j;
}

}  // namespace thepose
