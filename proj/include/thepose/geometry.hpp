#pragma once

// SE(3) helpers, pinhole back-projection, point sampling and the sinusoidal
// positional encoding. Everything is templated on the scalar type and works
// on plain Eigen dense types.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "thepose/error.hpp"

namespace thepose {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using PointCloud = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename Scalar>
using DenseMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using DepthMap = DenseMatrix<Scalar>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector3d = Vector3<double>;
using Matrix3d = Matrix3<double>;
using PointCloudd = PointCloud<double>;
using Matrixd = DenseMatrix<double>;

struct Intrinsics {
  double fx = 300.0;
  double fy = 300.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error("intrinsics", "focal lengths must be positive");
    }
    if (width <= 0 || height <= 0 || !(cx >= 0.0) || !(cx < width) ||
        !(cy >= 0.0) || !(cy < height)) {
      throw Error("intrinsics", "principal point outside the image");
    }
  }

  // Pixel coordinates (column, row) of a camera-frame point.
  template <typename Scalar>
  Eigen::Matrix<Scalar, 2, 1> project(const Vector3<Scalar>& p) const {
    return {Scalar(fx) * p.x() / p.z() + Scalar(cx),
            Scalar(fy) * p.y() / p.z() + Scalar(cy)};
  }
};

template <typename Scalar>
struct RigidTransform {
  Matrix3<Scalar> R = Matrix3<Scalar>::Identity();
  Vector3<Scalar> t = Vector3<Scalar>::Zero();

  RigidTransform inverse() const {
    return {R.transpose(), -(R.transpose() * t)};
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return R * p + t; }

  RigidTransform operator*(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }
};

// True when R is orthonormal with det +1 to the given tolerance.
template <typename Derived>
bool is_rotation(const Eigen::MatrixBase<Derived>& R, double tol = 1e-9) {
  using Scalar = typename Derived::Scalar;
  const Matrix3<Scalar> m = R;
  return (m.transpose() * m - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff() <=
             tol &&
         std::abs(m.determinant() - Scalar(1)) <= tol;
}

template <typename Scalar>
struct Pose {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();
  Vector3<Scalar> size = Vector3<Scalar>::Ones();

  RigidTransform<Scalar> transform() const { return {rotation, translation}; }

  void validate() const {
    if (!(size.array() > Scalar(0)).all()) {
      throw Error("pose", "size components must be positive");
    }
    if (!is_rotation(rotation)) {
      throw Error("pose", "rotation is not in SO(3)");
    }
  }
};

using Posed = Pose<double>;

template <typename Scalar>
Matrix3<Scalar> rotation_about(const Vector3<Scalar>& axis, Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, axis.normalized()).toRotationMatrix();
}

template <typename Scalar>
PointCloud<Scalar> apply_se3(const RigidTransform<Scalar>& T,
                             const PointCloud<Scalar>& cloud) {
  PointCloud<Scalar> out = cloud * T.R.transpose();
  out.rowwise() += T.t.transpose();
  return out;
}

template <typename Scalar>
Vector3<Scalar> centroid(const PointCloud<Scalar>& cloud) {
  return cloud.colwise().mean().transpose();
}

// Rotation distance in degrees, range [0, 180].
template <typename Derived1, typename Derived2>
double geodesic_angle(const Eigen::MatrixBase<Derived1>& R1,
                      const Eigen::MatrixBase<Derived2>& R2) {
  const double c = ((R1.transpose() * R2).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

// Two-axis orthonormalisation. a1 becomes column 3 (the object "up" axis),
// a2 is projected off it to give column 1; column 2 closes the frame.
template <typename Scalar>
Matrix3<Scalar> gram_schmidt_rotation(const Vector3<Scalar>& a1,
                                      const Vector3<Scalar>& a2) {
  const Scalar n1 = a1.norm();
  if (!(n1 > Scalar(1e-8)) || !(a1.cross(a2).norm() > Scalar(1e-8))) {
    throw Error("degenerate-axes", "rotation axes are zero or parallel");
  }
  const Vector3<Scalar> c3 = a1 / n1;
  const Vector3<Scalar> c1 = (a2 - a2.dot(c3) * c3).normalized();
  Matrix3<Scalar> R;
  R.col(0) = c1;
  R.col(1) = c3.cross(c1);
  R.col(2) = c3;
  return R;
}

template <typename Scalar>
struct BackProjection {
  PointCloud<Scalar> cloud;
  std::vector<int> pixel_indices;  // row * width + column, aligned with cloud
};

template <typename Scalar>
BackProjection<Scalar> backproject_depth(const DepthMap<Scalar>& depth,
                                         const Mask& mask, const Intrinsics& K) {
  if (depth.rows() != mask.rows() || depth.cols() != mask.cols()) {
    throw Error("shape", "depth and mask sizes differ");
  }
  const Eigen::Index count = mask.count();
  if (count == 0) {
    throw Error("empty-object", "mask has no foreground pixels");
  }
  BackProjection<Scalar> out;
  out.cloud.resize(count, 3);
  out.pixel_indices.reserve(static_cast<std::size_t>(count));
  Eigen::Index n = 0;
  for (Eigen::Index v = 0; v < depth.rows(); ++v) {
    for (Eigen::Index u = 0; u < depth.cols(); ++u) {
      if (!mask(v, u)) continue;
      const Scalar d = depth(v, u);
      if (!std::isfinite(static_cast<double>(d)) || !(d > Scalar(0))) {
        throw Error("invalid-depth", "nonpositive or non-finite depth under mask");
      }
      out.cloud(n, 0) = (Scalar(u) - Scalar(K.cx)) * d / Scalar(K.fx);
      out.cloud(n, 1) = (Scalar(v) - Scalar(K.cy)) * d / Scalar(K.fy);
      out.cloud(n, 2) = d;
      out.pixel_indices.push_back(static_cast<int>(v * depth.cols() + u));
      ++n;
    }
  }
  return out;
}

template <typename Scalar>
struct Sampled {
  PointCloud<Scalar> cloud;
  std::vector<int> indices;  // rows of the input cloud
};

// Uniform draw of n rows: without replacement when the cloud is large
// enough, with replacement otherwise.
inline std::vector<int> sample_indices(Eigen::Index count, int n,
                                       std::uint64_t seed) {
  if (n < 1) throw Error("invalid-argument", "sample count must be >= 1");
  if (count < 1) throw Error("empty-object", "cannot sample an empty cloud");
  std::mt19937_64 rng(seed);
  std::vector<int> out(static_cast<std::size_t>(n));
  if (count >= n) {
    std::vector<int> pool(static_cast<std::size_t>(count));
    for (int i = 0; i < static_cast<int>(count); ++i) pool[i] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(count) - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out[i] = pool[i];
    }
  } else {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(count) - 1);
    for (int& idx : out) idx = pick(rng);
  }
  return out;
}

template <typename Scalar>
Sampled<Scalar> sample_points(const PointCloud<Scalar>& cloud, int n,
                              std::uint64_t seed) {
  Sampled<Scalar> out;
  out.indices = sample_indices(cloud.rows(), n, seed);
  out.cloud.resize(n, 3);
  for (int i = 0; i < n; ++i) out.cloud.row(i) = cloud.row(out.indices[i]);
  return out;
}

// Per point, per axis, per band: sin then cos of base_freq * 2^band * coord.
// Column layout is axis-major, band-minor.
template <typename Scalar>
DenseMatrix<Scalar> positional_encoding(const PointCloud<Scalar>& points,
                                        int bands, Scalar base_freq) {
  if (bands < 1) throw Error("invalid-argument", "bands must be >= 1");
  DenseMatrix<Scalar> out(points.rows(), 6 * bands);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int d = 0; d < 3; ++d) {
      Scalar freq = base_freq;
      for (int b = 0; b < bands; ++b) {
        const Scalar arg = freq * points(i, d);
        out(i, d * 2 * bands + 2 * b) = std::sin(arg);
        out(i, d * 2 * bands + 2 * b + 1) = std::cos(arg);
        freq *= Scalar(2);
      }
    }
  }
  return out;
}

}  // namespace thepose
