#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "support.hpp"
#include "thepose/geometry.hpp"

using namespace thepose;
using thepose::testing::error_code;

TEST_SUITE("geometry") {

TEST_CASE("principal point maps to the optical axis") {
  Intrinsics K;
  DepthMap<double> depth = DepthMap<double>::Zero(K.height, K.width);
  Mask mask = Mask::Constant(K.height, K.width, false);
  depth(64, 64) = 1.0;
  mask(64, 64) = true;
  const auto bp = backproject_depth(depth, mask, K);
  REQUIRE(bp.cloud.rows() == 1);
  CHECK(bp.cloud(0, 0) == 0.0);
  CHECK(bp.cloud(0, 1) == 0.0);
  CHECK(bp.cloud(0, 2) == 1.0);
  CHECK(bp.pixel_indices[0] == 64 * K.width + 64);
}

TEST_CASE("offset pixel back-projects by (u - cx) d / fx") {
  Intrinsics K{500, 500, 128, 128, 256, 256};
  DepthMap<double> depth = DepthMap<double>::Zero(256, 256);
  Mask mask = Mask::Constant(256, 256, false);
  depth(128, 228) = 1.0;
  mask(128, 228) = true;
  const auto bp = backproject_depth(depth, mask, K);
  CHECK(bp.cloud(0, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(bp.cloud(0, 1) == 0.0);
  CHECK(bp.cloud(0, 2) == 1.0);
}

TEST_CASE("back-projection round-trips pixel centres") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(0.2, 3.0);
  Intrinsics K{310.5, 295.25, 7.3, 8.1, 16, 16};
  DepthMap<double> depth(16, 16);
  Mask mask(16, 16);
  std::bernoulli_distribution on(0.6);
  for (int v = 0; v < 16; ++v) {
    for (int u = 0; u < 16; ++u) {
      depth(v, u) = d(rng);
      mask(v, u) = on(rng);
    }
  }
  const auto bp = backproject_depth(depth, mask, K);
  REQUIRE(bp.cloud.rows() == mask.count());
  for (Eigen::Index i = 0; i < bp.cloud.rows(); ++i) {
    const double x = bp.cloud(i, 0), y = bp.cloud(i, 1), z = bp.cloud(i, 2);
    const int pix = bp.pixel_indices[static_cast<std::size_t>(i)];
    CHECK(std::abs(K.fx * x / z + K.cx - pix % 16) < 1e-9);
    CHECK(std::abs(K.fy * y / z + K.cy - pix / 16) < 1e-9);
    CHECK(z == depth(pix / 16, pix % 16));
  }
}

TEST_CASE("back-projection errors") {
  Intrinsics K;
  DepthMap<double> depth = DepthMap<double>::Ones(K.height, K.width);
  Mask mask = Mask::Constant(K.height, K.width, false);
  CHECK(error_code([&] { backproject_depth(depth, mask, K); }) == "empty-object");
  mask(3, 4) = true;
  depth(3, 4) = 0.0;
  CHECK(error_code([&] { backproject_depth(depth, mask, K); }) == "invalid-depth");
  depth(3, 4) = -1.0;
  CHECK(error_code([&] { backproject_depth(depth, mask, K); }) == "invalid-depth");
}

TEST_CASE("intrinsics validation") {
  CHECK(error_code([] { Intrinsics{0, 1, 1, 1, 4, 4}.validate(); }) != "");
  CHECK(error_code([] { Intrinsics{1, 1, 4, 1, 4, 4}.validate(); }) != "");
  CHECK(error_code([] { Intrinsics{}.validate(); }) == "");
}

TEST_CASE("sampling n = N draws a permutation") {
  std::mt19937_64 rng(5);
  const PointCloudd cloud = thepose::testing::random_cloud(rng, 50);
  const auto s = sample_points(cloud, 50, 9);
  std::vector<int> idx = s.indices;
  std::sort(idx.begin(), idx.end());
  for (int i = 0; i < 50; ++i) CHECK(idx[static_cast<std::size_t>(i)] == i);
  for (int i = 0; i < 50; ++i) CHECK(s.cloud.row(i) == cloud.row(s.indices[static_cast<std::size_t>(i)]));
}

TEST_CASE("sampling is deterministic and without replacement") {
  std::mt19937_64 rng(6);
  const PointCloudd cloud = thepose::testing::random_cloud(rng, 5000);
  const auto a = sample_points(cloud, 1024, 7);
  const auto b = sample_points(cloud, 1024, 7);
  CHECK(a.indices == b.indices);
  CHECK(a.cloud == b.cloud);
  const std::set<int> distinct(a.indices.begin(), a.indices.end());
  CHECK(distinct.size() == 1024);
  CHECK(*distinct.rbegin() < 5000);
  CHECK(*distinct.begin() >= 0);
}

TEST_CASE("sampling more points than available draws with replacement") {
  std::mt19937_64 rng(8);
  const PointCloudd cloud = thepose::testing::random_cloud(rng, 10);
  const auto s = sample_points(cloud, 64, 1);
  CHECK(s.indices.size() == 64);
  for (int i : s.indices) CHECK((i >= 0 && i < 10));
  CHECK(error_code([&] { sample_points(cloud, 0, 1); }) == "invalid-argument");
}

TEST_CASE("rigid transforms") {
  std::mt19937_64 rng(21);
  const PointCloudd cloud = thepose::testing::random_cloud(rng, 40);
  RigidTransform<double> I{Matrix3d::Identity(), Vector3d::Zero()};
  CHECK(apply_se3(I, cloud) == cloud);

  RigidTransform<double> T{thepose::testing::random_rotation(rng), Vector3d(0.3, -1.2, 2.5)};
  const PointCloudd moved = apply_se3(T, cloud);
  const PointCloudd back = apply_se3(T.inverse(), moved);
  CHECK((back - cloud).cwiseAbs().maxCoeff() < 1e-9);

  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    for (Eigen::Index j = 0; j < cloud.rows(); ++j) {
      const double before = (cloud.row(i) - cloud.row(j)).norm();
      const double after = (moved.row(i) - moved.row(j)).norm();
      CHECK(std::abs(before - after) < 1e-9);
    }
  }
}

TEST_CASE("geodesic angle") {
  const Matrix3d I = Matrix3d::Identity();
  CHECK(geodesic_angle(I, I) == 0.0);
  const Matrix3d Rz30 = rotation_about<double>(Vector3d::UnitZ(), std::numbers::pi / 6);
  CHECK(geodesic_angle(I, Rz30) == doctest::Approx(30.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> theta(0.01, 179.99);
  for (int i = 0; i < 200; ++i) {
    const Matrix3d R1 = thepose::testing::random_rotation(rng);
    const Matrix3d R2 = thepose::testing::random_rotation(rng);
    CHECK(std::abs(geodesic_angle(R1, R2) - geodesic_angle(R2, R1)) < 1e-9);
    const double t = theta(rng);
    const Matrix3d Rt = R1 * rotation_about<double>(Vector3d::UnitZ(), t * std::numbers::pi / 180);
    CHECK(std::abs(geodesic_angle(R1, Rt) - t) < 1e-6);
  }
}

TEST_CASE("gram-schmidt rotation") {
  CHECK(gram_schmidt_rotation<double>(Vector3d(0, 0, 1), Vector3d(1, 0, 0)) == Matrix3d::Identity());
  CHECK((gram_schmidt_rotation<double>(Vector3d(0, 0, 2), Vector3d(3, 0, 0)) - Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff() == 0.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  int valid = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vector3d a1(n(rng), n(rng), n(rng)), a2(n(rng), n(rng), n(rng));
    if (a1.norm() <= 1e-8 || a1.cross(a2).norm() <= 1e-8) continue;
    const Matrix3d R = gram_schmidt_rotation(a1, a2);
    const double ortho = (R.transpose() * R - Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho < 1e-9 && std::abs(R.determinant() - 1.0) < 1e-9 &&
        (R.col(2) - a1.normalized()).norm() < 1e-12) {
      ++valid;
    }
  }
  CHECK(valid == 10000);

  CHECK(error_code([] { gram_schmidt_rotation<double>(Vector3d::Zero(), Vector3d::UnitX()); }) ==
        "degenerate-axes");
  CHECK(error_code([] {
          gram_schmidt_rotation<double>(Vector3d(0, 0, 1), Vector3d(0, 0, -4));
        }) == "degenerate-axes");
}

TEST_CASE("positional encoding") {
  PointCloudd origin = PointCloudd::Zero(1, 3);
  const Matrixd e0 = positional_encoding(origin, 3, std::numbers::pi);
  REQUIRE(e0.cols() == 18);
  for (int c = 0; c < 18; ++c) CHECK(e0(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(positional_encoding(origin, 1, 1.0).cols() == 6);

  // Column layout against a direct evaluation.
  std::mt19937_64 rng(2);
  const PointCloudd pts = thepose::testing::random_cloud(rng, 7, 0.3);
  const int bands = 4;
  const Matrixd e = positional_encoding(pts, bands, 1.5);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (int d = 0; d < 3; ++d) {
      for (int b = 0; b < bands; ++b) {
        const double arg = 1.5 * std::pow(2.0, b) * pts(i, d);
        CHECK(e(i, d * 2 * bands + 2 * b) == doctest::Approx(std::sin(arg)).epsilon(1e-14));
        CHECK(e(i, d * 2 * bands + 2 * b + 1) == doctest::Approx(std::cos(arg)).epsilon(1e-14));
      }
    }
  }

  PointCloudd shifted = pts;
  shifted.rowwise() += Eigen::RowVector3d(0.05, -0.02, 0.1);
  CHECK((positional_encoding(shifted, bands, 1.5) - e).cwiseAbs().maxCoeff() > 1e-3);
  CHECK(error_code([&] { positional_encoding(pts, 0, 1.0); }) == "invalid-argument");
}

}  // TEST_SUITE
