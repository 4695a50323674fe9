#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "thepose/metrics.hpp"

using namespace thepose;
using thepose::testing::error_code;
using thepose::testing::random_rotation;

namespace {

// Same box as `p`, described with its x and y axes flipped.
Posed flipped(const Posed& p) {
  Posed q = p;
  q.rotation = p.rotation * Vector3d(-1, -1, 1).asDiagonal();
  return q;
}

Posed random_box(std::mt19937_64& rng, const Matrix3d& R) {
  std::uniform_real_distribution<double> size(0.05, 0.3), offset(-0.1, 0.1);
  Posed p;
  p.rotation = R;
  p.translation = Vector3d(offset(rng), offset(rng), 1.0 + offset(rng));
  p.size = Vector3d(size(rng), size(rng), size(rng));
  return p;
}

PoseError err(double r, double t, double iou) { return {r, t, iou}; }

void check_monotone(const MetricsRow& row) {
  for (double v : row.cells) CHECK((v >= 0.0 && v <= 100.0));
  CHECK(row.at("5deg2cm") <= row.at("5deg5cm"));
  CHECK(row.at("5deg5cm") <= row.at("10deg5cm"));
  CHECK(row.at("5deg2cm") <= row.at("10deg2cm"));
  CHECK(row.at("10deg2cm") <= row.at("10deg5cm"));
  CHECK(row.at("IoU75") <= row.at("IoU50"));
  CHECK(row.at("IoU50") <= row.at("IoU25"));
  CHECK(row.at("5deg5cm") <= row.at("5deg"));
  CHECK(row.at("10deg5cm") <= row.at("5cm"));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("box IoU examples") {
  Posed a;
  a.size = Vector3d::Ones();
  CHECK(box_iou_3d(a, a) == 1.0);
  Posed b = a;
  b.translation.x() = 0.5;
  CHECK(box_iou_3d(a, b) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(box_iou_3d(b, a) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  b.translation.x() = 4.0;
  CHECK(box_iou_3d(a, b) == 0.0);
  b.rotation = rotation_about<double>(Vector3d(1, 2, 3).normalized(), 0.7);
  CHECK(box_iou_3d(a, b) == 0.0);
  CHECK(error_code([&] { box_iou_3d(a, flipped(a), 100); }) == "invalid-argument");
  CHECK(box_iou_3d(a, flipped(a), 10000, 1) == 1.0);
}

TEST_CASE("Monte-Carlo IoU agrees with the exact overlap") {
  std::mt19937_64 rng(1);
  double worst = 0.0, worst_sym = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Matrix3d R = random_rotation(rng);
    const Posed a = random_box(rng, R), b = random_box(rng, R);
    const double exact = box_iou_3d(a, b);
    CHECK(std::abs(exact - box_iou_3d(b, a)) < 1e-12);
    const double mc = box_iou_3d(a, flipped(b), 100000, static_cast<std::uint64_t>(i));
    worst = std::max(worst, std::abs(mc - exact));
    worst_sym = std::max(worst_sym, std::abs(mc - box_iou_3d(flipped(b), a, 100000, 99)));
    CHECK(box_iou_3d(a, flipped(b), 100000, 5) == box_iou_3d(a, flipped(b), 100000, 5));
  }
  CHECK(worst < 1e-2);
  CHECK(worst_sym < 2e-2);
}

TEST_CASE("revolution symmetry in pose errors") {
  const CategorySpec& bottle = category_spec(Category::bottle);
  std::mt19937_64 rng(2);
  Posed gt;
  gt.rotation = random_rotation(rng);
  gt.translation = Vector3d(0.05, 0.02, 0.9);
  gt.size = bottle.mean_size;
  Posed pred = gt;
  pred.rotation = gt.rotation * rotation_about<double>(Vector3d::UnitZ(), std::numbers::pi / 2);
  const PoseError e = pose_errors(pred, gt, bottle, 100000, 3);
  CHECK(e.rotation_err < 1e-6);
  CHECK(e.iou > 0.999);
  CHECK(e.translation_err == 0.0);
  // The same spin on an asymmetric category is a full 90 degree error.
  CHECK(pose_errors(pred, gt, category_spec(Category::camera)).rotation_err ==
        doctest::Approx(90.0).epsilon(1e-9));

  pred = gt;
  pred.translation.y() += 0.019;
  CHECK(pose_errors(pred, gt, bottle).translation_err == doctest::Approx(1.9).epsilon(1e-9));
}

TEST_CASE("closed-form symmetric error matches a dense sweep") {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Matrix3d gt = random_rotation(rng);
    const Matrix3d pred = random_rotation(rng);
    double sweep = 180.0;
    for (int s = 0; s < 3600; ++s) {
      const double phi = 2 * std::numbers::pi * s / 3600;
      sweep = std::min(sweep, geodesic_angle(pred, Matrix3d(gt * rotation_about<double>(Vector3d::UnitZ(), phi))));
    }
    const double closed = symmetric_rotation_error(pred, gt, Symmetry::revolution);
    worst = std::max(worst, std::abs(closed - sweep));
    const Matrix3d aligned = align_symmetric(pred, gt, Symmetry::revolution);
    CHECK(geodesic_angle(pred, aligned) == doctest::Approx(closed).epsilon(1e-6));
  }
  CHECK(worst < 0.1);
  const Matrix3d a = random_rotation(rng), b = random_rotation(rng);
  CHECK(symmetric_rotation_error(a, b, Symmetry::mirror) == geodesic_angle(a, b));
  CHECK(align_symmetric(a, b, Symmetry::none) == b);
}

TEST_CASE("pose errors are unchanged by a common rigid motion") {
  std::mt19937_64 rng(5);
  for (Category c : {Category::mug, Category::can, Category::laptop}) {
    const CategorySpec& spec = category_spec(c);
    for (int i = 0; i < 10; ++i) {
      Posed gt = random_box(rng, random_rotation(rng));
      Posed pred = random_box(rng, random_rotation(rng));
      pred.translation = gt.translation + Vector3d(0.01, -0.02, 0.005);
      const PoseError e = pose_errors(pred, gt, spec, 20000, 7);
      const Matrix3d R = random_rotation(rng);
      const Vector3d t(0.3, -0.4, 2.0);
      Posed gt2 = gt, pred2 = pred;
      gt2.rotation = R * gt.rotation;
      gt2.translation = R * gt.translation + t;
      pred2.rotation = R * pred.rotation;
      pred2.translation = R * pred.translation + t;
      const PoseError e2 = pose_errors(pred2, gt2, spec, 20000, 7);
      CHECK(std::abs(e.rotation_err - e2.rotation_err) < 1e-9);
      CHECK(std::abs(e.translation_err - e2.translation_err) < 1e-9);
      CHECK(std::abs(e.iou - e2.iou) < 1e-9);
    }
  }
}

TEST_CASE("aggregation") {
  const MetricsReport one = aggregate({{err(4, 1.9, 0.8), Category::mug}});
  for (double v : one.mean.cells) CHECK(v == 100.0);
  CHECK(one.mean.count == 1);

  const MetricsReport edge = aggregate({{err(5.0, 2.0, 0.5), Category::mug}});
  CHECK(edge.mean.at("5deg") == 0.0);
  CHECK(edge.mean.at("10deg") == 100.0);
  CHECK(edge.mean.at("2cm") == 0.0);
  CHECK(edge.mean.at("IoU50") == 0.0);
  CHECK(edge.mean.at("IoU25") == 100.0);

  // Independent tally of a mixed list.
  const std::vector<std::pair<PoseError, Category>> list = {
      {err(1, 1, 0.9), Category::mug},   {err(6, 1, 0.6), Category::mug},
      {err(3, 4, 0.4), Category::mug},   {err(12, 0.5, 0.2), Category::mug},
      {err(9, 6, 0.8), Category::bowl},  {err(2, 1.5, 0.77), Category::bowl},
      {err(0.5, 3, 0.3), Category::bowl}, {err(40, 30, 0.0), Category::bowl},
      {err(4.99, 1.99, 0.76), Category::bowl}, {err(7, 2.5, 0.55), Category::bowl}};
  const MetricsReport r = aggregate(list);
  REQUIRE(r.categories.size() == 2);
  // mug: 4 instances
  const MetricsRow* mug = nullptr;
  const MetricsRow* bowl = nullptr;
  for (const auto& [c, row] : r.categories) (c == Category::mug ? mug : bowl) = &row;
  CHECK(mug->count == 4);
  CHECK(mug->at("5deg2cm") == 25.0);
  CHECK(mug->at("5deg5cm") == 50.0);
  CHECK(mug->at("10deg2cm") == 50.0);
  CHECK(mug->at("10deg5cm") == 75.0);
  CHECK(mug->at("IoU50") == 50.0);
  CHECK(mug->at("IoU75") == 25.0);
  CHECK(mug->at("IoU25") == 75.0);
  CHECK(bowl->count == 6);
  CHECK(bowl->at("5deg2cm") == doctest::Approx(200.0 / 6));
  CHECK(bowl->at("5deg5cm") == doctest::Approx(300.0 / 6));
  CHECK(bowl->at("10deg5cm") == doctest::Approx(400.0 / 6));
  CHECK(bowl->at("IoU75") == doctest::Approx(300.0 / 6));
  CHECK(bowl->at("5cm") == doctest::Approx(400.0 / 6));
  CHECK(r.mean.at("5deg5cm") == doctest::Approx(0.5 * (50.0 + 300.0 / 6)));
  CHECK(r.mean.count == 10);
  CHECK(mug->mean_rotation_err == doctest::Approx(22.0 / 4));

  CHECK(error_code([] { aggregate({}); }) == "invalid-argument");
  CHECK(error_code([&] { r.mean.at("7deg"); }) == "invalid-argument");

  const nlohmann::json j = r.to_json();
  CHECK(j.contains("mean"));
  CHECK(j.at("categories").contains("bowl"));
  CHECK(j.at("mean").at("5deg5cm").get<double>() == r.mean.at("5deg5cm"));
  const std::string table = r.to_table();
  for (auto col : kMetricColumns) CHECK(table.find(std::string(col)) != std::string::npos);
}

TEST_CASE("random reports are monotone") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> rot(0, 30), trans(0, 10), iou(0, 1);
  std::uniform_int_distribution<int> cat(0, 5), count(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<PoseError, Category>> list;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) list.push_back({err(rot(rng), trans(rng), iou(rng)), static_cast<Category>(cat(rng))});
    const MetricsReport r = aggregate(list);
    check_monotone(r.mean);
    for (const auto& [_, row] : r.categories) check_monotone(row);
  }
}

}  // TEST_SUITE
