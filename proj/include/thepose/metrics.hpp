#pragma once

// Oriented-box IoU, symmetry-aware pose errors and threshold accuracies.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thepose/geometry.hpp"
#include "thepose/shapes.hpp"

#include <json.hpp>

namespace thepose {

struct PoseError {
  double rotation_err = 0.0;     // degrees
  double translation_err = 0.0;  // centimeters
  double iou = 0.0;
};

// Boxes are centred at the pose translation with full extents `size` along
// the rotation columns. Equal rotations use the exact overlap; otherwise n_mc
// uniform samples are drawn in each box.
double box_iou_3d(const Posed& a, const Posed& b, int n_mc = 100000, std::uint64_t seed = 0);

// Rotation error under the category symmetry. For revolution bodies this is
// the angle between the up axes.
double symmetric_rotation_error(const Matrix3d& pred, const Matrix3d& gt, Symmetry symmetry);

// Member of gt's symmetry orbit closest to pred.
Matrix3d align_symmetric(const Matrix3d& pred, const Matrix3d& gt, Symmetry symmetry);

PoseError pose_errors(const Posed& pred, const Posed& gt, const CategorySpec& spec,
                      int n_mc = 100000, std::uint64_t seed = 0);

inline constexpr std::array<std::string_view, 11> kMetricColumns = {
    "IoU25", "IoU50", "IoU75", "5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm",
    "5deg",  "10deg", "2cm",   "5cm"};

struct MetricsRow {
  std::array<double, kMetricColumns.size()> cells{};  // percentages
  double mean_rotation_err = 0.0;
  double mean_translation_err = 0.0;
  double mean_iou = 0.0;
  int count = 0;

  double at(std::string_view column) const;
};

struct MetricsReport {
  std::vector<std::pair<Category, MetricsRow>> categories;
  MetricsRow mean;  // unweighted over categories

  nlohmann::json to_json() const;
  std::string to_table() const;
};

MetricsReport aggregate(const std::vector<std::pair<PoseError, Category>>& errors);

}  // namespace thepose
