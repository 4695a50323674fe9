#include "thepose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace thepose {

namespace {

bool inside(const Posed& box, const Vector3d& p) {
  const Vector3d local = box.rotation.transpose() * (p - box.translation);
  return (local.array().abs() <= 0.5 * box.size.array()).all();
}

// Fraction of n uniform samples of `from` that land in `to`.
double covered_fraction(const Posed& from, const Posed& to, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const Vector3d local(unit(rng) * from.size.x(), unit(rng) * from.size.y(),
                         unit(rng) * from.size.z());
    if (inside(to, from.rotation * local + from.translation)) ++hits;
  }
  return static_cast<double>(hits) / n;
}

}  // namespace

double box_iou_3d(const Posed& a, const Posed& b, int n_mc, std::uint64_t seed) {
  const double va = a.size.prod();
  const double vb = b.size.prod();
  if (a.rotation == b.rotation) {
    const Vector3d d = a.rotation.transpose() * (b.translation - a.translation);
    double inter = 1.0;
    for (int i = 0; i < 3; ++i) {
      const double lo = std::max(-0.5 * a.size[i], d[i] - 0.5 * b.size[i]);
      const double hi = std::min(0.5 * a.size[i], d[i] + 0.5 * b.size[i]);
      inter *= std::max(0.0, hi - lo);
    }
    return inter / (va + vb - inter);
  }
  if (n_mc < 10000) throw Error("invalid-argument", "n_mc must be at least 1e4");
  const double reach = 0.5 * (a.size.norm() + b.size.norm());
  if ((a.translation - b.translation).norm() > reach) return 0.0;
  std::mt19937_64 rng(seed);
  const double fa = covered_fraction(a, b, n_mc, rng);
  const double fb = covered_fraction(b, a, n_mc, rng);
  const double inter = 0.5 * (fa * va + fb * vb);
  return inter / (va + vb - inter);
}

Matrix3d align_symmetric(const Matrix3d& pred, const Matrix3d& gt, Symmetry symmetry) {
  if (symmetry != Symmetry::revolution) return gt;
  // Maximise trace(pred^T gt Rz(phi)).
  const Matrix3d B = gt.transpose() * pred;
  const double phi = std::atan2(B(1, 0) - B(0, 1), B(0, 0) + B(1, 1));
  return gt * rotation_about<double>(Vector3d::UnitZ(), phi);
}

double symmetric_rotation_error(const Matrix3d& pred, const Matrix3d& gt, Symmetry symmetry) {
  if (symmetry == Symmetry::revolution) {
    const double c = std::clamp(pred.col(2).dot(gt.col(2)), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
  }
  return geodesic_angle(pred, gt);
}

PoseError pose_errors(const Posed& pred, const Posed& gt, const CategorySpec& spec, int n_mc,
                      std::uint64_t seed) {
  PoseError e;
  e.rotation_err = symmetric_rotation_error(pred.rotation, gt.rotation, spec.symmetry);
  e.translation_err = (pred.translation - gt.translation).norm() * 100.0;
  Posed aligned = gt;
  aligned.rotation = align_symmetric(pred.rotation, gt.rotation, spec.symmetry);
  e.iou = box_iou_3d(pred, aligned, n_mc, seed);
  return e;
}

double MetricsRow::at(std::string_view column) const {
  for (std::size_t i = 0; i < kMetricColumns.size(); ++i) {
    if (kMetricColumns[i] == column) return cells[i];
  }
  throw Error("invalid-argument", "unknown metric column " + std::string(column));
}

MetricsReport aggregate(const std::vector<std::pair<PoseError, Category>>& errors) {
  if (errors.empty()) throw Error("invalid-argument", "no errors to aggregate");
  std::map<Category, std::vector<const PoseError*>> by_category;
  for (const auto& [e, c] : errors) by_category[c].push_back(&e);

  MetricsReport report;
  for (const auto& [category, list] : by_category) {
    MetricsRow row;
    row.count = static_cast<int>(list.size());
    std::array<int, kMetricColumns.size()> hits{};
    for (const PoseError* e : list) {
      const double r = e->rotation_err;
      const double t = e->translation_err;
      const bool pass[] = {e->iou > 0.25, e->iou > 0.50, e->iou > 0.75,
                           r < 5 && t < 2,  r < 5 && t < 5, r < 10 && t < 2,
                           r < 10 && t < 5, r < 5,          r < 10,
                           t < 2,           t < 5};
      for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += pass[i] ? 1 : 0;
      row.mean_rotation_err += r;
      row.mean_translation_err += t;
      row.mean_iou += e->iou;
    }
    for (std::size_t i = 0; i < hits.size(); ++i) row.cells[i] = 100.0 * hits[i] / row.count;
    row.mean_rotation_err /= row.count;
    row.mean_translation_err /= row.count;
    row.mean_iou /= row.count;
    report.categories.emplace_back(category, row);
  }

  const double m = static_cast<double>(report.categories.size());
  for (const auto& [_, row] : report.categories) {
    for (std::size_t i = 0; i < row.cells.size(); ++i) report.mean.cells[i] += row.cells[i] / m;
    report.mean.mean_rotation_err += row.mean_rotation_err / m;
    report.mean.mean_translation_err += row.mean_translation_err / m;
    report.mean.mean_iou += row.mean_iou / m;
    report.mean.count += row.count;
  }
  return report;
}

namespace {

nlohmann::json row_json(const MetricsRow& row) {
  nlohmann::json j;
  for (std::size_t i = 0; i < kMetricColumns.size(); ++i) {
    j[std::string(kMetricColumns[i])] = row.cells[i];
  }
  j["mean_rotation_err_deg"] = row.mean_rotation_err;
  j["mean_translation_err_cm"] = row.mean_translation_err;
  j["mean_iou"] = row.mean_iou;
  j["count"] = row.count;
  return j;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [c, row] : categories) cats[std::string(category_name(c))] = row_json(row);
  j["categories"] = std::move(cats);
  j["mean"] = row_json(mean);
  return j;
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  char buf[32];
  out << "category ";
  for (auto col : kMetricColumns) {
    std::snprintf(buf, sizeof buf, " %9s", std::string(col).c_str());
    out << buf;
  }
  out << "     n\n";
  auto line = [&](std::string_view name, const MetricsRow& row) {
    std::snprintf(buf, sizeof buf, "%-8s ", std::string(name).c_str());
    out << buf;
    for (double v : row.cells) {
      std::snprintf(buf, sizeof buf, " %9.1f", v);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, " %5d\n", row.count);
    out << buf;
  };
  for (const auto& [c, row] : categories) line(category_name(c), row);
  line("mean", mean);
  return out.str();
}

}  // namespace thepose
