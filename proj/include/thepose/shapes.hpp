#pragma once

// Procedural category shapes and the analytic topological prior.
//
// Every instance lives in a canonical frame: z is the up axis, the object is
// centred on its bounding box, and mirror-symmetric categories are symmetric
// about a coordinate plane (y = 0 for mugs, x = 0 for laptops). Surfaces are
// unions of three primitives with exact (or conservative) signed distances:
// profiles revolved about an axis, oriented boxes, and a clipped torus.

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "thepose/geometry.hpp"

namespace thepose {

enum class Category : std::uint8_t { bottle = 0, bowl, can, laptop, mug, camera };
enum class Symmetry { revolution, mirror, none };

inline constexpr int kCategoryCount = 6;
inline constexpr int kEmbeddingDim = 4;

// Stored at f32 precision, matching the dataset format.
using Embedding = Eigen::Matrix<float, kEmbeddingDim, 1>;

std::string_view category_name(Category c);
Category parse_category(std::string_view name);

struct ParamRange {
  double lo;
  double hi;
};

struct CategorySpec {
  Category id;
  Symmetry symmetry;
  Vector3d mean_size;  // bounding-box extents of the mid-range instance
  std::map<std::string, ParamRange> ranges;

  void validate() const;
};

const CategorySpec& category_spec(Category c);

// Identifies a surface location independent of instance proportions:
// component index, part (profile part, box face, or 0 for the torus) and two
// normalised coordinates in [0, 1].
struct SurfaceParam {
  int component = 0;
  int part = 0;
  double u = 0.0;
  double v = 0.0;
};

struct RevolvedPart {
  int label;
  std::vector<Eigen::Vector2d> profile;  // (radius, height) polyline
};

// Closed profile revolved about the local z axis. The polygon is closed along
// the axis, and that closing edge is not part of the surface.
struct Revolved {
  Vector3d origin = Vector3d::Zero();
  Matrix3d frame = Matrix3d::Identity();  // columns: local axes in canonical coords
  std::vector<RevolvedPart> parts;
  double max_radius = 0.0;

  double sdf(const Vector3d& p) const;
};

struct Box {
  Vector3d center = Vector3d::Zero();
  Matrix3d frame = Matrix3d::Identity();
  Vector3d half = Vector3d::Ones();
  int label = 0;

  double sdf(const Vector3d& p) const;
};

// Torus in the x-z plane around `center`, restricted to x >= clip_x.
struct TorusArc {
  Vector3d center = Vector3d::Zero();
  double major = 0.0;
  double minor = 0.0;
  double clip_x = 0.0;
  int label = 0;

  double sdf(const Vector3d& p) const;
};

class ShapeInstance {
 public:
  // Deterministic for (spec, seed).
  static ShapeInstance generate(const CategorySpec& spec, std::uint64_t seed);
  static ShapeInstance from_params(const CategorySpec& spec,
                                   const std::map<std::string, double>& params);

  Category category() const { return category_; }
  const Vector3d& size() const { return size_; }
  const std::map<std::string, double>& params() const { return params_; }

  double sdf(const Vector3d& p) const;
  // Smallest |sdf| over components: zero on every component surface,
  // including faces hidden inside another component.
  double surface_distance(const Vector3d& p) const;

  // First hit of the ray origin + t * dir (dir unit length) for t in
  // [t_min, t_max], canonical frame.
  std::optional<double> raycast(const Vector3d& origin, const Vector3d& dir, double t_min,
                                double t_max) const;

  Vector3d surface_point(const SurfaceParam& param) const;
  SurfaceParam random_param(std::mt19937_64& rng) const;
  int component_count() const;

  // Oracle prior. Throws "off-surface" if p is farther than 1e-6 from the surface.
  Embedding embed(const Vector3d& p) const;
  // Part label of the component surface nearest to p.
  int part_label(const Vector3d& p) const;

  // Body of revolution without attachments (mug body, or the whole shape for
  // revolution categories); nullptr otherwise.
  const Revolved* revolved_body() const;

 private:
  Category category_ = Category::can;
  Vector3d size_ = Vector3d::Ones();
  Vector3d bbox_min_ = Vector3d::Zero();
  std::map<std::string, double> params_;
  std::vector<Revolved> revolved_;
  std::vector<Box> boxes_;
  std::vector<TorusArc> tori_;
  int label_count_ = 1;

  void finalize();
};

inline ShapeInstance generate_instance(const CategorySpec& spec, std::uint64_t seed) {
  return ShapeInstance::generate(spec, seed);
}

inline Embedding oracle_prior(const Vector3d& surface_point, const ShapeInstance& instance) {
  return instance.embed(surface_point);
}

}  // namespace thepose
