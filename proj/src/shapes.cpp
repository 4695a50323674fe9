#include "thepose/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace thepose {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kOnSurfaceTol = 1e-6;

struct ProfileHit {
  int part = 0;
  double u = 0.0;  // normalised arclength inside the part
  double distance = std::numeric_limits<double>::infinity();
};

double polyline_length(const std::vector<Eigen::Vector2d>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

ProfileHit nearest_on_profile(const std::vector<RevolvedPart>& parts,
                              const Eigen::Vector2d& q) {
  ProfileHit best;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pts = parts[pi].profile;
    const double total = polyline_length(pts);
    double along = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const Eigen::Vector2d a = pts[i - 1];
      const Eigen::Vector2d ab = pts[i] - a;
      const double len2 = ab.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double d = (q - (a + t * ab)).norm();
      const double seg = std::sqrt(len2);
      if (d < best.distance) {
        best.distance = d;
        best.part = static_cast<int>(pi);
        best.u = total > 0.0 ? std::clamp((along + t * seg) / total, 0.0, 1.0) : 0.0;
      }
      along += seg;
    }
  }
  return best;
}

// Even-odd test over the profile polygon closed along the axis.
bool inside_profile(const std::vector<RevolvedPart>& parts, const Eigen::Vector2d& q) {
  bool inside = false;
  auto edge = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    if ((a.y() > q.y()) != (b.y() > q.y())) {
      const double x = a.x() + (q.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (q.x() < x) inside = !inside;
    }
  };
  const Eigen::Vector2d* first = nullptr;
  const Eigen::Vector2d* last = nullptr;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.profile.size(); ++i) {
      const Eigen::Vector2d& p = part.profile[i];
      if (!first) first = &p;
      if (last && (*last - p).squaredNorm() > 0.0) edge(*last, p);
      last = &p;
    }
  }
  if (first && last) edge(*last, *first);
  return inside;
}

Eigen::Vector2d point_on_polyline(const std::vector<Eigen::Vector2d>& pts, double u) {
  const double target = std::clamp(u, 0.0, 1.0) * polyline_length(pts);
  double along = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = (pts[i] - pts[i - 1]).norm();
    if (along + seg >= target || i + 1 == pts.size()) {
      const double t = seg > 0.0 ? std::clamp((target - along) / seg, 0.0, 1.0) : 0.0;
      return pts[i - 1] + t * (pts[i] - pts[i - 1]);
    }
    along += seg;
  }
  return pts.back();
}

struct RevolvedLocal {
  Vector3d q;
  double r;
};

RevolvedLocal to_local(const Revolved& body, const Vector3d& p) {
  const Vector3d q = body.frame.transpose() * (p - body.origin);
  return {q, std::hypot(q.x(), q.y())};
}

// Quarter-curve sample helper for lathed profiles.
std::vector<Eigen::Vector2d> curve(int segments, auto&& fn) {
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i <= segments; ++i) pts.push_back(fn(static_cast<double>(i) / segments));
  return pts;
}

Vector3d box_local_unit(const Box& b, const Vector3d& p) {
  const Vector3d q = b.frame.transpose() * (p - b.center);
  return ((q.array() + b.half.array()) / (2.0 * b.half.array())).matrix();
}

double draw(std::mt19937_64& rng, const ParamRange& r) {
  std::uniform_real_distribution<double> d(r.lo, r.hi);
  return d(rng);
}

std::vector<CategorySpec> build_specs();

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::bottle: return "bottle";
    case Category::bowl: return "bowl";
    case Category::can: return "can";
    case Category::laptop: return "laptop";
    case Category::mug: return "mug";
    case Category::camera: return "camera";
  }
  return "unknown";
}

Category parse_category(std::string_view name) {
  for (int i = 0; i < kCategoryCount; ++i) {
    if (category_name(static_cast<Category>(i)) == name) return static_cast<Category>(i);
  }
  throw Error("config", "unknown category '" + std::string(name) + "'");
}

void CategorySpec::validate() const {
  if (!(mean_size.array() > 0.0).all()) throw Error("spec", "mean size must be positive");
  for (const auto& [name, r] : ranges) {
    if (!(r.lo <= r.hi)) throw Error("spec", "empty parameter range " + name);
  }
}

const CategorySpec& category_spec(Category c) {
  static const std::vector<CategorySpec> specs = build_specs();
  return specs.at(static_cast<std::size_t>(c));
}

double Revolved::sdf(const Vector3d& p) const {
  const auto [q, r] = to_local(*this, p);
  const Eigen::Vector2d rz(r, q.z());
  const double d = nearest_on_profile(parts, rz).distance;
  return inside_profile(parts, rz) ? -d : d;
}

double Box::sdf(const Vector3d& p) const {
  const Vector3d q = frame.transpose() * (p - center);
  const Vector3d d = q.cwiseAbs() - half;
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

double TorusArc::sdf(const Vector3d& p) const {
  const Vector3d q = p - center;
  const double ring = std::hypot(q.x(), q.z()) - major;
  const double torus = std::hypot(ring, q.y()) - minor;
  return std::max(torus, clip_x - p.x());
}

ShapeInstance ShapeInstance::generate(const CategorySpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::map<std::string, double> params;
  for (const auto& [name, range] : spec.ranges) params[name] = draw(rng, range);
  return from_params(spec, params);
}

ShapeInstance ShapeInstance::from_params(const CategorySpec& spec,
                                         const std::map<std::string, double>& params) {
  ShapeInstance s;
  s.category_ = spec.id;
  s.params_ = params;
  auto P = [&](const char* name) { return params.at(name); };
  using V2 = Eigen::Vector2d;

  switch (spec.id) {
    case Category::bottle: {
      const double R = P("body_radius"), hb = P("body_height"), hs = P("shoulder_height");
      const double rn = P("neck_radius"), hn = P("neck_height");
      const double H = hb + hs + hn;
      Revolved body;
      body.parts = {
          {0, {V2(0, 0), V2(R, 0)}},
          {1, {V2(R, 0), V2(R, hb)}},
          {2, curve(4, [&](double t) {
             return V2(rn + (R - rn) * std::cos(t * kPi / 2), hb + hs * std::sin(t * kPi / 2));
           })},
          {3, {V2(rn, hb + hs), V2(rn, H)}},
          {4, {V2(rn, H), V2(0, H)}},
      };
      s.revolved_.push_back(std::move(body));
      s.label_count_ = 5;
      break;
    }
    case Category::bowl: {
      const double R = P("rim_radius"), h = P("height"), w = P("wall");
      const double rf = R * P("foot_ratio");
      const double rfi = rf - w;
      Revolved body;
      body.parts = {
          {0, {V2(0, 0), V2(rf, 0)}},
          {1, curve(8, [&](double t) {
             return V2(rf + (R - rf) * std::sin(t * kPi / 2), h * (1 - std::cos(t * kPi / 2)));
           })},
          {2, {V2(R, h), V2(R - w, h)}},
          {3, curve(8, [&](double t) {
             const double s = 1.0 - t;
             return V2(rfi + (R - w - rfi) * std::sin(s * kPi / 2),
                       w + (h - w) * (1 - std::cos(s * kPi / 2)));
           })},
          {4, {V2(rfi, w), V2(0, w)}},
      };
      s.revolved_.push_back(std::move(body));
      s.label_count_ = 5;
      break;
    }
    case Category::can: {
      const double R = P("radius"), H = P("height");
      Revolved body;
      body.parts = {
          {0, {V2(0, 0), V2(R, 0)}},
          {1, {V2(R, 0), V2(R, H)}},
          {2, {V2(R, H), V2(0, H)}},
      };
      s.revolved_.push_back(std::move(body));
      s.label_count_ = 3;
      break;
    }
    case Category::mug: {
      const double R = P("radius"), H = P("height"), w = P("wall"), tb = P("bottom");
      const double a = P("handle_major"), b = P("handle_minor");
      Revolved body;
      body.parts = {
          {0, {V2(0, 0), V2(R, 0)}},
          {1, {V2(R, 0), V2(R, H)}},
          {2, {V2(R, H), V2(R - w, H)}},
          {3, {V2(R - w, H), V2(R - w, tb)}},
          {4, {V2(R - w, tb), V2(0, tb)}},
      };
      s.revolved_.push_back(std::move(body));
      TorusArc handle;
      handle.center = Vector3d(R, 0, H * P("handle_height"));
      handle.major = a;
      handle.minor = b;
      handle.clip_x = R - 0.5 * w;
      handle.label = 5;
      s.tori_.push_back(handle);
      s.label_count_ = 6;
      break;
    }
    case Category::laptop: {
      const double W = P("width"), D = P("depth"), tb = P("base_thickness");
      const double ts = P("screen_thickness"), L = D * P("screen_ratio");
      const double theta = P("open_angle_deg") * kPi / 180.0;
      Box base;
      base.center = Vector3d(0, 0, tb / 2);
      base.half = Vector3d(W / 2, D / 2, tb / 2);
      base.label = 0;
      const Vector3d hinge(0, D / 2, tb);
      const Vector3d along(0, -std::cos(theta), std::sin(theta));
      const Vector3d normal = Vector3d::UnitX().cross(along);
      Box screen;
      screen.frame.col(0) = Vector3d::UnitX();
      screen.frame.col(1) = along;
      screen.frame.col(2) = normal;
      screen.center = hinge + along * (L / 2) + normal * (ts / 2);
      screen.half = Vector3d(W / 2, L / 2, ts / 2);
      screen.label = 1;
      s.boxes_ = {base, screen};
      s.label_count_ = 2;
      break;
    }
    case Category::camera: {
      const double W = P("width"), D = P("depth"), H = P("height");
      const double rl = P("lens_radius"), ll = P("lens_length");
      const double hv = P("finder_height");
      Box body;
      body.center = Vector3d(0, 0, H / 2);
      body.half = Vector3d(W / 2, D / 2, H / 2);
      body.label = 0;
      Box finder;
      finder.center = Vector3d(-0.25 * W, 0, H + hv / 2 - 0.001);
      finder.half = Vector3d(0.15 * W, 0.3 * D, hv / 2 + 0.001);
      finder.label = 3;
      s.boxes_ = {body, finder};
      Revolved lens;
      lens.origin = Vector3d(W * P("lens_offset"), -D / 2, H / 2);
      lens.frame.col(0) = Vector3d::UnitX();
      lens.frame.col(1) = Vector3d::UnitZ();
      lens.frame.col(2) = -Vector3d::UnitY();
      lens.parts = {
          {1, {V2(0, -0.004), V2(rl, -0.004)}},
          {1, {V2(rl, -0.004), V2(rl, ll)}},
          {2, {V2(rl, ll), V2(0, ll)}},
      };
      s.revolved_.push_back(std::move(lens));
      s.label_count_ = 4;
      break;
    }
  }
  s.finalize();
  return s;
}

void ShapeInstance::finalize() {
  Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
  Vector3d hi = -lo;
  auto grow = [&](const Vector3d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (auto& body : revolved_) {
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin, rmax = 0.0;
    for (const auto& part : body.parts) {
      for (const auto& v : part.profile) {
        zmin = std::min(zmin, v.y());
        zmax = std::max(zmax, v.y());
        rmax = std::max(rmax, v.x());
      }
    }
    body.max_radius = rmax;
    for (int c = 0; c < 8; ++c) {
      const Vector3d local((c & 1) ? rmax : -rmax, (c & 2) ? rmax : -rmax,
                           (c & 4) ? zmax : zmin);
      grow(body.origin + body.frame * local);
    }
  }
  for (const auto& b : boxes_) {
    for (int c = 0; c < 8; ++c) {
      const Vector3d local((c & 1) ? b.half.x() : -b.half.x(), (c & 2) ? b.half.y() : -b.half.y(),
                           (c & 4) ? b.half.z() : -b.half.z());
      grow(b.center + b.frame * local);
    }
  }
  for (const auto& t : tori_) {
    const double reach = t.major + t.minor;
    grow(Vector3d(t.clip_x, -t.minor, t.center.z() - reach));
    grow(Vector3d(t.center.x() + reach, t.minor, t.center.z() + reach));
  }
  const Vector3d center = 0.5 * (lo + hi);
  for (auto& body : revolved_) body.origin -= center;
  for (auto& b : boxes_) b.center -= center;
  for (auto& t : tori_) {
    t.center -= center;
    t.clip_x -= center.x();
  }
  bbox_min_ = lo - center;
  size_ = hi - lo;
}

int ShapeInstance::component_count() const {
  return static_cast<int>(revolved_.size() + boxes_.size() + tori_.size());
}

double ShapeInstance::sdf(const Vector3d& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& r : revolved_) d = std::min(d, r.sdf(p));
  for (const auto& b : boxes_) d = std::min(d, b.sdf(p));
  for (const auto& t : tori_) d = std::min(d, t.sdf(p));
  return d;
}

double ShapeInstance::surface_distance(const Vector3d& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& r : revolved_) d = std::min(d, std::abs(r.sdf(p)));
  for (const auto& b : boxes_) d = std::min(d, std::abs(b.sdf(p)));
  for (const auto& t : tori_) d = std::min(d, std::abs(t.sdf(p)));
  return d;
}

std::optional<double> ShapeInstance::raycast(const Vector3d& origin, const Vector3d& dir,
                                             double t_min, double t_max) const {
  double t = t_min;
  for (int i = 0; i < 512; ++i) {
    if (t > t_max) return std::nullopt;
    const double d = sdf(origin + t * dir);
    if (d < 2e-8) return t;
    t += d;
  }
  return std::nullopt;
}

Vector3d ShapeInstance::surface_point(const SurfaceParam& param) const {
  int c = param.component;
  if (c < 0 || c >= component_count()) throw Error("index", "surface component out of range");
  if (c < static_cast<int>(revolved_.size())) {
    const Revolved& body = revolved_[c];
    const auto& part = body.parts.at(static_cast<std::size_t>(param.part));
    const Eigen::Vector2d rz = point_on_polyline(part.profile, param.u);
    const double phi = 2.0 * kPi * param.v;
    return body.origin + body.frame * Vector3d(rz.x() * std::cos(phi), rz.x() * std::sin(phi),
                                               rz.y());
  }
  c -= static_cast<int>(revolved_.size());
  if (c < static_cast<int>(boxes_.size())) {
    const Box& b = boxes_[c];
    const int axis = param.part / 2;
    Vector3d local;
    local[axis] = (param.part % 2 ? 1.0 : -1.0) * b.half[axis];
    local[(axis + 1) % 3] = (2.0 * param.u - 1.0) * b.half[(axis + 1) % 3];
    local[(axis + 2) % 3] = (2.0 * param.v - 1.0) * b.half[(axis + 2) % 3];
    return b.center + b.frame * local;
  }
  c -= static_cast<int>(boxes_.size());
  const TorusArc& t = tori_.at(static_cast<std::size_t>(c));
  const double psi = -kPi / 2 + kPi * param.u;
  const double beta = 2.0 * kPi * param.v;
  const double ring = t.major + t.minor * std::cos(beta);
  return t.center + Vector3d(ring * std::cos(psi), t.minor * std::sin(beta), ring * std::sin(psi));
}

SurfaceParam ShapeInstance::random_param(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> comp(0, component_count() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SurfaceParam p;
  p.component = comp(rng);
  int parts = 1;
  if (p.component < static_cast<int>(revolved_.size())) {
    parts = static_cast<int>(revolved_[p.component].parts.size());
  } else if (p.component < static_cast<int>(revolved_.size() + boxes_.size())) {
    parts = 6;
  }
  p.part = std::uniform_int_distribution<int>(0, parts - 1)(rng);
  p.u = unit(rng);
  p.v = unit(rng);
  return p;
}

const Revolved* ShapeInstance::revolved_body() const {
  switch (category_) {
    case Category::bottle:
    case Category::bowl:
    case Category::can:
    case Category::mug:
      return &revolved_.front();
    default:
      return nullptr;
  }
}

int ShapeInstance::part_label(const Vector3d& p) const {
  double best = std::numeric_limits<double>::infinity();
  int label = 0;
  for (const auto& body : revolved_) {
    const auto [q, r] = to_local(body, p);
    const ProfileHit hit = nearest_on_profile(body.parts, Eigen::Vector2d(r, q.z()));
    if (hit.distance < best) {
      best = hit.distance;
      label = body.parts[hit.part].label;
    }
  }
  for (const auto& b : boxes_) {
    const double d = std::abs(b.sdf(p));
    if (d < best) {
      best = d;
      label = b.label;
    }
  }
  for (const auto& t : tori_) {
    const double d = std::abs(t.sdf(p));
    if (d < best) {
      best = d;
      label = t.label;
    }
  }
  return label;
}

Embedding ShapeInstance::embed(const Vector3d& p) const {
  if (!(surface_distance(p) <= kOnSurfaceTol)) {
    throw Error("off-surface", "point is not on the instance surface");
  }
  const double label_scale = 1.0 / std::max(1, label_count_ - 1);
  Eigen::Vector4d e = Eigen::Vector4d::Zero();

  // Nearest component.
  enum class Kind { revolved, box, torus } kind = Kind::revolved;
  std::size_t index = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < revolved_.size(); ++i) {
    const double d = std::abs(revolved_[i].sdf(p));
    if (d < best) best = d, kind = Kind::revolved, index = i;
  }
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    const double d = std::abs(boxes_[i].sdf(p));
    if (d < best) best = d, kind = Kind::box, index = i;
  }
  for (std::size_t i = 0; i < tori_.size(); ++i) {
    const double d = std::abs(tori_[i].sdf(p));
    if (d < best) best = d, kind = Kind::torus, index = i;
  }

  if (category_ == Category::camera) {
    // No symmetry: bounding-box normalised coordinates (height, depth, width).
    const Vector3d n = ((p - bbox_min_).array() / size_.array()).matrix();
    int label = 0;
    if (kind == Kind::box) {
      label = boxes_[index].label;
    } else {
      const Revolved& lens = revolved_[index];
      const auto [q, r] = to_local(lens, p);
      label = lens.parts[nearest_on_profile(lens.parts, Eigen::Vector2d(r, q.z())).part].label;
    }
    e << n.z(), n.y(), n.x(), label * label_scale;
  } else if (category_ == Category::laptop) {
    // Box-local coordinates; lateral coordinate folded across x = 0.
    const Box& b = boxes_[index];
    const Vector3d q = b.frame.transpose() * (p - b.center);
    const Vector3d u = box_local_unit(b, p);
    e << u.y(), u.z(), std::min(1.0, std::abs(q.x()) / b.half.x()), b.label * label_scale;
  } else if (kind == Kind::torus) {
    // Mug handle: position along the arc, radius from the body axis, folded azimuth.
    const TorusArc& t = tori_[index];
    const Revolved& body = revolved_.front();
    const auto [qb, rb] = to_local(body, p);
    const Vector3d q = p - t.center;
    const double psi = std::atan2(q.z(), q.x());
    e << std::clamp((psi + kPi / 2) / kPi, 0.0, 1.0), rb / (t.center.x() - body.origin.x() +
                                                         t.major + t.minor),
        std::abs(std::atan2(qb.y(), qb.x())) / kPi, t.label * label_scale;
  } else {
    // Revolved body: arclength inside the part, radius, azimuth folded by the
    // symmetry (dropped for full revolution, mirrored about the handle plane
    // for mugs), part label.
    const Revolved& body = revolved_[index];
    const auto [q, r] = to_local(body, p);
    const ProfileHit hit = nearest_on_profile(body.parts, Eigen::Vector2d(r, q.z()));
    const double azimuth =
        category_ == Category::mug ? std::abs(std::atan2(q.y(), q.x())) / kPi : 0.0;
    e << hit.u, r / body.max_radius, azimuth, body.parts[hit.part].label * label_scale;
  }
  // 24-bit fixed point: rounding noise from the caller's pose arithmetic does
  // not reach the stored value.
  for (int i = 0; i < kEmbeddingDim; ++i) e[i] = std::ldexp(std::round(std::ldexp(e[i], 24)), -24);
  return e.cast<float>();
}

namespace {

std::vector<CategorySpec> build_specs() {
  std::vector<CategorySpec> specs;
  auto add = [&](Category id, Symmetry sym, std::map<std::string, ParamRange> ranges) {
    CategorySpec spec{id, sym, Vector3d::Ones(), std::move(ranges)};
    std::map<std::string, double> mid;
    for (const auto& [name, r] : spec.ranges) mid[name] = 0.5 * (r.lo + r.hi);
    spec.mean_size = ShapeInstance::from_params(spec, mid).size();
    specs.push_back(std::move(spec));
  };
  add(Category::bottle, Symmetry::revolution,
      {{"body_radius", {0.030, 0.042}},
       {"body_height", {0.10, 0.15}},
       {"shoulder_height", {0.02, 0.04}},
       {"neck_radius", {0.010, 0.015}},
       {"neck_height", {0.03, 0.05}}});
  add(Category::bowl, Symmetry::revolution,
      {{"rim_radius", {0.060, 0.085}},
       {"height", {0.040, 0.065}},
       {"wall", {0.004, 0.007}},
       {"foot_ratio", {0.35, 0.50}}});
  add(Category::can, Symmetry::revolution,
      {{"radius", {0.028, 0.036}}, {"height", {0.080, 0.125}}});
  add(Category::laptop, Symmetry::mirror,
      {{"width", {0.28, 0.36}},
       {"depth", {0.19, 0.25}},
       {"base_thickness", {0.014, 0.020}},
       {"screen_thickness", {0.006, 0.010}},
       {"screen_ratio", {0.90, 1.00}},
       {"open_angle_deg", {100.0, 130.0}}});
  add(Category::mug, Symmetry::mirror,
      {{"radius", {0.035, 0.046}},
       {"height", {0.080, 0.105}},
       {"wall", {0.004, 0.006}},
       {"bottom", {0.006, 0.009}},
       {"handle_major", {0.022, 0.028}},
       {"handle_minor", {0.005, 0.007}},
       {"handle_height", {0.47, 0.53}}});
  add(Category::camera, Symmetry::none,
      {{"width", {0.10, 0.14}},
       {"depth", {0.060, 0.080}},
       {"height", {0.070, 0.090}},
       {"lens_radius", {0.022, 0.028}},
       {"lens_length", {0.030, 0.060}},
       {"lens_offset", {0.10, 0.20}},
       {"finder_height", {0.012, 0.020}}});
  return specs;
}

}  // namespace

}  // namespace thepose
