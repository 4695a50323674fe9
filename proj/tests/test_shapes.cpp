#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "support.hpp"
#include "thepose/shapes.hpp"

using namespace thepose;
using thepose::testing::error_code;

namespace {

constexpr Category kAll[] = {Category::bottle, Category::bowl,   Category::can,
                             Category::laptop, Category::mug,    Category::camera};

double embedding_distance(const Embedding& a, const Embedding& b) {
  return (a - b).cast<double>().norm();
}

}  // namespace

TEST_SUITE("shapes") {

TEST_CASE("category specs") {
  for (Category c : kAll) {
    const CategorySpec& spec = category_spec(c);
    CHECK(spec.id == c);
    CHECK(error_code([&] { spec.validate(); }) == "");
    CHECK((spec.mean_size.array() > 0.0).all());
    CHECK(!spec.ranges.empty());
    CHECK(parse_category(category_name(c)) == c);
  }
  CHECK(category_spec(Category::can).symmetry == Symmetry::revolution);
  CHECK(category_spec(Category::bottle).symmetry == Symmetry::revolution);
  CHECK(category_spec(Category::bowl).symmetry == Symmetry::revolution);
  CHECK(category_spec(Category::mug).symmetry == Symmetry::mirror);
  CHECK(category_spec(Category::camera).symmetry == Symmetry::none);
  CHECK(error_code([] { parse_category("teapot"); }) == "config");

  CategorySpec broken = category_spec(Category::can);
  broken.ranges["radius"] = {0.05, 0.01};
  CHECK(error_code([&] { broken.validate(); }) == "spec");
  broken = category_spec(Category::can);
  broken.mean_size.x() = 0.0;
  CHECK(error_code([&] { broken.validate(); }) == "spec");
}

TEST_CASE("can is a closed cylinder") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ShapeInstance can = ShapeInstance::generate(category_spec(Category::can), seed);
    const double R = can.params().at("radius"), H = can.params().at("height");
    CHECK(can.size().x() == doctest::Approx(2 * R).epsilon(1e-12));
    CHECK(can.size().z() == doctest::Approx(H).epsilon(1e-12));
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 300; ++i) {
      const SurfaceParam sp = can.random_param(rng);
      const Vector3d p = can.surface_point(sp);
      const double radial = std::hypot(p.x(), p.y());
      if (sp.part == 1) {
        CHECK(std::abs(radial - R) < 1e-12);
      } else {
        CHECK(radial <= R + 1e-12);
        CHECK(std::abs(std::abs(p.z()) - H / 2) < 1e-12);
      }
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  for (Category c : kAll) {
    const ShapeInstance a = ShapeInstance::generate(category_spec(c), 42);
    const ShapeInstance b = ShapeInstance::generate(category_spec(c), 42);
    const ShapeInstance other = ShapeInstance::generate(category_spec(c), 43);
    CHECK(a.params() == b.params());
    CHECK(a.params() != other.params());
    std::mt19937_64 ra(1), rb(1);
    for (int i = 0; i < 50; ++i) {
      CHECK(a.surface_point(a.random_param(ra)) == b.surface_point(b.random_param(rb)));
    }
  }
}

TEST_CASE("surface samples lie on the surface and inside the size box") {
  for (Category c : kAll) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const ShapeInstance s = ShapeInstance::generate(category_spec(c), seed);
      std::mt19937_64 rng(seed + 100);
      double worst = 0.0;
      bool inside = true;
      for (int i = 0; i < 400; ++i) {
        const Vector3d p = s.surface_point(s.random_param(rng));
        worst = std::max(worst, s.surface_distance(p));
        inside = inside && (p.cwiseAbs().array() <= 0.5 * s.size().array() + 1e-9).all();
      }
      INFO(category_name(c), " seed ", seed);
      CHECK(worst < 1e-9);
      CHECK(inside);
    }
  }
}

TEST_CASE("mug handle breaks revolution symmetry") {
  const ShapeInstance mug = ShapeInstance::generate(category_spec(Category::mug), 3);
  const Vector3d axis_origin = mug.revolved_body()->origin;
  const double z = axis_origin.z() + mug.params().at("height") * mug.params().at("handle_height");
  // Outermost surface radius at each azimuth, found by marching inwards.
  double r_min = 1e9, r_max = 0.0;
  for (int k = 0; k < 360; ++k) {
    const double phi = 2 * std::numbers::pi * k / 360;
    const Vector3d dir(-std::cos(phi), -std::sin(phi), 0.0);
    const Vector3d start = Vector3d(axis_origin.x(), axis_origin.y(), z) - 0.5 * dir;
    const auto hit = mug.raycast(start, dir, 0.0, 1.0);
    REQUIRE(hit.has_value());
    const double r = 0.5 - *hit;
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  CHECK(r_min == doctest::Approx(mug.params().at("radius")).epsilon(1e-6));
  CHECK(r_max - r_min > mug.params().at("handle_major"));
}

TEST_CASE("symmetry-related points share embeddings") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Category c : {Category::can, Category::bottle, Category::bowl}) {
    const ShapeInstance s = ShapeInstance::generate(category_spec(c), 5);
    for (int i = 0; i < 200; ++i) {
      SurfaceParam a = s.random_param(rng);
      SurfaceParam b = a;
      b.v = unit(rng);
      CHECK(s.embed(s.surface_point(a)) == s.embed(s.surface_point(b)));
    }
  }
  const ShapeInstance mug = ShapeInstance::generate(category_spec(Category::mug), 5);
  for (int i = 0; i < 300; ++i) {
    const Vector3d p = mug.surface_point(mug.random_param(rng));
    const Vector3d mirrored(p.x(), -p.y(), p.z());
    CHECK(mug.embed(p) == mug.embed(mirrored));
  }
  const ShapeInstance laptop = ShapeInstance::generate(category_spec(Category::laptop), 5);
  for (int i = 0; i < 300; ++i) {
    const Vector3d p = laptop.surface_point(laptop.random_param(rng));
    CHECK(laptop.embed(p) == laptop.embed(Vector3d(-p.x(), p.y(), p.z())));
  }
}

TEST_CASE("bowl rims of different instances are closer than rim and base") {
  const CategorySpec& spec = category_spec(Category::bowl);
  auto with_radius = [&](double r) {
    std::map<std::string, double> p;
    for (const auto& [name, range] : spec.ranges) p[name] = 0.5 * (range.lo + range.hi);
    p["rim_radius"] = r;
    return ShapeInstance::from_params(spec, p);
  };
  const ShapeInstance small = with_radius(spec.ranges.at("rim_radius").lo);
  const ShapeInstance large = with_radius(spec.ranges.at("rim_radius").hi);
  double rim_rim = 0.0, rim_base = 0.0;
  int count = 0;
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      SurfaceParam rim{0, 2, i / 20.0, 0.3}, other_rim{0, 2, j / 20.0, 0.7};
      SurfaceParam base{0, 0, j / 20.0, 0.1};
      const Embedding a = small.embed(small.surface_point(rim));
      rim_rim += embedding_distance(a, large.embed(large.surface_point(other_rim)));
      rim_base += std::min(embedding_distance(a, small.embed(small.surface_point(base))),
                           embedding_distance(a, large.embed(large.surface_point(base))));
      ++count;
    }
  }
  CHECK(rim_rim / count < rim_base / count);
}

TEST_CASE("embedding off the surface is rejected") {
  const ShapeInstance mug = ShapeInstance::generate(category_spec(Category::mug), 1);
  CHECK(error_code([&] { mug.embed(Vector3d(1.0, 1.0, 1.0)); }) == "off-surface");
  const Vector3d p = mug.surface_point({0, 1, 0.5, 0.25});
  CHECK(error_code([&] { mug.embed(p); }) == "");
  // v = 0.25 faces +y, so this moves straight off the side wall.
  CHECK(error_code([&] { mug.embed(p + Vector3d(0, 1e-4, 0)); }) == "off-surface");
  CHECK(error_code([&] { mug.surface_point({7, 0, 0.5, 0.5}); }) == "index");
}

}  // TEST_SUITE
