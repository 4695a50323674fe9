#include "thepose/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "thepose/binary_io.hpp"

namespace thepose {

namespace {

constexpr char kDataMagic[] = "THEPOSE-DATA";
constexpr std::uint32_t kDataVersion = 1;

double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

double deg(double d) { return d * std::numbers::pi / 180.0; }

// Back-projects the given mask rows and samples n points from them.
void sample_cloud(SceneSample& s, int n_points, std::uint64_t seed) {
  const Eigen::Index m = static_cast<Eigen::Index>(s.mask_pixels.size());
  PointCloudd full(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int pix = s.mask_pixels[static_cast<std::size_t>(i)];
    const double u = pix % s.width();
    const double v = pix / s.width();
    const double d = s.depth[i];
    full(i, 0) = to_f32((u - s.K.cx) * d / s.K.fx);
    full(i, 1) = to_f32((v - s.K.cy) * d / s.K.fy);
    full(i, 2) = d;
  }
  const Sampled<double> picked = sample_points(full, n_points, seed);
  s.cloud = picked.cloud;
  s.pixel_indices.resize(picked.indices.size());
  s.point_prior.resize(n_points, s.prior.cols());
  for (int i = 0; i < n_points; ++i) {
    const int row = picked.indices[static_cast<std::size_t>(i)];
    s.pixel_indices[static_cast<std::size_t>(i)] = s.mask_pixels[static_cast<std::size_t>(row)];
    s.point_prior.row(i) = s.prior.row(row);
  }
}

}  // namespace

Mask SceneSample::mask() const {
  Mask m = Mask::Constant(height(), width(), false);
  for (int p : mask_pixels) m(p / width(), p % width()) = true;
  return m;
}

DepthMap<double> SceneSample::depth_map() const {
  DepthMap<double> d = DepthMap<double>::Zero(height(), width());
  for (std::size_t i = 0; i < mask_pixels.size(); ++i) {
    d(mask_pixels[i] / width(), mask_pixels[i] % width()) = depth[static_cast<Eigen::Index>(i)];
  }
  return d;
}

Matrixd SceneSample::prior_map() const {
  Matrixd map = Matrixd::Zero(static_cast<Eigen::Index>(height()) * width(), prior.cols());
  for (std::size_t i = 0; i < mask_pixels.size(); ++i) {
    map.row(mask_pixels[i]) = prior.row(static_cast<Eigen::Index>(i));
  }
  return map;
}

int SceneSample::mask_row(int pixel) const {
  auto it = std::lower_bound(mask_pixels.begin(), mask_pixels.end(), pixel);
  if (it == mask_pixels.end() || *it != pixel) return -1;
  return static_cast<int>(it - mask_pixels.begin());
}

bool SceneSample::operator==(const SceneSample& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return category == o.category && K.fx == o.K.fx && K.fy == o.K.fy && K.cx == o.K.cx &&
         K.cy == o.K.cy && K.width == o.K.width && K.height == o.K.height &&
         mask_pixels == o.mask_pixels && same(depth, o.depth) && same(prior, o.prior) &&
         same(cloud, o.cloud) && pixel_indices == o.pixel_indices &&
         same(point_prior, o.point_prior) && gt.rotation == o.gt.rotation &&
         gt.translation == o.gt.translation && gt.size == o.gt.size && seed == o.seed;
}

Posed sample_scene_pose(const ShapeInstance& instance, const Intrinsics& K,
                        const SceneConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double elevation = deg(uniform(config.elevation_min_deg, config.elevation_max_deg));
  const double azimuth =
      deg(uniform(-0.5 * config.azimuth_range_deg, 0.5 * config.azimuth_range_deg));
  const double roll = deg(uniform(-config.roll_max_deg, config.roll_max_deg));
  const double diag_px = uniform(config.diagonal_px_min, config.diagonal_px_max);
  const double du = uniform(-config.jitter_px, config.jitter_px);
  const double dv = uniform(-config.jitter_px, config.jitter_px);

  // Object z-up maps to image-up, object y points away from the camera.
  Matrix3d base;
  base << 1, 0, 0,
          0, 0, -1,
          0, 1, 0;
  Posed pose;
  pose.rotation = rotation_about<double>(Vector3d::UnitZ(), roll) *
                  rotation_about<double>(Vector3d::UnitX(), elevation) * base *
                  rotation_about<double>(Vector3d::UnitZ(), azimuth);
  const double z = K.fx * instance.size().norm() / diag_px;
  pose.translation = Vector3d(du * z / K.fx, dv * z / K.fy, z);
  pose.size = instance.size();
  return pose;
}

SceneSample render_sample(const ShapeInstance& instance, const Posed& pose,
                          const Intrinsics& K, int n_points, std::uint64_t seed) {
  K.validate();
  pose.validate();
  if (n_points < 1) throw Error("invalid-argument", "n_points must be >= 1");
  if ((pose.size - instance.size()).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error("pose", "pose size must equal the instance extents");
  }
  SceneSample s;
  s.category = instance.category();
  s.K = K;
  s.gt = pose;
  s.seed = seed;

  // Pixel window covering the projected bounding sphere.
  const double radius = 0.5 * instance.size().norm();
  const Vector3d& c = pose.translation;
  if (c.z() - radius <= 1e-3) throw Error("too-small", "object intersects the camera plane");
  const double reach_u = K.fx * radius / (c.z() - radius);
  const double reach_v = K.fy * radius / (c.z() - radius);
  const Eigen::Vector2d center = K.project(c);
  const int u0 = std::max(0, static_cast<int>(std::floor(center.x() - reach_u)));
  const int u1 = std::min(K.width - 1, static_cast<int>(std::ceil(center.x() + reach_u)));
  const int v0 = std::max(0, static_cast<int>(std::floor(center.y() - reach_v)));
  const int v1 = std::min(K.height - 1, static_cast<int>(std::ceil(center.y() + reach_v)));

  const Matrix3d Rt = pose.rotation.transpose();
  const Vector3d origin = -(Rt * pose.translation);
  const double dist = origin.norm();
  std::vector<double> depth;
  std::vector<Embedding> emb;
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const Vector3d ray =
          Vector3d((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0).normalized();
      const Vector3d dir = Rt * ray;
      const auto hit = instance.raycast(origin, dir, std::max(0.0, dist - radius - 1e-3),
                                        dist + radius + 1e-3);
      if (!hit) continue;
      s.mask_pixels.push_back(v * K.width + u);
      depth.push_back(to_f32(*hit * ray.z()));
      emb.push_back(instance.embed(origin + *hit * dir));
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(s.mask_pixels.size());
  if (m < kMinVisiblePixels) {
    throw Error("too-small", std::to_string(m) + " visible pixels");
  }
  s.depth = Eigen::Map<const Eigen::VectorXd>(depth.data(), m);
  s.prior.resize(m, kEmbeddingDim);
  for (Eigen::Index i = 0; i < m; ++i) {
    s.prior.row(i) = emb[static_cast<std::size_t>(i)].cast<double>().transpose();
  }
  sample_cloud(s, n_points, seed);
  return s;
}

SceneSample apply_occlusion(const SceneSample& sample, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0) || !(fraction < 1.0)) {
    throw Error("invalid-argument", "occlusion fraction must lie in [0, 1)");
  }
  const auto m = static_cast<Eigen::Index>(sample.mask_pixels.size());
  const int remove = static_cast<int>(std::floor(fraction * static_cast<double>(m)));
  std::vector<int> removed;
  if (remove > 0) {
    for (int row : sample_indices(m, remove, seed ^ 0x9e3779b97f4a7c15ULL)) {
      removed.push_back(sample.mask_pixels[static_cast<std::size_t>(row)]);
    }
  }
  return apply_occlusion(sample, removed, seed);
}

SceneSample apply_occlusion(const SceneSample& sample, const std::vector<int>& removed,
                            std::uint64_t seed) {
  std::vector<int> gone = removed;
  std::sort(gone.begin(), gone.end());
  SceneSample out = sample;
  out.mask_pixels.clear();
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < sample.mask_pixels.size(); ++i) {
    if (!std::binary_search(gone.begin(), gone.end(), sample.mask_pixels[i])) {
      out.mask_pixels.push_back(sample.mask_pixels[i]);
      keep.push_back(static_cast<Eigen::Index>(i));
    }
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  if (m < kMinVisiblePixels) {
    throw Error("too-small", std::to_string(m) + " pixels survive occlusion");
  }
  out.depth.resize(m);
  out.prior.resize(m, sample.prior.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    out.depth[i] = sample.depth[keep[static_cast<std::size_t>(i)]];
    out.prior.row(i) = sample.prior.row(keep[static_cast<std::size_t>(i)]);
  }
  out.seed = seed;
  sample_cloud(out, static_cast<int>(sample.cloud.rows()), seed);
  return out;
}

SceneSample replace_prior(const SceneSample& sample, const Matrixd& prior_map) {
  if (prior_map.rows() != static_cast<Eigen::Index>(sample.height()) * sample.width()) {
    throw Error("shape", "prior map must have H * W rows");
  }
  SceneSample out = sample;
  out.prior.resize(static_cast<Eigen::Index>(sample.mask_pixels.size()), prior_map.cols());
  for (std::size_t i = 0; i < sample.mask_pixels.size(); ++i) {
    out.prior.row(static_cast<Eigen::Index>(i)) =
        prior_map.row(sample.mask_pixels[i]).unaryExpr(&to_f32);
  }
  out.point_prior.resize(sample.cloud.rows(), prior_map.cols());
  for (Eigen::Index i = 0; i < sample.cloud.rows(); ++i) {
    out.point_prior.row(i) = out.prior.row(out.mask_row(sample.pixel_indices[i]));
  }
  return out;
}

void dataset_write(const std::vector<SceneSample>& samples, const std::string& path) {
  io::Writer out(path);
  out.bytes(kDataMagic, sizeof(kDataMagic) - 1);
  out.put<std::uint32_t>(kDataVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  std::vector<float> buf;
  auto put_f32 = [&](const auto& m) {
    buf.resize(static_cast<std::size_t>(m.size()));
    // Row-major traversal regardless of storage order.
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
    }
    out.put_array(buf.data(), buf.size());
  };
  for (const SceneSample& s : samples) {
    out.put<std::uint8_t>(static_cast<std::uint8_t>(s.category));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(s.height()));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(s.width()));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(s.embedding_dim()));
    out.put<double>(s.K.fx);
    out.put<double>(s.K.fy);
    out.put<double>(s.K.cx);
    out.put<double>(s.K.cy);
    std::vector<std::uint8_t> bits((static_cast<std::size_t>(s.height()) * s.width() + 7) / 8, 0);
    for (int p : s.mask_pixels) bits[static_cast<std::size_t>(p) / 8] |= std::uint8_t(1u << (p % 8));
    out.put_array(bits.data(), bits.size());
    put_f32(s.depth);
    put_f32(s.prior);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(s.cloud.rows()));
    put_f32(s.cloud);
    std::vector<std::uint32_t> pix(s.pixel_indices.begin(), s.pixel_indices.end());
    out.put_array(pix.data(), pix.size());
    put_f32(s.point_prior);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out.put<double>(s.gt.rotation(r, c));
    }
    for (int i = 0; i < 3; ++i) out.put<double>(s.gt.translation[i]);
    for (int i = 0; i < 3; ++i) out.put<double>(s.gt.size[i]);
    out.put<std::uint64_t>(s.seed);
  }
  out.close();
}

std::vector<SceneSample> dataset_read(const std::string& path) {
  io::Reader in(path);
  in.expect_magic(std::string(kDataMagic, sizeof(kDataMagic) - 1));
  const auto version = in.get<std::uint32_t>();
  if (version != kDataVersion) {
    throw Error("version", "dataset version " + std::to_string(version) + ", expected " +
                               std::to_string(kDataVersion));
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<SceneSample> samples;
  samples.reserve(count);
  std::vector<float> buf;
  auto get_f32 = [&](auto& m, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<std::size_t>(rows * cols) * sizeof(float) > in.remaining()) {
      throw Error("truncated", path + " ends inside an array");
    }
    buf.resize(static_cast<std::size_t>(rows * cols));
    in.get_array(buf.data(), buf.size());
    m.resize(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = buf[k++];
    }
  };
  for (std::uint32_t n = 0; n < count; ++n) {
    SceneSample s;
    const auto cat = in.get<std::uint8_t>();
    if (cat >= kCategoryCount) throw Error("format", "unknown category id");
    s.category = static_cast<Category>(cat);
    s.K.height = in.get<std::uint16_t>();
    s.K.width = in.get<std::uint16_t>();
    const int E = in.get<std::uint16_t>();
    s.K.fx = in.get<double>();
    s.K.fy = in.get<double>();
    s.K.cx = in.get<double>();
    s.K.cy = in.get<double>();
    s.K.validate();
    std::vector<std::uint8_t> bits((static_cast<std::size_t>(s.height()) * s.width() + 7) / 8);
    in.get_array(bits.data(), bits.size());
    for (int p = 0; p < s.height() * s.width(); ++p) {
      if (bits[static_cast<std::size_t>(p) / 8] & (1u << (p % 8))) s.mask_pixels.push_back(p);
    }
    const auto m = static_cast<Eigen::Index>(s.mask_pixels.size());
    get_f32(s.depth, m, 1);
    get_f32(s.prior, m, E);
    const auto npts = in.get<std::uint32_t>();
    get_f32(s.cloud, npts, 3);
    std::vector<std::uint32_t> pix(npts);
    in.get_array(pix.data(), pix.size());
    s.pixel_indices.assign(pix.begin(), pix.end());
    get_f32(s.point_prior, npts, E);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) s.gt.rotation(r, c) = in.get<double>();
    }
    for (int i = 0; i < 3; ++i) s.gt.translation[i] = in.get<double>();
    for (int i = 0; i < 3; ++i) s.gt.size[i] = in.get<double>();
    s.seed = in.get<std::uint64_t>();
    samples.push_back(std::move(s));
  }
  if (!in.at_end()) throw Error("format", path + " has trailing bytes");
  return samples;
}

}  // namespace thepose
