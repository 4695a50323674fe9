#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thepose/geometry.hpp"
#include "thepose/shapes.hpp"

namespace thepose {

// One rendered object. Image-domain arrays are stored for foreground pixels
// only; dense views are available through the accessors. All real arrays
// hold f32-representable values so the dataset file round-trips bit-exactly.
struct SceneSample {
  Category category = Category::mug;
  Intrinsics K;
  std::vector<int> mask_pixels;  // ascending row * width + column
  Eigen::VectorXd depth;         // per mask pixel, meters
  Matrixd prior;                 // mask pixels x E oracle embeddings
  PointCloudd cloud;             // sampled points, camera frame
  std::vector<int> pixel_indices;  // source pixel of each point
  Matrixd point_prior;           // points x E, prior at the source pixel
  Posed gt;
  std::uint64_t seed = 0;

  int height() const { return K.height; }
  int width() const { return K.width; }
  int embedding_dim() const { return static_cast<int>(prior.cols()); }
  Mask mask() const;
  DepthMap<double> depth_map() const;
  Matrixd prior_map() const;  // (H * W) x E, zero off the mask
  // Row of `pixel` in the mask-pixel arrays, or -1.
  int mask_row(int pixel) const;

  bool operator==(const SceneSample& other) const;
};

// Camera placement for generated scenes.
struct SceneConfig {
  double elevation_min_deg = 15.0;
  double elevation_max_deg = 60.0;
  double azimuth_range_deg = 360.0;  // centred on the handle-facing-camera-right view
  double roll_max_deg = 10.0;
  double diagonal_px_min = 70.0;  // projected bounding-box diagonal
  double diagonal_px_max = 100.0;
  double jitter_px = 6.0;
};

inline constexpr int kMinVisiblePixels = 50;

// Upright object on a virtual table, seen from an elevated camera.
Posed sample_scene_pose(const ShapeInstance& instance, const Intrinsics& K,
                        const SceneConfig& config, std::uint64_t seed);

// Sphere-traced z-buffer render of the posed instance, then back-projection
// and point sampling. pose.size must equal the instance extents.
SceneSample render_sample(const ShapeInstance& instance, const Posed& pose,
                          const Intrinsics& K, int n_points, std::uint64_t seed);

// Removes floor(fraction * |mask|) uniformly chosen mask pixels, then
// re-samples the same number of points from the surviving pixels.
SceneSample apply_occlusion(const SceneSample& sample, double fraction, std::uint64_t seed);
// Same, with an explicit set of removed pixels (linear indices).
SceneSample apply_occlusion(const SceneSample& sample, const std::vector<int>& removed,
                            std::uint64_t seed);

// Swap in an externally produced prior (H * W x E', e.g. from a trained
// embedding network); point embeddings follow.
SceneSample replace_prior(const SceneSample& sample, const Matrixd& prior_map);

// "THEPOSE-DATA" file; see README for the byte layout.
void dataset_write(const std::vector<SceneSample>& samples, const std::string& path);
std::vector<SceneSample> dataset_read(const std::string& path);

}  // namespace thepose
