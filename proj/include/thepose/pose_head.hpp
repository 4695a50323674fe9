#pragma once

// Pose and size estimator on top of the fusion stream, its loss, and the
// training loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thepose/autodiff.hpp"
#include "thepose/hgf.hpp"
#include "thepose/optim.hpp"
#include "thepose/scene.hpp"
#include "thepose/shapes.hpp"

namespace thepose {

struct LossWeights {
  double rotation = 1.0;
  double translation = 1.0;
  double size = 1.0;
};

struct ModelConfig {
  HgfConfig hgf;
  int head_hidden = 256;
  int embedding_dim = kEmbeddingDim;

  void validate() const;
  int pose_feature_width() const { return hgf.topo_global + hgf.fused_width(); }
};

void init_model(ParamStore& params, const ModelConfig& config, std::uint64_t seed);

struct HeadOutput {
  ad::Var a1;     // 1 x 3, up axis (rotation column 3)
  ad::Var a2;     // 1 x 3, rotation column 1
  ad::Var t_res;  // 1 x 3, meters from the cloud centroid
  ad::Var s_res;  // 1 x 3, meters from the category mean size
};

// Plain values of a HeadOutput.
struct HeadValues {
  Vector3d a1 = Vector3d::Zero();
  Vector3d a2 = Vector3d::Zero();
  Vector3d t_res = Vector3d::Zero();
  Vector3d s_res = Vector3d::Zero();

  static HeadValues of(const HeadOutput& out);
  // The residuals that reproduce gt exactly.
  static HeadValues encode(const Posed& gt, const PointCloudd& cloud, const CategorySpec& spec);
};

// MLP_R on the max-pooled pose feature, MLP_S on the max-pooled pose feature
// with centred point coordinates appended.
HeadOutput head_forward(ParamBinding& w, const ad::Var& pose_feature, const PointCloudd& cloud);

Posed assemble_pose(const HeadValues& out, const PointCloudd& cloud, const CategorySpec& spec);

struct LossTerms {
  ad::Var total;
  ad::Var rotation;
  ad::Var translation;
  ad::Var size;
};

// Mean absolute error between the normalised axes and the gt rotation
// columns (the second axis only without revolution symmetry), plus L1 on
// the translation and size residuals.
LossTerms pose_loss(const HeadOutput& out, const PointCloudd& cloud, const Posed& gt,
                    const CategorySpec& spec, const LossWeights& weights);

struct Forward {
  ad::Var topo_global;
  FusionOutput fusion;
  ad::Var pose_feature;
  HeadOutput head;
};

// Whole network on one sample. Graphs are built into `graphs` when empty.
Forward model_forward(ParamBinding& w, const SceneSample& sample, const ModelConfig& config,
                      StreamGraphs& graphs);

Posed predict(const ParamStore& params, const SceneSample& sample, const ModelConfig& config);
std::vector<Posed> predict_all(const ParamStore& params, const std::vector<SceneSample>& samples,
                               const ModelConfig& config);

struct TrainConfig {
  long steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  double tail_fraction = 0.28;
  LossWeights weights;
  std::uint64_t seed = 0;
};

struct LossRow {
  long step;
  double lr;
  double loss;
  double rotation;
  double translation;
  double size;
};

struct TrainResult {
  ParamStore params;
  std::vector<LossRow> log;
};

// Throws DivergedError on a non-finite batch loss.
TrainResult train(const std::vector<SceneSample>& dataset, const ModelConfig& config,
                  const TrainConfig& train_config,
                  const std::function<void(const LossRow&)>& on_step = {});

void write_loss_csv(const std::vector<LossRow>& log, const std::string& path);

}  // namespace thepose
