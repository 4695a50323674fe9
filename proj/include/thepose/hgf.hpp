#pragma once

// Topological prior refinement, global context, and the hybrid graph fusion
// stream. Layers read their weights from a ParamBinding under fixed names, so
// the same code serves training, inference and gradient checks.

#include <cstdint>
#include <string>
#include <vector>

#include "thepose/autodiff.hpp"
#include "thepose/geometry.hpp"
#include "thepose/graph.hpp"
#include "thepose/optim.hpp"

namespace thepose {

struct HgfConfig {
  int k = 15;
  double alpha1 = 0.8;
  double alpha2 = 0.2;
  int topo_channels = 32;    // C, width of the refined prior map
  int topo_global = 128;     // width of the topological global feature
  std::vector<int> widths = {64, 64, 128, 128, 256};  // F_h1 .. F_h5
  int global_width = 256;    // F_h^g
  int pe_bands = 6;
  double pe_base_freq = 3.14159265358979323846;
  int hgf_layers = 4;
  bool outlier_mean = true;  // alpha2 neighbour mean in path 2

  void validate() const;
  int fused_width() const;   // sum of widths + global_width
  int pe_width() const { return 6 * pe_bands; }
};

// He-initialised weights for every layer of the stream. Deterministic in seed.
void init_hgf_params(ParamStore& params, const HgfConfig& config, int embedding_dim,
                     std::uint64_t seed);

// 1x1 convolution: relu(prior * W), no bias, so rows of zeros stay zero.
ad::Var refine_prior(ParamBinding& w, const ad::Var& prior_rows);

// Softmax attention pooling over the rows (mask pixels), then a 2-layer MLP.
ad::Var tgc_aggregate(ParamBinding& w, const ad::Var& map_rows);

// Row i is map_rows[rows[i]].
ad::Var backproject_features(const ad::Var& map_rows, std::span<const int> rows);

// EdgeConv over `graph`: row i = max_j relu(x_i W_c + x_j W_e + b), which is
// the edge MLP on [x_i, x_j - x_i] with weights (W_c + W_e, W_e).
ad::Var gc_layer(ParamBinding& w, const std::string& name, const ad::Var& x,
                 const HybridGraph& graph);

// Graphs of one forward pass; built on demand and reusable, which freezes
// them for gradient checks.
struct StreamGraphs {
  HybridGraph point;               // alpha = 0, used by F_h1 and max-pooling
  std::vector<HybridGraph> alpha1;  // per HGF layer
  std::vector<HybridGraph> alpha2;
  bool empty() const { return point.k == 0; }
};

// One HGF layer. `pe` is positional_encoding of the cloud (constant).
// Graphs are taken from `a1`/`a2` when their k is set, else built here.
ad::Var hgf_layer(ParamBinding& w, const std::string& name, const ad::Var& x,
                  const ad::Var& pe, const PointCloudd& cloud, const HgfConfig& config,
                  HybridGraph& a1, HybridGraph& a2, const Matrixd* point_dist = nullptr);

struct FusionOutput {
  ad::Var fused;   // N x fused_width: F_h1 .. F_h5, F_h^g broadcast
  ad::Var global;  // 1 x global_width
};

FusionOutput fusion_stream(ParamBinding& w, const ad::Var& topo_feats, const PointCloudd& cloud,
                           const HgfConfig& config, StreamGraphs& graphs);

}  // namespace thepose
