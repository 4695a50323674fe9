#include "thepose/hgf.hpp"

#include <numeric>

namespace thepose {

void HgfConfig::validate() const {
  if (k < 1) throw Error("config", "k must be >= 1");
  if (!(alpha1 >= 0.0 && alpha1 <= 1.0)) throw Error("config", "alpha1 outside [0, 1]");
  if (!(alpha2 >= 0.0 && alpha2 <= 1.0)) throw Error("config", "alpha2 outside [0, 1]");
  if (topo_channels < 1 || topo_global < 1 || global_width < 1) {
    throw Error("config", "feature widths must be positive");
  }
  if (hgf_layers < 1) throw Error("config", "need at least one HGF layer");
  if (static_cast<int>(widths.size()) != hgf_layers + 1) {
    throw Error("config", "widths must list hgf_layers + 1 entries");
  }
  for (int w : widths) {
    if (w < 1) throw Error("config", "layer widths must be positive");
  }
  if (pe_bands < 0) throw Error("config", "pe_bands must be >= 0");
  if (!(pe_base_freq > 0.0)) throw Error("config", "pe_base_freq must be positive");
}

int HgfConfig::fused_width() const {
  return std::accumulate(widths.begin(), widths.end(), 0) + global_width;
}

void init_hgf_params(ParamStore& params, const HgfConfig& config, int embedding_dim,
                     std::uint64_t seed) {
  config.validate();
  const int C = config.topo_channels;
  init_linear(params, "prior", embedding_dim, C, false, seed);
  init_linear(params, "tgc.score", C, 1, false, seed, 1.0);
  init_linear(params, "tgc.fc1", C, config.topo_global, true, seed);
  init_linear(params, "tgc.fc2", config.topo_global, config.topo_global, true, seed, 1.0);

  init_linear(params, "h1.center", 3, config.widths[0], true, seed, 1.0);
  init_linear(params, "h1.edge", 3, config.widths[0], false, seed, 1.0);
  int in = C + config.widths[0];
  for (int l = 0; l < config.hgf_layers; ++l) {
    const std::string name = "h" + std::to_string(l + 2);
    const int out = config.widths[static_cast<std::size_t>(l) + 1];
    const int in_pe = in + config.pe_width();
    init_linear(params, name + ".path1", in_pe, out, true, seed);
    init_linear(params, name + ".gc.center", in_pe, out, true, seed, 1.0);
    init_linear(params, name + ".gc.edge", in_pe, out, false, seed, 1.0);
    in = out;
  }
  init_linear(params, "global", config.widths.back(), config.global_width, true, seed, 1.0);
}

ad::Var refine_prior(ParamBinding& w, const ad::Var& prior_rows) {
  return ad::relu(ad::linear(prior_rows, w("prior.W")));
}

ad::Var tgc_aggregate(ParamBinding& w, const ad::Var& map_rows) {
  if (map_rows.rows() == 0) throw Error("empty-object", "no mask pixels to pool");
  const ad::Var scores = ad::linear(map_rows, w("tgc.score.W"));
  const ad::Var pooled = ad::attention_pool(map_rows, scores);
  const ad::Var hidden = ad::relu(ad::linear(pooled, w("tgc.fc1.W"), w("tgc.fc1.b")));
  return ad::linear(hidden, w("tgc.fc2.W"), w("tgc.fc2.b"));
}

ad::Var backproject_features(const ad::Var& map_rows, std::span<const int> rows) {
  return ad::gather_rows(map_rows, rows);
}

ad::Var gc_layer(ParamBinding& w, const std::string& name, const ad::Var& x,
                 const HybridGraph& graph) {
  if (graph.size() != x.rows()) throw Error("shape", "graph and features disagree on N");
  const ad::Var center = ad::linear(x, w(name + ".center.W"), w(name + ".center.b"));
  const ad::Var edge = ad::linear(x, w(name + ".edge.W"));
  // relu is monotone, so the max over edges commutes with it.
  return ad::relu(ad::add(center, ad::max_over_groups(edge, graph.groups())));
}

ad::Var hgf_layer(ParamBinding& w, const std::string& name, const ad::Var& x,
                  const ad::Var& pe, const PointCloudd& cloud, const HgfConfig& config,
                  HybridGraph& a1, HybridGraph& a2, const Matrixd* point_dist) {
  if (x.rows() != cloud.rows() || pe.rows() != cloud.rows()) {
    throw Error("shape", "features, encoding and cloud disagree on N");
  }
  if (a1.k == 0) {
    std::vector<double> alphas{config.alpha1};
    if (config.outlier_mean) alphas.push_back(config.alpha2);
    auto built = build_receptive_fields(x.value(), cloud, config.k, alphas, point_dist);
    a1 = std::move(built[0]);
    if (config.outlier_mean) a2 = std::move(built[1]);
  }
  const ad::Var enriched = ad::concat({x, pe}, 1);
  const ad::Var spatial =
      ad::relu(ad::linear(enriched, w(name + ".path1.W"), w(name + ".path1.b")));
  ad::Var local = gc_layer(w, name + ".gc", enriched, a1);
  if (config.outlier_mean) local = ad::mean_over_groups(local, a2.groups());
  return ad::add(spatial, local);
}

FusionOutput fusion_stream(ParamBinding& w, const ad::Var& topo_feats, const PointCloudd& cloud,
                           const HgfConfig& config, StreamGraphs& graphs) {
  const int n = static_cast<int>(cloud.rows());
  if (topo_feats.rows() != n) throw Error("shape", "topological features and cloud disagree on N");
  ad::Tape& tape = w.tape();

  Matrixd point_dist;
  if (graphs.empty()) {
    point_dist = point_distances(cloud);
    const double zero[] = {0.0};
    graphs.point =
        std::move(build_receptive_fields(Matrixd(n, 0), cloud, config.k, zero, &point_dist)[0]);
    graphs.alpha1.assign(static_cast<std::size_t>(config.hgf_layers), HybridGraph{});
    graphs.alpha2.assign(static_cast<std::size_t>(config.hgf_layers), HybridGraph{});
  }

  const Vector3d c = centroid(cloud);
  const ad::Var centered = tape.constant(cloud.rowwise() - c.transpose());
  const ad::Var pe = tape.constant(config.pe_bands > 0
                                       ? positional_encoding(cloud, config.pe_bands,
                                                             config.pe_base_freq)
                                       : Matrixd(n, 0));

  std::vector<ad::Var> outs;
  outs.push_back(gc_layer(w, "h1", centered, graphs.point));
  ad::Var x = ad::concat({topo_feats, outs.back()}, 1);
  const ad::Groups pool = graphs.point.groups(true);
  for (int l = 0; l < config.hgf_layers; ++l) {
    if (l % 2 == 1) x = ad::max_over_groups(x, pool);
    x = hgf_layer(w, "h" + std::to_string(l + 2), x, pe, cloud, config,
                  graphs.alpha1[static_cast<std::size_t>(l)],
                  graphs.alpha2[static_cast<std::size_t>(l)],
                  point_dist.size() > 0 ? &point_dist : nullptr);
    outs.push_back(x);
  }

  FusionOutput result;
  const ad::Var pooled = ad::max_over_groups(x, ad::Groups::all(n));
  result.global = ad::linear(pooled, w("global.W"), w("global.b"));
  const std::vector<int> zeros(static_cast<std::size_t>(n), 0);
  outs.push_back(ad::gather_rows(result.global, zeros));
  result.fused = ad::concat(outs, 1);
  return result;
}

}  // namespace thepose
