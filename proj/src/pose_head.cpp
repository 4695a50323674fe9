#include "thepose/pose_head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "thepose/parallel.hpp"

namespace thepose {

namespace {

ad::Var row_constant(ad::Tape& tape, const Vector3d& v) {
  return tape.constant(ad::Matrix(v.transpose()));
}

Vector3d row_value(const ad::Var& v) {
  if (v.rows() != 1 || v.cols() != 3) throw Error("shape", "expected a 1 x 3 value");
  return v.value().row(0).transpose();
}

ad::Var mlp3(ParamBinding& w, const std::string& name, const ad::Var& x) {
  ad::Var h = ad::relu(ad::linear(x, w(name + ".fc1.W"), w(name + ".fc1.b")));
  h = ad::relu(ad::linear(h, w(name + ".fc2.W"), w(name + ".fc2.b")));
  return ad::linear(h, w(name + ".out.W"), w(name + ".out.b"));
}

}  // namespace

void ModelConfig::validate() const {
  hgf.validate();
  if (head_hidden < 1) throw Error("config", "head_hidden must be positive");
  if (embedding_dim < 1) throw Error("config", "embedding_dim must be positive");
}

void init_model(ParamStore& params, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  init_hgf_params(params, config.hgf, config.embedding_dim, seed);
  const int P = config.pose_feature_width();
  const int H = config.head_hidden;
  init_linear(params, "rot.fc1", P, H, true, seed);
  init_linear(params, "rot.fc2", H, H, true, seed);
  init_linear(params, "rot.out", H, 6, true, seed, 1.0);
  init_linear(params, "size.fc1", P + 3, H, true, seed);
  init_linear(params, "size.fc2", H, H, true, seed);
  init_linear(params, "size.out", H, 6, true, seed, 1e-4);
}

HeadValues HeadValues::of(const HeadOutput& out) {
  return {row_value(out.a1), row_value(out.a2), row_value(out.t_res), row_value(out.s_res)};
}

HeadValues HeadValues::encode(const Posed& gt, const PointCloudd& cloud,
                              const CategorySpec& spec) {
  return {gt.rotation.col(2), gt.rotation.col(0), gt.translation - centroid(cloud),
          gt.size - spec.mean_size};
}

HeadOutput head_forward(ParamBinding& w, const ad::Var& pose_feature, const PointCloudd& cloud) {
  const int n = static_cast<int>(cloud.rows());
  if (pose_feature.rows() != n) throw Error("shape", "pose feature and cloud disagree on N");
  const ad::Groups all = ad::Groups::all(n);

  const ad::Var r = mlp3(w, "rot", ad::max_over_groups(pose_feature, all));

  const Vector3d c = centroid(cloud);
  const ad::Var centered = w.tape().constant(cloud.rowwise() - c.transpose());
  const ad::Var s_in = ad::concat({pose_feature, centered}, 1);
  const ad::Var s = mlp3(w, "size", ad::max_over_groups(s_in, all));

  return {ad::slice_cols(r, 0, 3), ad::slice_cols(r, 3, 3), ad::slice_cols(s, 0, 3),
          ad::slice_cols(s, 3, 3)};
}

Posed assemble_pose(const HeadValues& out, const PointCloudd& cloud, const CategorySpec& spec) {
  Posed pose;
  pose.rotation = gram_schmidt_rotation(out.a1, out.a2);
  pose.translation = centroid(cloud) + out.t_res;
  pose.size = (spec.mean_size + out.s_res).cwiseMax(1e-3);
  return pose;
}

LossTerms pose_loss(const HeadOutput& out, const PointCloudd& cloud, const Posed& gt,
                    const CategorySpec& spec, const LossWeights& weights) {
  ad::Tape& tape = *out.a1.tape();
  const HeadValues target = HeadValues::encode(gt, cloud, spec);

  LossTerms terms;
  terms.rotation = ad::l1(ad::normalize_rows(out.a1), row_constant(tape, target.a1));
  if (spec.symmetry != Symmetry::revolution) {
    terms.rotation = ad::add(
        terms.rotation, ad::l1(ad::normalize_rows(out.a2), row_constant(tape, target.a2)));
  }
  terms.translation = ad::l1(out.t_res, row_constant(tape, target.t_res));
  terms.size = ad::l1(out.s_res, row_constant(tape, target.s_res));
  terms.total = ad::add(ad::add(ad::scale(terms.rotation, weights.rotation),
                                ad::scale(terms.translation, weights.translation)),
                        ad::scale(terms.size, weights.size));
  return terms;
}

Forward model_forward(ParamBinding& w, const SceneSample& sample, const ModelConfig& config,
                      StreamGraphs& graphs) {
  if (sample.embedding_dim() != config.embedding_dim) {
    throw Error("shape", "sample embedding width " + std::to_string(sample.embedding_dim()) +
                             " does not match the model (" +
                             std::to_string(config.embedding_dim) + ")");
  }
  ad::Tape& tape = w.tape();
  const int n = static_cast<int>(sample.cloud.rows());

  std::vector<int> rows(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rows[static_cast<std::size_t>(i)] = sample.mask_row(sample.pixel_indices[static_cast<std::size_t>(i)]);
    if (rows[static_cast<std::size_t>(i)] < 0) throw Error("index", "point source pixel outside the mask");
  }

  Forward f;
  const ad::Var refined = refine_prior(w, tape.constant(sample.prior));
  f.topo_global = tgc_aggregate(w, refined);
  const ad::Var topo = backproject_features(refined, rows);
  f.fusion = fusion_stream(w, topo, sample.cloud, config.hgf, graphs);
  const std::vector<int> zeros(static_cast<std::size_t>(n), 0);
  f.pose_feature = ad::concat({ad::gather_rows(f.topo_global, zeros), f.fusion.fused}, 1);
  f.head = head_forward(w, f.pose_feature, sample.cloud);
  return f;
}

Posed predict(const ParamStore& params, const SceneSample& sample, const ModelConfig& config) {
  ad::Tape tape;
  ParamBinding w(tape, params);
  StreamGraphs graphs;
  const Forward f = model_forward(w, sample, config, graphs);
  return assemble_pose(HeadValues::of(f.head), sample.cloud, category_spec(sample.category));
}

std::vector<Posed> predict_all(const ParamStore& params, const std::vector<SceneSample>& samples,
                               const ModelConfig& config) {
  std::vector<Posed> out(samples.size());
  parallel_for(static_cast<int>(samples.size()), [&](int i) {
    out[static_cast<std::size_t>(i)] = predict(params, samples[static_cast<std::size_t>(i)], config);
  });
  return out;
}

namespace {

struct SampleGrad {
  GradMap grads;
  double loss = 0.0;
  double rotation = 0.0;
  double translation = 0.0;
  double size = 0.0;
};

SampleGrad sample_gradient(const ParamStore& params, const SceneSample& sample,
                           const ModelConfig& config, const LossWeights& weights) {
  ad::Tape tape;
  ParamBinding w(tape, params);
  StreamGraphs graphs;
  const Forward f = model_forward(w, sample, config, graphs);
  const LossTerms terms =
      pose_loss(f.head, sample.cloud, sample.gt, category_spec(sample.category), weights);
  tape.backward(terms.total);
  SampleGrad g;
  g.grads = w.gradients();
  g.loss = terms.total.value()(0, 0);
  g.rotation = terms.rotation.value()(0, 0);
  g.translation = terms.translation.value()(0, 0);
  g.size = terms.size.value()(0, 0);
  return g;
}

}  // namespace

TrainResult train(const std::vector<SceneSample>& dataset, const ModelConfig& config,
                  const TrainConfig& tc, const std::function<void(const LossRow&)>& on_step) {
  if (dataset.empty()) throw Error("invalid-argument", "training set is empty");
  if (tc.steps < 1 || tc.batch_size < 1) throw Error("config", "steps and batch_size must be >= 1");
  if (!(tc.lr >= 0.0)) throw Error("config", "lr must be >= 0");

  TrainResult result;
  init_model(result.params, config, tc.seed);
  const LrSchedule schedule{tc.lr, tc.steps, tc.tail_fraction};

  std::mt19937_64 rng(tc.seed ^ 0x5deece66dULL);
  std::vector<int> order(dataset.size());
  std::size_t cursor = order.size();
  const int batch = tc.batch_size;
  std::vector<int> picks(static_cast<std::size_t>(batch));
  std::vector<SampleGrad> parts(static_cast<std::size_t>(batch));

  for (long step = 0; step < tc.steps; ++step) {
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      picks[static_cast<std::size_t>(b)] = order[cursor++];
    }
    parallel_for(batch, [&](int b) {
      parts[static_cast<std::size_t>(b)] =
          sample_gradient(result.params, dataset[static_cast<std::size_t>(picks[static_cast<std::size_t>(b)])],
                          config, tc.weights);
    });

    GradMap grads = std::move(parts[0].grads);
    LossRow row{step, schedule.at(step), parts[0].loss, parts[0].rotation, parts[0].translation,
                parts[0].size};
    for (int b = 1; b < batch; ++b) {
      SampleGrad& p = parts[static_cast<std::size_t>(b)];
      for (auto& [name, g] : grads) g += p.grads.at(name);
      row.loss += p.loss;
      row.rotation += p.rotation;
      row.translation += p.translation;
      row.size += p.size;
    }
    const double inv = 1.0 / batch;
    for (auto& [name, g] : grads) g *= inv;
    row.loss *= inv;
    row.rotation *= inv;
    row.translation *= inv;
    row.size *= inv;

    if (!std::isfinite(row.loss)) {
      throw DivergedError(step, "non-finite loss at step " + std::to_string(step));
    }
    optimizer_step(result.params, grads, schedule, step);
    result.log.push_back(row);
    if (on_step) on_step(row);
  }
  return result;
}

void write_loss_csv(const std::vector<LossRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path);
  out.precision(17);
  out << "step,lr,loss,loss_r,loss_t,loss_s\n";
  for (const LossRow& r : log) {
    out << r.step << ',' << r.lr << ',' << r.loss << ',' << r.rotation << ',' << r.translation
        << ',' << r.size << '\n';
  }
  if (!out) throw Error("io", "write failed for " + path);
}

}  // namespace thepose
