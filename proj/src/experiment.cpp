#include "thepose/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "thepose/gradcheck.hpp"
#include "thepose/parallel.hpp"

namespace thepose {

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : parts) h = mix(h ^ mix(p));
  return h;
}

std::vector<SceneSample> generate_split(const ExperimentConfig& config, Split split) {
  const int per = split == Split::train ? config.train_size : config.test_size;
  const int total = per * static_cast<int>(config.categories.size());
  std::vector<SceneSample> out(static_cast<std::size_t>(total));
  parallel_for(total, [&](int idx) {
    const Category cat = config.categories[static_cast<std::size_t>(idx / per)];
    const std::uint64_t base = derive_seed(
        config.data_seed, {static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(cat),
                           static_cast<std::uint64_t>(idx % per)});
    // A handful of retries covers the rare view that leaves too few pixels.
    for (std::uint64_t attempt = 0;; ++attempt) {
      const ShapeInstance inst =
          ShapeInstance::generate(category_spec(cat), derive_seed(base, {attempt, 0}));
      const Posed pose =
          sample_scene_pose(inst, config.camera, config.scene, derive_seed(base, {attempt, 1}));
      try {
        out[static_cast<std::size_t>(idx)] = render_sample(inst, pose, config.camera,
                                                           config.n_points,
                                                           derive_seed(base, {attempt, 2}));
        return;
      } catch (const Error& e) {
        if (e.code() != "too-small" || attempt >= 15) throw;
      }
    }
  });
  return out;
}

std::vector<SceneSample> occlude_all(const std::vector<SceneSample>& samples, double fraction,
                                     std::uint64_t seed) {
  std::vector<SceneSample> out(samples.size());
  parallel_for(static_cast<int>(samples.size()), [&](int i) {
    out[static_cast<std::size_t>(i)] = apply_occlusion(
        samples[static_cast<std::size_t>(i)], fraction,
        derive_seed(seed, {static_cast<std::uint64_t>(i)}));
  });
  return out;
}

Evaluation evaluate(const ParamStore& params, const std::vector<SceneSample>& samples,
                    const ExperimentConfig& config, double occlusion) {
  if (samples.empty()) throw Error("invalid-argument", "no samples to evaluate");
  std::vector<SceneSample> occluded;
  const std::vector<SceneSample>* input = &samples;
  if (occlusion > 0.0) {
    occluded = occlude_all(samples, occlusion, derive_seed(config.eval_seed, {1}));
    input = &occluded;
  }
  Evaluation ev;
  ev.predictions = predict_all(params, *input, config.model);
  ev.errors.resize(samples.size());
  parallel_for(static_cast<int>(samples.size()), [&](int i) {
    const SceneSample& s = (*input)[static_cast<std::size_t>(i)];
    ev.errors[static_cast<std::size_t>(i)] =
        pose_errors(ev.predictions[static_cast<std::size_t>(i)], s.gt, category_spec(s.category),
                    config.n_mc, derive_seed(config.eval_seed, {2, static_cast<std::uint64_t>(i)}));
  });
  std::vector<std::pair<PoseError, Category>> tagged;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    tagged.emplace_back(ev.errors[i], (*input)[i].category);
  }
  ev.report = aggregate(tagged);
  return ev;
}

// ---------------------------------------------------------------------------
// Prior property suites.

namespace {

Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

// Maps p to its symmetry partner, or returns false when the category has no
// non-trivial symmetry at p.
bool symmetry_partner(const ShapeInstance& inst, const Vector3d& p, double angle,
                      Vector3d& partner) {
  switch (inst.category()) {
    case Category::bottle:
    case Category::bowl:
    case Category::can:
      partner = rotation_about<double>(Vector3d::UnitZ(), angle) * p;
      return true;
    case Category::mug:
      partner = Vector3d(p.x(), -p.y(), p.z());
      return true;
    case Category::laptop:
      partner = Vector3d(-p.x(), p.y(), p.z());
      return true;
    case Category::camera:
      return false;
  }
  return false;
}

}  // namespace

std::vector<SuiteResult> check_prior(const ExperimentConfig& config) {
  const int instances = config.prior_instances;
  const int points = config.prior_points;

  SuiteResult se3{"se3-invariance", true, 0.0, 0.0, ""};
  SuiteResult sym{"symmetry-consistency", true, 0.0, 0.0, ""};
  SuiteResult topo{"topological-consistency", true, 0.0, 0.2, ""};
  std::ostringstream topo_detail;

  for (int ci = 0; ci < kCategoryCount; ++ci) {
    const Category cat = static_cast<Category>(ci);
    const CategorySpec& spec = category_spec(cat);
    std::mt19937_64 rng(derive_seed(config.data_seed, {0x9f10, static_cast<std::uint64_t>(ci)}));

    std::vector<ShapeInstance> insts;
    for (int i = 0; i < instances; ++i) {
      insts.push_back(ShapeInstance::generate(
          spec, derive_seed(config.data_seed, {0x9f11, static_cast<std::uint64_t>(ci),
                                               static_cast<std::uint64_t>(i)})));
    }
    std::vector<SurfaceParam> params;
    for (int j = 0; j < points; ++j) params.push_back(insts.front().random_param(rng));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<Embedding>> emb(insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i) {
      const ShapeInstance& inst = insts[i];
      const Matrix3d R1 = random_rotation(rng), R2 = random_rotation(rng);
      const Vector3d t1(unit(rng) - 0.5, unit(rng) - 0.5, 0.3 + unit(rng));
      const Vector3d t2(unit(rng) - 0.5, unit(rng) - 0.5, 0.3 + unit(rng));
      for (const SurfaceParam& sp : params) {
        const Vector3d p = inst.surface_point(sp);
        const Embedding e = inst.embed(p);
        emb[i].push_back(e);

        // Observe the point under two poses and map it back.
        const Vector3d p1 = R1.transpose() * ((R1 * p + t1) - t1);
        const Vector3d p2 = R2.transpose() * ((R2 * p + t2) - t2);
        if (inst.embed(p1) != inst.embed(p2)) {
          se3.pass = false;
          se3.value += 1;
        }

        Vector3d partner;
        if (symmetry_partner(inst, p, 2.0 * std::numbers::pi * unit(rng), partner)) {
          if (inst.embed(partner) != e) {
            sym.pass = false;
            sym.value += 1;
          }
        }
      }
    }

    // Same surface parameters across instances versus different ones.
    double corr = 0.0, other = 0.0;
    long n_corr = 0, n_other = 0;
    for (std::size_t i = 0; i + 1 < insts.size(); ++i) {
      for (int j = 0; j < points; ++j) {
        const int k = (j + 1 + static_cast<int>(i) % (points - 1)) % points;
        corr += (emb[i][static_cast<std::size_t>(j)] - emb[i + 1][static_cast<std::size_t>(j)])
                    .cast<double>().norm();
        other += (emb[i][static_cast<std::size_t>(j)] - emb[i + 1][static_cast<std::size_t>(k)])
                     .cast<double>().norm();
        ++n_corr;
        ++n_other;
      }
    }
    const double ratio = (corr / n_corr) / (other / n_other);
    topo.value = std::max(topo.value, ratio);
    if (!(ratio < 0.2)) topo.pass = false;
    topo_detail << category_name(cat) << "=" << ratio << " ";
    (void)spec;
  }
  se3.detail = "mismatching embeddings: " + std::to_string(static_cast<long>(se3.value));
  sym.detail = "mismatching symmetry partners: " + std::to_string(static_cast<long>(sym.value));
  topo.detail = "corresponding / non-corresponding distance: " + topo_detail.str();
  return {se3, sym, topo};
}

// ---------------------------------------------------------------------------
// Gradient-check suites on a small model.

namespace {

ParamStore subset(const ParamStore& all, std::initializer_list<const char*> prefixes) {
  ParamStore out;
  for (const auto& [name, p] : all.items()) {
    for (const char* prefix : prefixes) {
      if (name.rfind(prefix, 0) == 0) {
        out.add(name, p.value, p.shape.size());
        break;
      }
    }
  }
  return out;
}

ad::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

SuiteResult to_suite(const std::string& name, const GradCheckResult& r, double tol) {
  SuiteResult s;
  s.name = name;
  s.value = r.max_rel_error;
  s.limit = tol;
  s.pass = r.checked > 0 && r.max_rel_error < tol;
  s.detail = "checked " + std::to_string(r.checked) + ", skipped at kinks " +
             std::to_string(r.skipped);
  return s;
}

}  // namespace

std::vector<SuiteResult> grad_check_suites(std::uint64_t seed, double tol) {
  const double eps = 1e-5;
  ModelConfig mc;
  mc.hgf.k = 5;
  mc.hgf.topo_channels = 5;
  mc.hgf.topo_global = 6;
  mc.hgf.widths = {6, 6, 8, 8, 10};
  mc.hgf.global_width = 7;
  mc.hgf.pe_bands = 2;
  mc.head_hidden = 8;
  ParamStore all;
  init_model(all, mc, seed);

  const Intrinsics K;
  const ShapeInstance inst = ShapeInstance::generate(category_spec(Category::mug), seed);
  SceneConfig sc;
  const Posed pose = sample_scene_pose(inst, K, sc, seed + 1);
  const SceneSample sample = render_sample(inst, pose, K, 24, seed + 2);
  const int n = static_cast<int>(sample.cloud.rows());
  std::mt19937_64 rng(seed + 3);

  std::vector<SuiteResult> out;

  {
    const ad::Matrix W = random_matrix(rng, 7, 4), b = random_matrix(rng, 1, 4);
    const ad::Matrix target = random_matrix(rng, 5, 4);
    const GradCheckResult r = gradient_check(
        [&](ad::Tape& t, const ad::Var& x) {
          return ad::mse(ad::linear(x, t.constant(W), t.constant(b)), t.constant(target));
        },
        random_matrix(rng, 5, 7), eps);
    out.push_back(to_suite("linear", r, tol));
  }
  {
    const ad::Matrix target = random_matrix(rng, sample.prior.rows(), mc.hgf.topo_channels);
    const ParamStore ps = subset(all, {"prior."});
    out.push_back(to_suite("refine_prior",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 return ad::mse(refine_prior(w, w.tape().constant(sample.prior)),
                                                w.tape().constant(target));
                               },
                               ps, eps),
                           tol));
  }
  {
    const ad::Matrix map = random_matrix(rng, 40, mc.hgf.topo_channels);
    const ad::Matrix target = random_matrix(rng, 1, mc.hgf.topo_global);
    const ParamStore ps = subset(all, {"tgc."});
    out.push_back(to_suite("tgc_aggregate",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 return ad::mse(tgc_aggregate(w, w.tape().constant(map)),
                                                w.tape().constant(target));
                               },
                               ps, eps),
                           tol));
  }

  const ad::Matrix feats = random_matrix(rng, n, mc.hgf.topo_channels + mc.hgf.widths[0]);
  const HybridGraph point_graph =
      build_receptive_field(Matrixd(n, 0), sample.cloud, mc.hgf.k, 0.0);
  {
    const ad::Matrix centered = sample.cloud.rowwise() - centroid(sample.cloud).transpose();
    const ad::Matrix target = random_matrix(rng, n, mc.hgf.widths[0]);
    const ParamStore ps = subset(all, {"h1."});
    out.push_back(to_suite("gc_layer",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 return ad::mse(gc_layer(w, "h1", w.tape().constant(centered),
                                                         point_graph),
                                                w.tape().constant(target));
                               },
                               ps, eps),
                           tol));
    // Gradient with respect to the layer input as well.
    const GradCheckResult rx = gradient_check(
        [&](ad::Tape& t, const ad::Var& x) {
          ParamBinding w(t, all);
          return ad::mse(gc_layer(w, "h1", x, point_graph), t.constant(target));
        },
        centered, eps);
    out.push_back(to_suite("gc_layer.input", rx, tol));
  }
  {
    const ad::Matrix pe = positional_encoding(sample.cloud, mc.hgf.pe_bands, mc.hgf.pe_base_freq);
    const ad::Matrix target = random_matrix(rng, n, mc.hgf.widths[1]);
    HybridGraph a1, a2;
    const ParamStore ps = subset(all, {"h2."});
    out.push_back(to_suite("hgf_layer",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 ad::Tape& t = w.tape();
                                 return ad::mse(hgf_layer(w, "h2", t.constant(feats),
                                                          t.constant(pe), sample.cloud, mc.hgf,
                                                          a1, a2),
                                                t.constant(target));
                               },
                               ps, eps),
                           tol));
  }
  {
    const ad::Matrix topo = random_matrix(rng, n, mc.hgf.topo_channels);
    const ad::Matrix target = random_matrix(rng, n, mc.hgf.fused_width());
    StreamGraphs graphs;
    const ParamStore ps = subset(all, {"h1.", "h2.", "h3.", "h4.", "h5.", "global."});
    out.push_back(to_suite("fusion_stream",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 ad::Tape& t = w.tape();
                                 return ad::mse(
                                     fusion_stream(w, t.constant(topo), sample.cloud, mc.hgf,
                                                   graphs)
                                         .fused,
                                     t.constant(target));
                               },
                               ps, eps),
                           tol));
  }
  {
    const ad::Matrix feature = random_matrix(rng, n, mc.pose_feature_width());
    const ParamStore ps = subset(all, {"rot.", "size."});
    const CategorySpec& spec = category_spec(Category::mug);
    out.push_back(to_suite("pose_head",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 const HeadOutput h =
                                     head_forward(w, w.tape().constant(feature), sample.cloud);
                                 return pose_loss(h, sample.cloud, sample.gt, spec, {}).total;
                               },
                               ps, eps),
                           tol));
  }
  {
    StreamGraphs graphs;
    const CategorySpec& spec = category_spec(Category::mug);
    out.push_back(to_suite("full_network",
                           gradient_check(
                               [&](ParamBinding& w) {
                                 const Forward f = model_forward(w, sample, mc, graphs);
                                 return pose_loss(f.head, sample.cloud, sample.gt, spec, {}).total;
                               },
                               all, eps),
                           tol));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<AblationRow> ablate(const ExperimentConfig& config, const std::string& sweep,
                                const std::vector<SceneSample>& train_set,
                                const std::vector<SceneSample>& test_set,
                                const std::function<void(const std::string&)>& progress) {
  std::vector<AblationRow> rows;
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };
  if (sweep == "alpha1" || sweep == "neighbors") {
    const std::vector<double> grid = sweep == "alpha1" ? std::vector<double>{0.6, 0.7, 0.8, 0.9}
                                                       : std::vector<double>{10, 15, 20, 30};
    for (double v : grid) {
      ExperimentConfig c = config;
      if (sweep == "alpha1") {
        c.model.hgf.alpha1 = v;
      } else {
        c.model.hgf.k = static_cast<int>(v);
      }
      c.validate();
      std::ostringstream msg;
      msg << sweep << "=" << v;
      note(msg.str());
      const TrainResult trained = train(train_set, c.model, c.train);
      rows.push_back({sweep, v, evaluate(trained.params, test_set, c, c.occlusion).report});
    }
  } else if (sweep == "occlusion") {
    note("training once for the occlusion sweep");
    const TrainResult trained = train(train_set, config.model, config.train);
    for (double v : {0.1, 0.25, 0.4}) {
      std::ostringstream msg;
      msg << sweep << "=" << v;
      note(msg.str());
      rows.push_back({sweep, v, evaluate(trained.params, test_set, config, v).report});
    }
  } else {
    throw Error("config", "unknown sweep '" + sweep + "' (alpha1, neighbors, occlusion)");
  }
  return rows;
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    j.push_back({{"sweep", r.sweep}, {"value", r.value}, {"report", r.report.to_json()}});
  }
  return j;
}

}  // namespace thepose
