// thepose: data generation, training, evaluation and diagnostics.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "thepose/config.hpp"
#include "thepose/experiment.hpp"
#include "thepose/graph.hpp"
#include "thepose/optim.hpp"
#include "thepose/pose_head.hpp"
#include "thepose/runtime.hpp"
#include "thepose/scene.hpp"

namespace fs = std::filesystem;
using namespace thepose;

namespace {

int exit_code_for(const std::string& code) {
  if (code == "config" || code == "invalid-argument" || code == "param") return 2;
  if (code == "io" || code == "bad-magic" || code == "truncated" || code == "version" ||
      code == "format") {
    return 4;
  }
  return 3;
}

void fail_line(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io", "write failed for " + path.string());
}

ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("config", "override '" + kv + "' is not key=value");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  return c;
}

void print_counts(const std::string& split, const std::vector<SceneSample>& samples) {
  std::map<Category, int> counts;
  for (const SceneSample& s : samples) ++counts[s.category];
  for (const auto& [c, n] : counts) std::cout << split << " " << category_name(c) << " " << n << "\n";
}

void print_suites(const std::vector<SuiteResult>& suites) {
  for (const SuiteResult& s : suites) {
    std::cout << (s.pass ? "PASS " : "FAIL ") << s.name << " value=" << s.value
              << " limit=" << s.limit << " (" << s.detail << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_resident();
  CLI::App app{"Category-level pose estimation with hybrid graph fusion on synthetic scenes"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, ckpt_path, sweep;
  std::vector<std::string> overrides;
  std::optional<double> occlusion;
  int sample_index = 0;
  double alpha = 0.0;
  int k = 15;

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", config_path, "experiment config file");
    if (required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override a config entry, key=value");
  };

  auto* gen = app.add_subcommand("gen", "generate train and test datasets");
  add_config(gen, true);
  gen->add_option("--out", out_path, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_config(train_cmd, true);
  train_cmd->add_option("--data", data_path, "training dataset file")->required();
  train_cmd->add_option("--out", out_path, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval, true);
  eval->add_option("--data", data_path, "test dataset file")->required();
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--out", out_path, "output directory")->required();
  eval->add_option("--occlusion", occlusion, "fraction of mask pixels to remove")
      ->check(CLI::Range(0.0, 0.999999));

  auto* prior = app.add_subcommand("check-prior", "property suites of the oracle prior");
  add_config(prior, true);

  auto* dump = app.add_subcommand("dump-graph", "hybrid receptive field of one sample as JSON");
  dump->add_option("--data", data_path, "dataset file")->required();
  dump->add_option("--sample", sample_index, "sample index")->required();
  dump->add_option("--alpha", alpha, "feature weight alpha")->required();
  dump->add_option("--k", k, "neighbours per point")->required();
  dump->add_option("--out", out_path, "output file (stdout if omitted)");

  auto* grad = app.add_subcommand("grad-check", "finite-difference checks of every layer");
  add_config(grad, true);

  auto* ablate_cmd = app.add_subcommand("ablate", "hyperparameter and occlusion sweeps");
  add_config(ablate_cmd, true);
  ablate_cmd->add_option("--sweep", sweep, "alpha1, neighbors or occlusion")
      ->required()
      ->check(CLI::IsMember({"alpha1", "neighbors", "occlusion"}));
  ablate_cmd->add_option("--data", data_path, "directory with train.thd and test.thd");
  ablate_cmd->add_option("--out", out_path, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("config", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      fs::create_directories(out_path);
      const auto train_set = generate_split(c, Split::train);
      const auto test_set = generate_split(c, Split::test);
      dataset_write(train_set, (fs::path(out_path) / "train.thd").string());
      dataset_write(test_set, (fs::path(out_path) / "test.thd").string());
      print_counts("train", train_set);
      print_counts("test", test_set);
    } else if (train_cmd->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      const auto data = dataset_read(data_path);
      fs::create_directories(out_path);
      const long every = std::max(1L, c.train.steps / 20);
      const TrainResult result = train(data, c.model, c.train, [&](const LossRow& r) {
        if (r.step % every == 0 || r.step + 1 == c.train.steps) {
          std::cerr << "step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
        }
      });
      save_checkpoint(result.params, (fs::path(out_path) / "model.ckpt").string());
      write_loss_csv(result.log, (fs::path(out_path) / "loss.csv").string());
      std::cout << "final loss " << result.log.back().loss << "\n";
    } else if (eval->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      const auto data = dataset_read(data_path);
      const ParamStore params = load_checkpoint(ckpt_path);
      const double frac = occlusion.value_or(c.occlusion);
      const Evaluation ev = evaluate(params, data, c, frac);
      nlohmann::json j = ev.report.to_json();
      j["occlusion"] = frac;
      write_text(fs::path(out_path) / "metrics.json", j.dump(2) + "\n");
      write_text(fs::path(out_path) / "metrics.txt", ev.report.to_table());
      std::cout << ev.report.to_table();
    } else if (prior->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      const auto suites = check_prior(c);
      print_suites(suites);
      for (const auto& s : suites) {
        if (!s.pass) return 3;
      }
    } else if (dump->parsed()) {
      const auto data = dataset_read(data_path);
      if (sample_index < 0 || sample_index >= static_cast<int>(data.size())) {
        throw Error("invalid-argument", "sample index out of range");
      }
      const SceneSample& s = data[static_cast<std::size_t>(sample_index)];
      const HybridGraph g = build_receptive_field(s.point_prior, s.cloud, k, alpha);
      const std::string text = graph_to_json(g).dump() + "\n";
      if (out_path.empty()) {
        std::cout << text;
      } else {
        write_text(out_path, text);
      }
    } else if (grad->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      const auto suites = grad_check_suites(c.train.seed);
      print_suites(suites);
      for (const auto& s : suites) {
        if (!s.pass) return 3;
      }
    } else if (ablate_cmd->parsed()) {
      const ExperimentConfig c = config_from(config_path, overrides);
      std::vector<SceneSample> train_set, test_set;
      if (data_path.empty()) {
        train_set = generate_split(c, Split::train);
        test_set = generate_split(c, Split::test);
      } else {
        train_set = dataset_read((fs::path(data_path) / "train.thd").string());
        test_set = dataset_read((fs::path(data_path) / "test.thd").string());
      }
      const auto rows = ablate(c, sweep, train_set, test_set,
                               [](const std::string& s) { std::cerr << s << "\n"; });
      for (const AblationRow& r : rows) {
        std::cout << r.sweep << "=" << r.value;
        for (std::size_t i = 0; i < kMetricColumns.size(); ++i) {
          std::cout << " " << kMetricColumns[i] << "=" << r.report.mean.cells[i];
        }
        std::cout << "\n";
      }
      if (!out_path.empty()) write_text(out_path, ablation_json(rows).dump(2) + "\n");
    }
  } catch (const Error& e) {
    fail_line(e.code(), e.what());
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    fail_line("io", e.what());
    return 4;
  } catch (const std::exception& e) {
    fail_line("internal", e.what());
    return 3;
  }
  return 0;
}
