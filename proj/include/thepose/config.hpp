#pragma once

// Experiment configuration: flat "section.key = value" text, one entry per
// line, '#' starts a comment. Unknown or repeated keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "thepose/geometry.hpp"
#include "thepose/pose_head.hpp"
#include "thepose/scene.hpp"
#include "thepose/shapes.hpp"

namespace thepose {

struct ExperimentConfig {
  std::vector<Category> categories = {Category::mug};
  int train_size = 512;  // scenes per category
  int test_size = 128;
  int n_points = 1024;
  std::uint64_t data_seed = 1;
  Intrinsics camera;
  SceneConfig scene;

  ModelConfig model;
  TrainConfig train;

  double occlusion = 0.0;
  int n_mc = 10000;
  std::uint64_t eval_seed = 3;

  int prior_instances = 20;  // per category, for check-prior
  int prior_points = 400;    // surface samples per instance

  std::string data_dir = "data";
  std::string out_dir = "out";

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Every key, in a fixed order; parse_config(serialize(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& config);
// Applies one "key=value" override on top of `config`.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

}  // namespace thepose
