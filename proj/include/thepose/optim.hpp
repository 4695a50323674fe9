#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "thepose/autodiff.hpp"

namespace thepose {

struct Parameter {
  std::vector<std::size_t> shape;  // rank 1 (biases) or rank 2 (weights)
  ad::Matrix value;
  ad::Matrix first_moment;
  ad::Matrix second_moment;
};

using GradMap = std::map<std::string, ad::Matrix>;

// Named parameters in lexicographic order, so every traversal (optimizer,
// checkpoint, gradient reduction) is deterministic.
class ParamStore {
 public:
  void add(const std::string& name, ad::Matrix init, std::size_t rank = 2);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const std::map<std::string, Parameter>& items() const { return params_; }
  std::map<std::string, Parameter>& items() { return params_; }
  std::size_t scalar_count() const;
  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

// Adds `prefix.W` (in x out, normal with std sqrt(gain / in)) and, when
// `bias` is set, a zero `prefix.b`. Each parameter draws from its own stream
// seeded by (seed, name).
void init_linear(ParamStore& params, const std::string& prefix, int in, int out, bool bias,
                 std::uint64_t seed, double gain = 2.0);

// Binds store entries to leaves of one tape on first use.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  GradMap gradients() const;

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, ad::Var> bound_;
};

// Base rate for the first (1 - tail_fraction) of training, then a half-cosine
// to zero at the final step.
struct LrSchedule {
  double base_lr = 1e-3;
  long total_steps = 1;
  double tail_fraction = 0.28;

  double at(long step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void optimizer_step(ParamStore& params, const GradMap& grads, const LrSchedule& schedule,
                    long step, const AdamConfig& adam = {});

// "THEPOSE-CKPT", u32 version, then per parameter: u32 name length, name,
// u32 rank, u32 dims[rank], f64 data.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace thepose
