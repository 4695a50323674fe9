#pragma once

// Experiment drivers shared by the command-line tool and the tests.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "thepose/config.hpp"
#include "thepose/metrics.hpp"
#include "thepose/optim.hpp"
#include "thepose/scene.hpp"

namespace thepose {

// splitmix64 over the parts; used for every derived seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

enum class Split : std::uint8_t { train = 0, test = 1 };

// config.train_size / test_size scenes per category, category-major.
std::vector<SceneSample> generate_split(const ExperimentConfig& config, Split split);

std::vector<SceneSample> occlude_all(const std::vector<SceneSample>& samples, double fraction,
                                     std::uint64_t seed);

struct Evaluation {
  std::vector<Posed> predictions;
  std::vector<PoseError> errors;
  MetricsReport report;
};

// Occlusion (if nonzero) is applied to the samples before inference.
Evaluation evaluate(const ParamStore& params, const std::vector<SceneSample>& samples,
                    const ExperimentConfig& config, double occlusion);

struct SuiteResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // measured quantity
  double limit = 0.0;  // threshold it is compared with
  std::string detail;
};

// SE(3) invariance, symmetry consistency and cross-instance consistency of
// the oracle prior, over every category.
std::vector<SuiteResult> check_prior(const ExperimentConfig& config);

// Central-difference checks of every layer and of the full network + loss on
// a small model, with graphs frozen.
std::vector<SuiteResult> grad_check_suites(std::uint64_t seed, double tolerance = 1e-4);

struct AblationRow {
  std::string sweep;
  double value = 0.0;
  MetricsReport report;
};

// alpha1 and neighbors retrain per grid value; occlusion trains once.
std::vector<AblationRow> ablate(const ExperimentConfig& config, const std::string& sweep,
                                const std::vector<SceneSample>& train_set,
                                const std::vector<SceneSample>& test_set,
                                const std::function<void(const std::string&)>& progress = {});

nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace thepose
