#pragma once

#include <cstdint>
#include <functional>

#include "thepose/autodiff.hpp"
#include "thepose/optim.hpp"

namespace thepose {

struct GradCheckResult {
  double max_rel_error = 0.0;  // max |analytic - central| / max(1, |analytic|)
  std::size_t checked = 0;
  // Coordinates whose +-eps stencil changed a relu sign, argmax or |.| sign;
  // the function is not differentiable across such a stencil.
  std::size_t skipped = 0;
};

using TensorFn = std::function<ad::Var(ad::Tape&, const ad::Var&)>;
using LossFn = std::function<ad::Var(ParamBinding&)>;

GradCheckResult gradient_check(const TensorFn& f, const ad::Matrix& x, double eps);

// Checks d loss / d parameter. max_coords_per_param == 0 checks every entry,
// otherwise a seeded subset of that many entries per parameter.
GradCheckResult gradient_check(const LossFn& f, const ParamStore& params, double eps,
                               std::size_t max_coords_per_param = 0,
                               std::uint64_t seed = 0);

}  // namespace thepose
