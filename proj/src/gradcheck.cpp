#include "thepose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace thepose {

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

void fold(GradCheckResult& r, double analytic, const Probe& plus, const Probe& minus,
          std::uint64_t base_signature, double eps) {
  if (plus.signature != base_signature || minus.signature != base_signature) {
    ++r.skipped;
    return;
  }
  const double numeric = (plus.value - minus.value) / (2.0 * eps);
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  r.max_rel_error = std::max(r.max_rel_error, err);
  ++r.checked;
}

}  // namespace

GradCheckResult gradient_check(const TensorFn& f, const ad::Matrix& x, double eps) {
  auto eval = [&](const ad::Matrix& at) {
    ad::Tape tape;
    tape.set_track_kinks(true);
    ad::Var v = tape.variable(at);
    ad::Var y = f(tape, v);
    return Probe{y.value()(0, 0), tape.kink_signature()};
  };

  ad::Tape tape;
  tape.set_track_kinks(true);
  ad::Var v = tape.variable(x);
  ad::Var y = f(tape, v);
  tape.backward(y);
  const ad::Matrix grad = tape.gradient(v);
  const std::uint64_t base = tape.kink_signature();

  GradCheckResult r;
  ad::Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const Probe plus = eval(probe);
    probe.data()[i] = orig - eps;
    const Probe minus = eval(probe);
    probe.data()[i] = orig;
    fold(r, grad.data()[i], plus, minus, base, eps);
  }
  return r;
}

GradCheckResult gradient_check(const LossFn& f, const ParamStore& params, double eps,
                               std::size_t max_coords_per_param, std::uint64_t seed) {
  auto eval = [&](const ParamStore& at) {
    ad::Tape tape;
    tape.set_track_kinks(true);
    ParamBinding bind(tape, at);
    ad::Var y = f(bind);
    return Probe{y.value()(0, 0), tape.kink_signature()};
  };

  ad::Tape tape;
  tape.set_track_kinks(true);
  ParamBinding bind(tape, params);
  ad::Var y = f(bind);
  tape.backward(y);
  const GradMap grads = bind.gradients();
  const std::uint64_t base = tape.kink_signature();

  std::mt19937_64 rng(seed);
  GradCheckResult r;
  ParamStore probe = params;
  for (const auto& [name, p] : params.items()) {
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_param != 0 && max_coords_per_param < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }
    double* data = probe.at(name).value.data();
    for (std::size_t i : coords) {
      const double orig = data[i];
      data[i] = orig + eps;
      const Probe plus = eval(probe);
      data[i] = orig - eps;
      const Probe minus = eval(probe);
      data[i] = orig;
      fold(r, grads.at(name).data()[i], plus, minus, base, eps);
    }
  }
  return r;
}

}  // namespace thepose
