#include "thepose/optim.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "thepose/binary_io.hpp"

namespace thepose {

namespace {
constexpr char kCheckpointMagic[] = "THEPOSE-CKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void ParamStore::add(const std::string& name, ad::Matrix init, std::size_t rank) {
  if (params_.count(name)) throw Error("param", "duplicate parameter " + name);
  if (rank == 1 && init.rows() != 1) throw Error("shape", "rank-1 parameter must be 1 x D");
  Parameter p;
  p.shape = rank == 1 ? std::vector<std::size_t>{static_cast<std::size_t>(init.cols())}
                      : std::vector<std::size_t>{static_cast<std::size_t>(init.rows()),
                                                 static_cast<std::size_t>(init.cols())};
  p.first_moment = ad::Matrix::Zero(init.rows(), init.cols());
  p.second_moment = ad::Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.emplace(name, std::move(p));
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("param", "unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("param", "unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.shape != p.shape) return false;
    if (p.value.rows() != it->second.value.rows() ||
        p.value.cols() != it->second.value.cols() || p.value != it->second.value) {
      return false;
    }
  }
  return true;
}

void init_linear(ParamStore& params, const std::string& prefix, int in, int out, bool bias,
                 std::uint64_t seed, double gain) {
  if (in < 0 || out < 1) throw Error("shape", "bad layer size for " + prefix);
  const std::string wname = prefix + ".W";
  std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
  for (unsigned char c : wname) h = (h ^ c) * 0x100000001b3ULL;
  std::mt19937_64 rng(h);
  std::normal_distribution<double> normal(0.0, in > 0 ? std::sqrt(gain / in) : 0.0);
  ad::Matrix W(in, out);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = in > 0 ? normal(rng) : 0.0;
  params.add(wname, std::move(W));
  if (bias) params.add(prefix + ".b", ad::Matrix::Zero(1, out), 1);
}

ad::Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ad::Var v = tape_.variable(store_.at(name).value);
  bound_.emplace(name, v);
  return v;
}

GradMap ParamBinding::gradients() const {
  GradMap out;
  for (const auto& [name, p] : store_.items()) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end()
                          ? ad::Matrix::Zero(p.value.rows(), p.value.cols())
                          : tape_.gradient(it->second));
  }
  return out;
}

double LrSchedule::at(long step) const {
  if (total_steps <= 1 || tail_fraction <= 0.0) return base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  const double tail_start = 1.0 - tail_fraction;
  if (progress <= tail_start) return base_lr;
  const double phase = std::min(1.0, (progress - tail_start) / tail_fraction);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

void optimizer_step(ParamStore& params, const GradMap& grads, const LrSchedule& schedule,
                    long step, const AdamConfig& adam) {
  const double lr = schedule.at(step);
  const double t = static_cast<double>(step + 1);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (auto& [name, p] : params.items()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("param", "missing gradient for " + name);
    const ad::Matrix& g = it->second;
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      throw Error("shape", "gradient shape mismatch for " + name);
    }
    p.first_moment = adam.beta1 * p.first_moment + (1.0 - adam.beta1) * g;
    p.second_moment =
        adam.beta2 * p.second_moment + (1.0 - adam.beta2) * g.cwiseProduct(g);
    p.value.array() -= lr * (p.first_moment.array() / c1) /
                       ((p.second_moment.array() / c2).sqrt() + adam.eps);
  }
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  io::Writer out(path);
  out.bytes(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  out.put<std::uint32_t>(kCheckpointVersion);
  for (const auto& [name, p] : params.items()) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    out.bytes(name.data(), name.size());
    out.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    out.put_array(p.value.data(), static_cast<std::size_t>(p.value.size()));
  }
  out.close();
}

ParamStore load_checkpoint(const std::string& path) {
  io::Reader in(path);
  in.expect_magic(std::string(kCheckpointMagic, sizeof(kCheckpointMagic) - 1));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error("version", "checkpoint version " + std::to_string(version) +
                               ", expected " + std::to_string(kCheckpointVersion));
  }
  ParamStore store;
  while (!in.at_end()) {
    const auto len = in.get<std::uint32_t>();
    if (len > in.remaining()) throw Error("truncated", path + " ends inside a name");
    std::string name(len, '\0');
    in.bytes(name.data(), len);
    const auto rank = in.get<std::uint32_t>();
    if (rank != 1 && rank != 2) throw Error("format", "parameter rank must be 1 or 2");
    std::uint32_t rows = 1, cols = 0;
    if (rank == 2) rows = in.get<std::uint32_t>();
    cols = in.get<std::uint32_t>();
    if (static_cast<std::size_t>(rows) * cols * sizeof(double) > in.remaining()) {
      throw Error("truncated", path + " ends inside " + name);
    }
    ad::Matrix value(rows, cols);
    in.get_array(value.data(), static_cast<std::size_t>(value.size()));
    store.add(name, std::move(value), rank);
  }
  return store;
}

}  // namespace thepose
