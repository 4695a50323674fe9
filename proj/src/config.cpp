#include "thepose/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace thepose {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) {
  throw Error("config", key + ": cannot parse '" + value + "' as " + what);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* what) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad(key, value, what);
  return out;
}

int as_int(const std::string& k, const std::string& v) { return parse_number<int>(k, v, "integer"); }
long as_long(const std::string& k, const std::string& v) { return parse_number<long>(k, v, "integer"); }
std::uint64_t as_u64(const std::string& k, const std::string& v) {
  return parse_number<std::uint64_t>(k, v, "unsigned integer");
}
double as_double(const std::string& k, const std::string& v) {
  return parse_number<double>(k, v, "number");
}
bool as_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(k, v, "boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
template <typename T>
std::string fmt_int(T v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define THEPOSE_INT(KEY, MEMBER)                                          \
  Field{KEY, [](const ExperimentConfig& c) { return fmt_int(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = as_int(KEY, v); }}
#define THEPOSE_LONG(KEY, MEMBER)                                         \
  Field{KEY, [](const ExperimentConfig& c) { return fmt_int(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = as_long(KEY, v); }}
#define THEPOSE_U64(KEY, MEMBER)                                          \
  Field{KEY, [](const ExperimentConfig& c) { return fmt_int(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = as_u64(KEY, v); }}
#define THEPOSE_REAL(KEY, MEMBER)                                     \
  Field{KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = as_double(KEY, v); }}
#define THEPOSE_BOOL(KEY, MEMBER)                                     \
  Field{KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = as_bool(KEY, v); }}
#define THEPOSE_TEXT(KEY, MEMBER)                                \
  Field{KEY, [](const ExperimentConfig& c) { return c.MEMBER; }, \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"data.categories",
            [](const ExperimentConfig& c) {
              std::string s;
              for (Category cat : c.categories) {
                if (!s.empty()) s += ",";
                s += category_name(cat);
              }
              return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.categories.clear();
              for (const auto& item : split_list(v)) c.categories.push_back(parse_category(item));
            }},
      THEPOSE_INT("data.train_size", train_size),
      THEPOSE_INT("data.test_size", test_size),
      THEPOSE_INT("data.n_points", n_points),
      THEPOSE_U64("data.seed", data_seed),
      THEPOSE_REAL("camera.fx", camera.fx),
      THEPOSE_REAL("camera.fy", camera.fy),
      THEPOSE_REAL("camera.cx", camera.cx),
      THEPOSE_REAL("camera.cy", camera.cy),
      THEPOSE_INT("camera.width", camera.width),
      THEPOSE_INT("camera.height", camera.height),
      THEPOSE_REAL("scene.elevation_min_deg", scene.elevation_min_deg),
      THEPOSE_REAL("scene.elevation_max_deg", scene.elevation_max_deg),
      THEPOSE_REAL("scene.azimuth_range_deg", scene.azimuth_range_deg),
      THEPOSE_REAL("scene.roll_max_deg", scene.roll_max_deg),
      THEPOSE_REAL("scene.diagonal_px_min", scene.diagonal_px_min),
      THEPOSE_REAL("scene.diagonal_px_max", scene.diagonal_px_max),
      THEPOSE_REAL("scene.jitter_px", scene.jitter_px),
      THEPOSE_INT("net.k", model.hgf.k),
      THEPOSE_REAL("net.alpha1", model.hgf.alpha1),
      THEPOSE_REAL("net.alpha2", model.hgf.alpha2),
      THEPOSE_INT("net.topo_channels", model.hgf.topo_channels),
      THEPOSE_INT("net.topo_global", model.hgf.topo_global),
      Field{"net.widths",
            [](const ExperimentConfig& c) {
              std::string s;
              for (int w : c.model.hgf.widths) s += (s.empty() ? "" : ",") + std::to_string(w);
              return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.model.hgf.widths.clear();
              for (const auto& item : split_list(v)) {
                c.model.hgf.widths.push_back(as_int("net.widths", item));
              }
            }},
      THEPOSE_INT("net.global_width", model.hgf.global_width),
      THEPOSE_INT("net.pe_bands", model.hgf.pe_bands),
      THEPOSE_REAL("net.pe_base_freq", model.hgf.pe_base_freq),
      THEPOSE_INT("net.hgf_layers", model.hgf.hgf_layers),
      THEPOSE_BOOL("net.outlier_mean", model.hgf.outlier_mean),
      THEPOSE_INT("net.head_hidden", model.head_hidden),
      THEPOSE_INT("net.embedding_dim", model.embedding_dim),
      THEPOSE_REAL("loss.w_r", train.weights.rotation),
      THEPOSE_REAL("loss.w_t", train.weights.translation),
      THEPOSE_REAL("loss.w_s", train.weights.size),
      THEPOSE_LONG("train.steps", train.steps),
      THEPOSE_INT("train.batch_size", train.batch_size),
      THEPOSE_REAL("train.lr", train.lr),
      THEPOSE_REAL("train.tail_fraction", train.tail_fraction),
      THEPOSE_U64("train.seed", train.seed),
      THEPOSE_REAL("eval.occlusion", occlusion),
      THEPOSE_INT("eval.n_mc", n_mc),
      THEPOSE_U64("eval.seed", eval_seed),
      THEPOSE_INT("prior.instances", prior_instances),
      THEPOSE_INT("prior.points", prior_points),
      THEPOSE_TEXT("paths.data", data_dir),
      THEPOSE_TEXT("paths.out", out_dir),
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return f;
  }
  throw Error("config", "unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (categories.empty()) throw Error("config", "data.categories is empty");
  if (std::set<Category>(categories.begin(), categories.end()).size() != categories.size()) {
    throw Error("config", "data.categories lists a category twice");
  }
  if (train_size < 0 || test_size < 0) throw Error("config", "dataset sizes must be >= 0");
  if (n_points < 1) throw Error("config", "data.n_points must be >= 1");
  try {
    camera.validate();
  } catch (const Error& e) {
    throw Error("config", std::string("camera: ") + e.what());
  }
  if (!(scene.elevation_min_deg <= scene.elevation_max_deg) || scene.elevation_min_deg < -90 ||
      scene.elevation_max_deg > 90) {
    throw Error("config", "scene elevation range is invalid");
  }
  if (!(scene.azimuth_range_deg >= 0 && scene.azimuth_range_deg <= 360)) {
    throw Error("config", "scene.azimuth_range_deg must be in [0, 360]");
  }
  if (!(scene.roll_max_deg >= 0) || !(scene.jitter_px >= 0)) {
    throw Error("config", "scene roll and jitter must be >= 0");
  }
  if (!(scene.diagonal_px_min > 0 && scene.diagonal_px_min <= scene.diagonal_px_max)) {
    throw Error("config", "scene diagonal range is invalid");
  }
  model.validate();
  if (model.hgf.k >= n_points) throw Error("config", "net.k must be below data.n_points");
  if (train.steps < 1 || train.batch_size < 1) {
    throw Error("config", "train.steps and train.batch_size must be >= 1");
  }
  if (!(train.lr >= 0)) throw Error("config", "train.lr must be >= 0");
  if (!(train.tail_fraction >= 0 && train.tail_fraction <= 1)) {
    throw Error("config", "train.tail_fraction must be in [0, 1]");
  }
  if (!(train.weights.rotation >= 0 && train.weights.translation >= 0 &&
        train.weights.size >= 0)) {
    throw Error("config", "loss weights must be >= 0");
  }
  if (!(occlusion >= 0 && occlusion < 1)) throw Error("config", "eval.occlusion must be in [0, 1)");
  if (n_mc < 10000) throw Error("config", "eval.n_mc must be >= 10000");
  if (prior_instances < 2 || prior_points < 10) {
    throw Error("config", "prior.instances must be >= 2 and prior.points >= 10");
  }
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config", "line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw Error("config", "key '" + key + "' given twice");
    set_config_value(config, key, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace thepose
