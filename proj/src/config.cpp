#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sensorio.hpp"

namespace bpg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::vector<std::string> kModelKeys = {"k_window", "d_mix", "c1",          "d_t",
                                             "d_g",      "d_node", "clamp", "kernel_size",
                                             "seed"};

const std::vector<std::string> kOptionalKeys = {
    "gcn_layers", "edge_hidden", "leaky_slope", "gcn_residual", "fps",    "skeleton",
    "lr",         "batch",       "steps",       "beta1",        "beta2",  "eps",
    "checkpoint_every", "w_rot", "w_pos",       "w_bone"};

long long parse_int(const RunConfig& c, const std::string& key) {
  const std::string v = c.get(key);
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

int positive_int(const RunConfig& c, const std::string& key) {
  const long long v = parse_int(c, key);
  if (v <= 0 || v > 1'000'000'000) {
    throw ConfigError("config key '" + key + "': must be a positive integer");
  }
  return static_cast<int>(v);
}

double parse_real(const RunConfig& c, const std::string& key) {
  const std::string v = c.get(key);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + v + "'");
  }
  return out;
}

double positive_real(const RunConfig& c, const std::string& key) {
  const double v = parse_real(c, key);
  if (!(v > 0.0)) throw ConfigError("config key '" + key + "': must be positive");
  return v;
}

}  // namespace

const char* to_string(RunConfig::Source s) {
  switch (s) {
    case RunConfig::Source::kDefault: return "default";
    case RunConfig::Source::kFile: return "file";
    case RunConfig::Source::kFlag: return "flag";
    case RunConfig::Source::kCheckpoint: return "checkpoint";
  }
  return "?";
}

const std::vector<std::string>& RunConfig::required_model_keys() { return kModelKeys; }

bool RunConfig::is_known_key(const std::string& key) {
  return std::find(kModelKeys.begin(), kModelKeys.end(), key) != kModelKeys.end() ||
         std::find(kOptionalKeys.begin(), kOptionalKeys.end(), key) != kOptionalKeys.end();
}

bool RunConfig::is_train_key(const std::string& key) {
  static const std::vector<std::string> keys{"lr",  "batch",          "steps", "beta1", "beta2",
                                             "eps", "checkpoint_every", "w_rot", "w_pos", "w_bone"};
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

RunConfig run_config_from(const ModelConfig& m, const TrainConfig& t) {
  RunConfig c;
  auto put = [&](const char* k, const std::string& v) { c.set(k, v, RunConfig::Source::kDefault); };
  put("k_window", std::to_string(m.k_window));
  put("d_mix", std::to_string(m.d_mix));
  put("c1", std::to_string(m.c1));
  put("d_t", std::to_string(m.d_t));
  put("d_g", std::to_string(m.d_g));
  put("d_node", std::to_string(m.d_node));
  put("clamp", format_double(m.clamp));
  put("kernel_size", std::to_string(m.kernel_size));
  put("seed", std::to_string(m.seed));
  put("gcn_layers", std::to_string(m.gcn_layers));
  put("edge_hidden", std::to_string(m.edge_hidden));
  put("leaky_slope", format_double(m.leaky_slope));
  put("gcn_residual", m.gcn_residual ? "1" : "0");
  put("fps", format_double(m.fps));
  put("skeleton", m.skeleton);
  put("lr", format_double(t.lr));
  put("batch", std::to_string(t.batch));
  put("steps", std::to_string(t.steps));
  put("beta1", format_double(t.beta1));
  put("beta2", format_double(t.beta2));
  put("eps", format_double(t.eps));
  put("checkpoint_every", std::to_string(t.checkpoint_every));
  put("w_rot", format_double(t.w_rot));
  put("w_pos", format_double(t.w_pos));
  put("w_bone", format_double(t.w_bone));
  return c;
}

RunConfig RunConfig::defaults() { return run_config_from(ModelConfig{}, TrainConfig{}); }

void RunConfig::set(const std::string& key, const std::string& value, Source source) {
  if (!is_known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  entries_[key] = Entry{value, source};
}

std::string RunConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second.value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source_name,
                           Source source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source_name + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!is_known_key(key)) {
      throw ConfigError(source_name + ":" + std::to_string(lineno) + ": unknown config key '" +
                        key + "'");
    }
    set(key, value, source);
    seen.push_back(key);
  }
  if (source == Source::kFile) {
    for (const auto& k : kModelKeys) {
      if (std::find(seen.begin(), seen.end(), k) == seen.end()) {
        throw ConfigError(source_name + ": missing config key '" + k + "'");
      }
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path, Source::kFile);
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.k_window = positive_int(*this, "k_window");
  if (m.k_window < 2) throw ConfigError("config key 'k_window': must be at least 2");
  m.d_mix = positive_int(*this, "d_mix");
  m.c1 = positive_int(*this, "c1");
  m.d_t = positive_int(*this, "d_t");
  m.d_g = positive_int(*this, "d_g");
  m.d_node = positive_int(*this, "d_node");
  m.clamp = positive_real(*this, "clamp");
  m.kernel_size = positive_int(*this, "kernel_size");
  if (m.kernel_size % 2 == 0) throw ConfigError("config key 'kernel_size': must be odd");
  const long long seed = parse_int(*this, "seed");
  if (seed < 0) throw ConfigError("config key 'seed': must be non-negative");
  m.seed = static_cast<std::uint64_t>(seed);
  m.gcn_layers = positive_int(*this, "gcn_layers");
  m.edge_hidden = positive_int(*this, "edge_hidden");
  m.leaky_slope = parse_real(*this, "leaky_slope");
  if (m.leaky_slope < 0.0 || m.leaky_slope >= 1.0) {
    throw ConfigError("config key 'leaky_slope': must lie in [0, 1)");
  }
  const std::string res = get("gcn_residual");
  if (res != "0" && res != "1") throw ConfigError("config key 'gcn_residual': must be 0 or 1");
  m.gcn_residual = res == "1";
  m.fps = positive_real(*this, "fps");
  m.skeleton = get("skeleton");
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = positive_real(*this, "lr");
  t.batch = positive_int(*this, "batch");
  const long long steps = parse_int(*this, "steps");
  if (steps < 0) throw ConfigError("config key 'steps': must be non-negative");
  t.steps = static_cast<int>(steps);
  t.seed = static_cast<std::uint64_t>(parse_int(*this, "seed"));
  t.beta1 = parse_real(*this, "beta1");
  t.beta2 = parse_real(*this, "beta2");
  if (t.beta1 < 0.0 || t.beta1 >= 1.0) throw ConfigError("config key 'beta1': must lie in [0, 1)");
  if (t.beta2 < 0.0 || t.beta2 >= 1.0) throw ConfigError("config key 'beta2': must lie in [0, 1)");
  t.eps = positive_real(*this, "eps");
  t.checkpoint_every = positive_int(*this, "checkpoint_every");
  t.w_rot = parse_real(*this, "w_rot");
  t.w_pos = parse_real(*this, "w_pos");
  t.w_bone = parse_real(*this, "w_bone");
  if (t.w_rot < 0.0 || t.w_pos < 0.0 || t.w_bone < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  return t;
}

std::string RunConfig::echo(bool with_source) const {
  std::string out;
  for (const auto& [k, e] : entries_) {
    out += k + " = " + e.value;
    if (with_source) out += std::string("  # ") + to_string(e.source);
    out += '\n';
  }
  return out;
}

}  // namespace bpg
