#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bpg {

/// Invalid or missing configuration. Reported to operators as a usage error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int k_window = 41;
  int d_mix = 32;
  int c1 = 64;
  int d_t = 128;
  int d_g = 128;
  int d_node = 64;
  double clamp = 5.0;
  int kernel_size = 3;
  std::uint64_t seed = 7;
  int gcn_layers = 3;
  int edge_hidden = 64;
  double leaky_slope = 0.2;
  bool gcn_residual = true;
  double fps = 60.0;
  /// Optional skeleton offsets file; empty uses the built-in rest pose.
  std::string skeleton;
};

struct TrainConfig {
  double lr = 1e-4;
  int batch = 32;
  int steps = 2000;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int checkpoint_every = 500;
  double w_rot = 1.0;
  double w_pos = 1.0;
  double w_bone = 1.0;
};

/// Merged key/value configuration with the origin of every value.
class RunConfig {
 public:
  enum class Source { kDefault, kFile, kFlag, kCheckpoint };

  struct Entry {
    std::string value;
    Source source = Source::kDefault;
  };

  /// Keys a model config file must define.
  static const std::vector<std::string>& required_model_keys();
  static bool is_known_key(const std::string& key);
  /// Keys that only affect optimization and may change between runs of one model.
  static bool is_train_key(const std::string& key);

  /// Every known key at its default value.
  static RunConfig defaults();

  /// Parses `key = value` lines ('#' comments). Unknown keys and missing
  /// required model keys raise ConfigError naming the key.
  void merge_file(const std::string& path);
  void merge_text(const std::string& text, const std::string& source_name, Source source);
  /// `key=value`; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value, Source source);

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::string get(const std::string& key) const;

  /// Validated typed views. Throw ConfigError naming the offending key.
  ModelConfig model() const;
  TrainConfig train() const;

  /// `key = value` lines, sorted, each followed by a provenance comment when
  /// `with_source` is set.
  std::string echo(bool with_source) const;

 private:
  std::map<std::string, Entry> entries_;
};

RunConfig run_config_from(const ModelConfig& m, const TrainConfig& t);

const char* to_string(RunConfig::Source s);

}  // namespace bpg
