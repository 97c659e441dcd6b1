#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace bpg {

using Matrix = Eigen::MatrixXd;

/// A named learned tensor. `block` names the gradient-checked block that owns it.
struct Parameter {
  std::string name;
  std::string block;
  Matrix value;
};

/// Ordered collection of parameters with stable addresses (tapes refer to
/// parameter storage directly).
class ParamStore {
 public:
  Parameter& add(std::string name, std::string block, Matrix value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const;

  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, int fan_in, std::mt19937_64& rng);

/// Serialized model state. Binary layout: ASCII header lines terminated by
/// "end\n", followed by the raw little-endian float64 data of every tensor in
/// header order, column-major.
///
///   BPGCKPT
///   version 1
///   step <n>
///   config <lines>
///   <lines of key = value>
///   tensors <count>
///   <name> <rows> <cols>      (one per tensor)
///   end
struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::int64_t step = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

/// Throws std::runtime_error on I/O failure, malformed content, or a version
/// other than Checkpoint::kVersion.
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace bpg
