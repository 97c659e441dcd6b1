#pragma once

#include <string>
#include <vector>

#include "bpgnet.hpp"
#include "config.hpp"
#include "featinit.hpp"
#include "params.hpp"
#include "sensorio.hpp"
#include "skeleton.hpp"

namespace bpg {

/// Full pipeline: sensor window -> node features -> BPG network -> pose.
class BpgModel {
 public:
  /// Fresh parameters drawn from the config seed.
  static BpgModel create(const RunConfig& cfg);
  /// Rebuilds the model described by a checkpoint and loads its parameters.
  /// Throws std::runtime_error when names or shapes disagree.
  static BpgModel from_checkpoint(const Checkpoint& ckpt);

  /// Parameters, skeleton offsets and config echo. `extra` tensors (e.g.
  /// optimizer moments) are appended after the parameters.
  Checkpoint to_checkpoint(std::int64_t step,
                           const std::vector<std::pair<std::string, Matrix>>& extra = {}) const;

  const RunConfig& run_config() const { return run_config_; }
  /// Overrides a training key; model keys are fixed once parameters exist.
  /// Throws ConfigError for other keys or invalid values.
  void set_train_key(const std::string& key, const std::string& value, RunConfig::Source source);
  const ModelConfig& config() const { return config_; }
  const SkeletonModel& skeleton() const { return skeleton_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const featinit::FeatureInitializer& features() const { return features_; }
  const bpgnet::BpgNetwork& network() const { return network_; }

  struct Output {
    ad::Var node_features;  // 22 x d_node, before graph updates
    ad::Var axis_angles;    // 22 x 3
    ad::Var positions;      // 22 x 3, head joint aligned to the headset
  };

  Output forward(ad::Tape& tape, const featinit::SensorFeatureBlock& features,
                 const rotmath::Vec3& head_position,
                 std::vector<bpgnet::AdjacencySet>* trace = nullptr) const;

  PoseEstimate predict(const SensorWindow& window) const;

  /// Converts forward outputs to a PoseEstimate (root = aligned joint 0).
  PoseEstimate to_pose(const Output& out) const;

 private:
  RunConfig run_config_;
  ModelConfig config_;
  SkeletonModel skeleton_;
  ParamStore params_;
  featinit::FeatureInitializer features_;
  bpgnet::BpgNetwork network_;
};

}  // namespace bpg
