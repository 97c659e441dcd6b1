#include "model.hpp"

#include <stdexcept>

namespace bpg {

namespace {

constexpr const char* kSkeletonTensor = "skeleton.offsets";

}  // namespace

BpgModel BpgModel::create(const RunConfig& cfg) {
  BpgModel m;
  m.run_config_ = cfg;
  m.config_ = cfg.model();
  m.skeleton_ = m.config_.skeleton.empty() ? default_skeleton() : load_skeleton(m.config_.skeleton);
  std::mt19937_64 rng(m.config_.seed);
  m.features_ = featinit::FeatureInitializer::create(m.params_, m.config_, m.skeleton_, rng);
  m.network_ = bpgnet::BpgNetwork::create(m.params_, m.config_, m.skeleton_, rng);
  return m;
}

BpgModel BpgModel::from_checkpoint(const Checkpoint& ckpt) {
  RunConfig cfg;
  cfg.merge_text(ckpt.config_echo, "checkpoint config", RunConfig::Source::kCheckpoint);
  // The skeleton path in the echo may not exist where the checkpoint is used;
  // offsets travel inside the checkpoint instead.
  cfg.set("skeleton", "", RunConfig::Source::kCheckpoint);
  BpgModel m = create(cfg);

  const Matrix* offsets = ckpt.find(kSkeletonTensor);
  if (!offsets || offsets->rows() != kNumJoints || offsets->cols() != 3) {
    throw std::runtime_error("checkpoint: missing or malformed " + std::string(kSkeletonTensor));
  }
  for (int j = 0; j < kNumJoints; ++j) m.skeleton_.offset[j] = offsets->row(j).transpose();
  validate(m.skeleton_);

  for (auto& p : m.params_) {
    const Matrix* src = ckpt.find(p.name);
    if (!src) throw std::runtime_error("checkpoint: missing parameter " + p.name);
    if (src->rows() != p.value.rows() || src->cols() != p.value.cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    }
    p.value = *src;
  }
  return m;
}

void BpgModel::set_train_key(const std::string& key, const std::string& value,
                             RunConfig::Source source) {
  if (!RunConfig::is_train_key(key)) {
    throw ConfigError("config key '" + key + "' cannot change for an existing model");
  }
  RunConfig updated = run_config_;
  updated.set(key, value, source);
  updated.train();
  run_config_ = std::move(updated);
}

Checkpoint BpgModel::to_checkpoint(std::int64_t step,
                                   const std::vector<std::pair<std::string, Matrix>>& extra) const {
  Checkpoint ck;
  ck.step = step;
  ck.config_echo = run_config_.echo(false);
  Matrix offsets(kNumJoints, 3);
  for (int j = 0; j < kNumJoints; ++j) offsets.row(j) = skeleton_.offset[j].transpose();
  ck.tensors.emplace_back(kSkeletonTensor, offsets);
  for (const auto& p : params_) ck.tensors.emplace_back(p.name, p.value);
  for (const auto& e : extra) ck.tensors.push_back(e);
  return ck;
}

BpgModel::Output BpgModel::forward(ad::Tape& tape, const featinit::SensorFeatureBlock& features,
                                   const rotmath::Vec3& head_position,
                                   std::vector<bpgnet::AdjacencySet>* trace) const {
  Output out;
  out.node_features = features_(tape, params_, features);
  out.axis_angles = network_(tape, params_, out.node_features, trace);
  const ad::Var zero_root = tape.constant(Matrix::Zero(1, 3));
  const auto fk = bpgnet::diff_forward_kinematics(tape, out.axis_angles, zero_root, skeleton_);
  const ad::Var head = tape.constant(head_position.transpose());
  out.positions = bpgnet::align_to(fk.positions, kHeadJoint, head);
  return out;
}

PoseEstimate BpgModel::to_pose(const Output& out) const {
  PoseEstimate pose;
  const Matrix& aa = out.axis_angles.value();
  const Matrix& pos = out.positions.value();
  for (int j = 0; j < kNumJoints; ++j) {
    pose.local_rot[j] = aa.row(j).transpose();
    pose.positions[j] = pos.row(j).transpose();
  }
  pose.root_translation = pose.positions[0];
  pose.global_rot = forward_kinematics(pose.local_rot, pose.root_translation, skeleton_).global_rot;
  return pose;
}

PoseEstimate BpgModel::predict(const SensorWindow& window) const {
  ad::Tape tape(false);
  const auto features = featinit::assemble_features(window);
  const Output out = forward(tape, features, window.frames.back().position[0]);
  return to_pose(out);
}

}  // namespace bpg
