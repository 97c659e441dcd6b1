#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rotmath.hpp"

namespace bpg {

inline constexpr int kNumJoints = 22;
inline constexpr int kNumSensors = 3;

/// Joints carrying a tracked device, in sensor order: head, left wrist, right wrist.
inline constexpr std::array<int, kNumSensors> kSensorJoints = {15, 20, 21};
inline constexpr int kHeadJoint = 15;

using Bone = std::pair<int, int>;  // (parent, child)

/// 22-joint kinematic tree in SMPL joint order. Parents always precede their
/// children, so a single forward sweep visits the tree top-down.
struct SkeletonModel {
  std::array<int, kNumJoints> parent{};
  std::array<rotmath::Vec3, kNumJoints> offset{};
  std::vector<int> trunk;
  std::vector<int> limb;
  std::vector<Bone> left_bones;
  std::vector<Bone> right_bones;

  /// All parent-child edges (21 for a tree).
  std::vector<Bone> bones() const;
  bool is_trunk(int joint) const;
};

SkeletonModel default_skeleton();

/// Reads `index parent x y z` lines ('#' starts a comment) and returns the
/// default skeleton with those offsets. The parent column must match the SMPL
/// table. Throws std::runtime_error with the line number on bad input.
SkeletonModel load_skeleton(const std::string& path);
SkeletonModel parse_skeleton(std::istream& in, const std::string& source);

/// Checks tree shape, partition, and bone pairing; throws std::invalid_argument.
void validate(const SkeletonModel& skel);

using Positions = std::array<rotmath::Vec3, kNumJoints>;
using GlobalRotations = std::array<rotmath::RotMatrix, kNumJoints>;
using LocalRotations = std::array<rotmath::AxisAngle, kNumJoints>;

struct FkResult {
  Positions positions;
  GlobalRotations global_rot;
};

FkResult forward_kinematics(std::span<const rotmath::AxisAngle, kNumJoints> local_rot,
                            const rotmath::Vec3& root_translation,
                            const SkeletonModel& skel);

std::vector<double> bone_lengths(const Positions& positions, std::span<const Bone> bones);

/// Predicted or ground-truth pose for one frame.
struct PoseEstimate {
  LocalRotations local_rot{};
  rotmath::Vec3 root_translation = rotmath::Vec3::Zero();
  Positions positions{};
  GlobalRotations global_rot{};

  static PoseEstimate from_local(const LocalRotations& local_rot,
                                 const rotmath::Vec3& root_translation,
                                 const SkeletonModel& skel);
};

}  // namespace bpg
