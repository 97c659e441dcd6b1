#include "skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "errors.hpp"

namespace bpg {

using rotmath::Mat3;
using rotmath::Vec3;

namespace {

constexpr std::array<int, kNumJoints> kSmplParents = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

// Neutral rest pose, meters, y up, +x towards the body's left. Left-side joints
// are listed once; their right-side partners are mirrored across x.
struct MirroredOffset {
  int left;
  int right;
  Vec3 offset;
};

const std::array<MirroredOffset, 8> kSideOffsets = {{
    {1, 2, {0.0695, -0.0914, -0.0068}},    // hip
    {4, 5, {0.0343, -0.3752, -0.0045}},    // knee
    {7, 8, {-0.0136, -0.3980, -0.0437}},   // ankle
    {10, 11, {0.0264, -0.0558, 0.1193}},   // foot
    {13, 14, {0.0717, 0.1140, -0.0189}},   // collar
    {16, 17, {0.1229, 0.0452, -0.0190}},   // shoulder
    {18, 19, {0.2553, -0.0156, -0.0229}},  // elbow
    {20, 21, {0.2657, 0.0127, -0.0073}},   // wrist
}};

const std::array<std::pair<int, Vec3>, 5> kCenterOffsets = {{
    {3, {0.0, 0.1090, -0.0267}},   // spine1
    {6, {0.0, 0.1352, 0.0011}},    // spine2
    {9, {0.0, 0.0529, 0.0254}},    // spine3
    {12, {0.0, 0.2139, -0.0334}},  // neck
    {15, {0.0, 0.0890, 0.0504}},   // head
}};

}  // namespace

std::vector<Bone> SkeletonModel::bones() const {
  std::vector<Bone> out;
  out.reserve(kNumJoints - 1);
  for (int j = 1; j < kNumJoints; ++j) out.emplace_back(parent[j], j);
  return out;
}

bool SkeletonModel::is_trunk(int joint) const {
  return std::find(trunk.begin(), trunk.end(), joint) != trunk.end();
}

SkeletonModel default_skeleton() {
  SkeletonModel s;
  s.parent = kSmplParents;
  s.offset.fill(Vec3::Zero());
  for (const auto& m : kSideOffsets) {
    s.offset[m.left] = m.offset;
    s.offset[m.right] = Vec3(-m.offset.x(), m.offset.y(), m.offset.z());
  }
  for (const auto& [j, off] : kCenterOffsets) s.offset[j] = off;
  s.trunk = {0, 1, 2, 3, 4, 5, 6, 9, 12, 13, 14};
  s.limb = {7, 8, 10, 11, 15, 16, 17, 18, 19, 20, 21};
  s.left_bones = {{0, 1}, {1, 4}, {4, 7}, {7, 10}, {9, 13}, {13, 16}, {16, 18}, {18, 20}};
  s.right_bones = {{0, 2}, {2, 5}, {5, 8}, {8, 11}, {9, 14}, {14, 17}, {17, 19}, {19, 21}};
  return s;
}

void validate(const SkeletonModel& skel) {
  if (skel.parent[0] != -1) throw std::invalid_argument("skeleton: joint 0 must be the root");
  for (int j = 1; j < kNumJoints; ++j) {
    if (skel.parent[j] < 0 || skel.parent[j] >= j) {
      throw std::invalid_argument("skeleton: parent of joint " + std::to_string(j) +
                                  " must precede it");
    }
  }
  std::array<int, kNumJoints> seen{};
  for (int j : skel.trunk) ++seen.at(j);
  for (int j : skel.limb) ++seen.at(j);
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
    throw std::invalid_argument("skeleton: trunk and limb sets must partition the joints");
  }
  if (skel.left_bones.size() != skel.right_bones.size()) {
    throw std::invalid_argument("skeleton: left/right bone lists differ in length");
  }
  auto check_bone = [&](const Bone& b) {
    if (b.second <= 0 || b.second >= kNumJoints || skel.parent[b.second] != b.first) {
      throw std::invalid_argument("skeleton: bone (" + std::to_string(b.first) + "," +
                                  std::to_string(b.second) + ") is not a tree edge");
    }
  };
  std::for_each(skel.left_bones.begin(), skel.left_bones.end(), check_bone);
  std::for_each(skel.right_bones.begin(), skel.right_bones.end(), check_bone);
  for (const auto& o : skel.offset) {
    if (!o.allFinite()) throw std::invalid_argument("skeleton: non-finite offset");
  }
}

SkeletonModel parse_skeleton(std::istream& in, const std::string& source) {
  SkeletonModel skel = default_skeleton();
  std::array<bool, kNumJoints> given{};
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int index = 0;
    int parent = 0;
    Vec3 off;
    if (!(ls >> index)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      fail("expected joint index");
    }
    if (!(ls >> parent >> off.x() >> off.y() >> off.z())) fail("expected 5 columns");
    std::string extra;
    if (ls >> extra) fail("unexpected trailing column '" + extra + "'");
    if (index < 0 || index >= kNumJoints) fail("joint index out of range");
    if (parent != kSmplParents[index]) fail("parent does not match the 22-joint SMPL tree");
    if (!off.allFinite()) fail("non-finite offset");
    if (given[index]) fail("duplicate joint " + std::to_string(index));
    given[index] = true;
    skel.offset[index] = off;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    if (!given[j]) throw std::runtime_error(source + ": missing joint " + std::to_string(j));
  }
  validate(skel);
  return skel;
}

SkeletonModel load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton file: " + path);
  return parse_skeleton(in, path);
}

FkResult forward_kinematics(std::span<const rotmath::AxisAngle, kNumJoints> local_rot,
                            const Vec3& root_translation, const SkeletonModel& skel) {
  FkResult r;
  r.global_rot[0] = rotmath::axis_angle_to_matrix(local_rot[0]);
  r.positions[0] = root_translation;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = skel.parent[j];
    r.global_rot[j] = r.global_rot[p] * rotmath::axis_angle_to_matrix(local_rot[j]);
    r.positions[j] = r.positions[p] + r.global_rot[p] * skel.offset[j];
  }
  return r;
}

std::vector<double> bone_lengths(const Positions& positions, std::span<const Bone> bones) {
  std::vector<double> out;
  out.reserve(bones.size());
  for (const auto& [p, c] : bones) out.push_back((positions[c] - positions[p]).norm());
  return out;
}

PoseEstimate PoseEstimate::from_local(const LocalRotations& local_rot,
                                      const Vec3& root_translation, const SkeletonModel& skel) {
  PoseEstimate pose;
  pose.local_rot = local_rot;
  pose.root_translation = root_translation;
  auto fk = forward_kinematics(local_rot, root_translation, skel);
  pose.positions = fk.positions;
  pose.global_rot = fk.global_rot;
  return pose;
}

}  // namespace bpg
