#pragma once

// Body Pose Graph network: expressive-edge adjacency (static skeleton +
// dynamic skeleton + latent), graph convolution stack, and the per-joint
// axis-angle head.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "layers.hpp"
#include "skeleton.hpp"

namespace bpg::bpgnet {

/// Bone connections in both directions plus self-loops, entries 0/1.
Matrix skeleton_adjacency(const SkeletonModel& skel);
/// D^-1/2 (A + I) D^-1/2 of the skeleton graph.
Matrix static_adjacency(const SkeletonModel& skel);

/// A_h = A_ss + A_ds + A_l.
ad::Var compose_adjacency(const ad::Var& a_ss, const ad::Var& a_ds, const ad::Var& a_l);

/// X' = leaky_relu(A_h X W) (+ X when `residual` and the widths agree).
ad::Var gcn_layer(const ad::Var& x, const ad::Var& a_h, const ad::Var& w, double slope,
                  bool residual);

/// Two-layer MLP on the flattened node features whose outputs fill a
/// symmetric 22 x 22 matrix:
///   kSkeleton: one value per bone, placed at (p, c) and (c, p);
///   kLatent:   the upper triangle (diagonal included), mirrored.
struct EdgeMlp {
  enum class Kind { kSkeleton, kLatent };

  std::string name;
  Kind kind = Kind::kSkeleton;
  int in = 0;
  int hidden = 0;
  std::vector<std::vector<std::pair<int, int>>> slots;

  static EdgeMlp create(ParamStore& store, std::string name, Kind kind, int node_features,
                        int hidden, const SkeletonModel& skel, std::mt19937_64& rng);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& nodes) const;

  int outputs() const { return static_cast<int>(slots.size()); }
  std::string w0() const { return name + ".w0"; }
  std::string b0() const { return name + ".b0"; }
  std::string w1() const { return name + ".w1"; }
  std::string b1() const { return name + ".b1"; }
};

/// Copies of the adjacency matrices used by one layer of one forward pass.
struct AdjacencySet {
  Matrix a_ss;
  Matrix a_ds;
  Matrix a_l;
  Matrix a_h;
};

struct GcnLayer {
  std::string weight;
  EdgeMlp dynamic_skeleton;
  EdgeMlp latent;
  double slope = 0.2;
  bool residual = true;

  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& x,
                     const ad::Var& a_ss, AdjacencySet* trace) const;
};

/// Per-node affine map d_node -> 3 (axis-angle).
struct OutputHead {
  std::vector<Conv1d> node_maps;

  static OutputHead create(ParamStore& store, const std::string& name, int d_node,
                           std::mt19937_64& rng);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& nodes) const;
};

struct BpgNetwork {
  Matrix a_ss;
  std::vector<GcnLayer> layers;
  OutputHead head;

  static BpgNetwork create(ParamStore& store, const ModelConfig& cfg, const SkeletonModel& skel,
                           std::mt19937_64& rng);
  /// 22 x d_node node features -> 22 x 3 axis-angles. When `trace` is given it
  /// receives one AdjacencySet per layer.
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& nodes,
                     std::vector<AdjacencySet>* trace = nullptr) const;
};

/// Differentiable forward kinematics. `local` is 22 x 3, `root` 1 x 3.
struct DiffFk {
  ad::Var positions;                  // 22 x 3
  std::vector<ad::Var> global_rot;    // 22 of 3 x 3
};
DiffFk diff_forward_kinematics(ad::Tape& tape, const ad::Var& local, const ad::Var& root,
                               const SkeletonModel& skel);

/// Shifts all joints so joint `anchor` lands on `target` (1 x 3).
ad::Var align_to(const ad::Var& positions, int anchor, const ad::Var& target);

}  // namespace bpg::bpgnet
