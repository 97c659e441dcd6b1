#pragma once

// Node feature initialization: sensor feature assembly, dual interactive
// fusion of position/rotation streams, the temporal pyramid, the trunk-guided
// limb feature, and per-node assignment.

#include <optional>
#include <random>
#include <utility>

#include "config.hpp"
#include "layers.hpp"
#include "sensorio.hpp"
#include "skeleton.hpp"

namespace bpg::featinit {

/// Per-sensor feature sequences, sensor-major: rows s*K .. s*K+K-1 hold sensor s.
struct SensorFeatureBlock {
  int frames = 0;
  Matrix position;  // (S*K) x 6: p, v
  Matrix rotation;  // (S*K) x 12: 6-D rotation, 6-D angular velocity
};

inline constexpr int kPositionChannels = 6;
inline constexpr int kRotationChannels = 12;

SensorFeatureBlock assemble_features(const SensorWindow& w);

/// Cross-gating of two equally shaped streams:
///   P' = P * exp(phi(A)) - rho(A * exp(psi(P)))
///   A' = A * exp(psi(P)) + eta(P * exp(phi(A)))
struct DualInteractive {
  Conv1d phi, psi, rho, eta;
  double clamp = 5.0;

  static DualInteractive create(ParamStore& store, const std::string& name, int width, int kernel,
                                double clamp, std::mt19937_64& rng);
  std::pair<ad::Var, ad::Var> operator()(ad::Tape& tape, const ParamStore& store,
                                         const ad::Var& p, const ad::Var& a,
                                         int segments) const;
};

/// Even/odd split, exp cross-scale interaction, re-interleave; then an
/// optional pointwise projection when the output width differs.
struct SciBlock {
  int in = 0;
  int out = 0;
  Conv1d phi, psi, rho, eta;
  std::optional<Conv1d> projection;
  double clamp = 5.0;

  static SciBlock create(ParamStore& store, const std::string& name, int in, int out, int kernel,
                         double clamp, std::mt19937_64& rng);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& x) const;
};

/// Frame-level and clip-level extractors, channel interleave, and a third
/// extractor with causal aggregation to the last frame. K x C -> 1 x d_t.
struct TemporalPyramid {
  SciBlock frame_level;
  SciBlock clip_level;
  SciBlock fusion;
  Conv1d aggregate;  // causal, evaluated at the final time step only

  static TemporalPyramid create(ParamStore& store, const std::string& name, int in, int c1,
                                int d_t, int kernel, double clamp, std::mt19937_64& rng);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& x) const;
};

/// Stride-2 average pooling over time; an odd tail frame is averaged with itself.
ad::Var temporal_downsample(const ad::Var& x);
/// Nearest-neighbour repetition back to `frames` rows.
ad::Var temporal_upsample(const ad::Var& x, Eigen::Index frames);
/// Alternating columns [a0, b0, a1, b1, ...].
ad::Var interleave_channels(const ad::Var& a, const ad::Var& b);

/// Rewrites only the limb feature, guided by the trunk feature:
///   L' = L * exp(phi(T)) + rho(T * exp(psi(L)))
struct SpatialSplit {
  std::optional<Conv1d> trunk_projection;
  std::optional<Conv1d> limb_projection;
  Conv1d phi, psi, rho;
  double clamp = 5.0;

  static SpatialSplit create(ParamStore& store, const std::string& name, int d_t, int d_g,
                             double clamp, std::mt19937_64& rng);
  std::pair<ad::Var, ad::Var> operator()(ad::Tape& tape, const ParamStore& store,
                                         const ad::Var& trunk, const ad::Var& limb) const;
};

/// Per-node affine maps from the trunk or limb feature to d_node.
struct NodeAssignment {
  std::vector<Conv1d> node_maps;  // indexed by joint
  std::vector<bool> is_trunk;

  static NodeAssignment create(ParamStore& store, const std::string& name, int d_g, int d_node,
                               const SkeletonModel& skel, std::mt19937_64& rng);
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& trunk,
                     const ad::Var& limb) const;
};

/// The whole initialization stage: SensorFeatureBlock -> 22 x d_node.
struct FeatureInitializer {
  int frames = 0;
  int d_mix = 0;
  Conv1d entry_position;
  Conv1d entry_rotation;
  DualInteractive dual;
  TemporalPyramid trunk_pyramid;
  TemporalPyramid limb_pyramid;
  SpatialSplit spatial;
  NodeAssignment assign;

  static FeatureInitializer create(ParamStore& store, const ModelConfig& cfg,
                                   const SkeletonModel& skel, std::mt19937_64& rng);

  /// Fused K x (S*d_mix) sequence fed to both pyramids.
  ad::Var fused_sequence(ad::Tape& tape, const ParamStore& store,
                         const SensorFeatureBlock& f) const;
  ad::Var operator()(ad::Tape& tape, const ParamStore& store,
                     const SensorFeatureBlock& f) const;
};

}  // namespace bpg::featinit
