#pragma once

#include <random>
#include <string>

#include "autodiff.hpp"
#include "params.hpp"

namespace bpg {

// Gradient-check block tags. Every parameter carries exactly one of these.
namespace blocks {
inline constexpr const char* kFeatureIntegration = "feature_integration";
inline constexpr const char* kSciBlock = "sci_block";
inline constexpr const char* kTemporalPyramid = "temporal_pyramid";
inline constexpr const char* kSpatialSplit = "spatial_split";
inline constexpr const char* kNodeAssignment = "node_assignment";
inline constexpr const char* kEdgeMlp = "edge_mlp";
inline constexpr const char* kGcnLayer = "gcn_layer";
inline constexpr const char* kOutputHead = "output_head";
}  // namespace blocks

enum class Init { kUniform, kZero };

/// 1-D temporal convolution y = im2col(x) W + b, weight (kernel*in) x out.
/// Kernel 1 is a per-row affine map. Holds parameter names only; the values
/// live in a ParamStore.
struct Conv1d {
  std::string name;
  int in = 0;
  int out = 0;
  int kernel = 1;
  ad::Padding padding = ad::Padding::kSame;

  static Conv1d create(ParamStore& store, std::string name, const char* block, int in, int out,
                       int kernel, ad::Padding padding, Init init, std::mt19937_64& rng);

  /// x is (segments*L) x in; each segment is convolved independently.
  ad::Var operator()(ad::Tape& tape, const ParamStore& store, const ad::Var& x,
                     int segments = 1) const;

  std::string weight_name() const { return name + ".w"; }
  std::string bias_name() const { return name + ".b"; }
};

/// exp(clamp(x, -c, c))
ad::Var gated_exp(const ad::Var& x, double clamp);

}  // namespace bpg
