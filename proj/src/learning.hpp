#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "featinit.hpp"
#include "model.hpp"
#include "sensorio.hpp"
#include "skeleton.hpp"

namespace bpg::learning {

struct LossWeights {
  double rot = 1.0;
  double pos = 1.0;
  double bone = 1.0;
};

/// Weighted loss terms; l_total is their sum.
struct LossBreakdown {
  double l_rot = 0.0;
  double l_pos = 0.0;
  double l_bone = 0.0;
  double l_total = 0.0;
};

/// Mean absolute axis-angle component difference over 66 values.
double loss_rot(const LocalRotations& pred, const LocalRotations& gt);
/// Mean absolute position component difference over 66 values (meters).
double loss_pos(const Positions& pred, const Positions& gt);
/// Sum over paired bones of |len(left) - len(right)|.
double loss_bone(const Positions& pred, const SkeletonModel& skel);
LossBreakdown total_loss(const PoseEstimate& pred, const PoseEstimate& gt,
                         const SkeletonModel& skel, const LossWeights& w = {});

// Tape versions. Predictions are 22 x 3 nodes, targets constants.
ad::Var loss_rot(const ad::Var& pred, const Matrix& gt);
ad::Var loss_pos(const ad::Var& pred, const Matrix& gt);
ad::Var loss_bone(const ad::Var& pred, const SkeletonModel& skel);

struct TapeLoss {
  ad::Var rot, pos, bone, total;  // weighted terms
  LossBreakdown values() const;
};
TapeLoss total_loss(const ad::Var& pred_axis_angles, const ad::Var& pred_positions,
                    const PoseEstimate& gt, const SkeletonModel& skel, const LossWeights& w = {});

/// 22 x 3 matrix of per-joint vectors (rotations or positions share a type).
Matrix to_matrix(const Positions& p);

struct MetricReport {
  double mpjre_deg = 0.0;
  double mpjpe_cm = 0.0;
  double mpjve_cm_s = 0.0;
  std::array<double, kNumJoints> per_joint_mpjpe_cm{};
  std::size_t frames = 0;
};

/// Metrics over one temporally ordered clip. Throws std::invalid_argument on
/// length mismatch or fewer than 2 frames.
MetricReport evaluate(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
                      double fps);
/// Frame-weighted combination of per-clip reports.
MetricReport merge(std::span<const MetricReport> reports);

std::string to_json(const MetricReport& r);
std::string to_text(const MetricReport& r);
void write_metrics_json(const MetricReport& r, const std::string& path);

/// One training/evaluation example: the window ending at a target frame and
/// the ground-truth pose of that frame.
struct Sample {
  featinit::SensorFeatureBlock features;
  rotmath::Vec3 head_position = rotmath::Vec3::Zero();
  PoseEstimate target;
};

struct Clip {
  std::size_t first = 0;  // index into Dataset::samples
  std::size_t count = 0;
};

struct Dataset {
  double fps = kDefaultFps;
  std::vector<Sample> samples;
  std::vector<Clip> clips;  // consecutive target frames of one sequence
};

Dataset build_dataset(std::span<const MotionSequence> sequences, const SkeletonModel& skel,
                      int window);

/// Worker count: BPG_THREADS when set (>= 1), else 1.
int worker_threads();

/// Predictions for every sample, in order.
std::vector<PoseEstimate> predict_all(const BpgModel& model, const Dataset& data);
MetricReport evaluate_model(const BpgModel& model, const Dataset& data);

/// Raised when a loss term becomes NaN or infinite; names the term.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, std::int64_t step);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  static AdamState zeros(const ParamStore& params);
  std::vector<std::pair<std::string, Matrix>> to_tensors(const ParamStore& params) const;
  /// Restores moments from checkpoint tensors; zeros when absent.
  static AdamState from_checkpoint(const Checkpoint& ck, const ParamStore& params);
};

struct StepRecord {
  std::int64_t step = 0;
  LossBreakdown loss;
};

/// Sample indices of the batch used at `step`: consecutive slices of seeded
/// per-epoch permutations, so a resumed run sees the same batches.
std::vector<std::size_t> batch_indices(std::size_t n_samples, int batch, std::uint64_t seed,
                                       std::int64_t step);

/// Mean loss and parameter gradients over a batch.
struct BatchGradient {
  LossBreakdown loss;
  std::vector<Matrix> grads;  // aligned with ParamStore order
};
BatchGradient batch_gradient(const BpgModel& model, const Dataset& data,
                             std::span<const std::size_t> batch, const LossWeights& w,
                             int threads);
/// Forward only; mean loss over a batch.
LossBreakdown batch_loss(const BpgModel& model, const Dataset& data,
                         std::span<const std::size_t> batch, const LossWeights& w);

struct TrainHooks {
  /// Called after each completed step with the step's record.
  std::function<void(const StepRecord&)> on_step;
  /// Called after step s when (s + 1) % checkpoint_every == 0.
  std::function<void(std::int64_t completed_steps)> on_checkpoint;
};

/// Runs Adam from `start_step` up to cfg.steps (exclusive). Updates model
/// parameters and `adam` in place; returns one record per executed step.
std::vector<StepRecord> train(BpgModel& model, const Dataset& data, const TrainConfig& cfg,
                              AdamState& adam, std::int64_t start_step,
                              const TrainHooks& hooks = {});

std::string loss_curve_csv_header();
std::string loss_curve_csv_row(const StepRecord& r);

}  // namespace bpg::learning
