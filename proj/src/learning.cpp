#include "learning.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "errors.hpp"
#include "json.hpp"

namespace bpg::learning {

using ad::Var;
using rotmath::Vec3;

// ---------------------------------------------------------------- losses

double loss_rot(const LocalRotations& pred, const LocalRotations& gt) {
  double s = 0.0;
  for (int j = 0; j < kNumJoints; ++j) s += (pred[j] - gt[j]).cwiseAbs().sum();
  return s / (3.0 * kNumJoints);
}

double loss_pos(const Positions& pred, const Positions& gt) {
  double s = 0.0;
  for (int j = 0; j < kNumJoints; ++j) s += (pred[j] - gt[j]).cwiseAbs().sum();
  return s / (3.0 * kNumJoints);
}

double loss_bone(const Positions& pred, const SkeletonModel& skel) {
  const auto left = bone_lengths(pred, skel.left_bones);
  const auto right = bone_lengths(pred, skel.right_bones);
  double s = 0.0;
  for (std::size_t i = 0; i < left.size(); ++i) s += std::abs(left[i] - right[i]);
  return s;
}

LossBreakdown total_loss(const PoseEstimate& pred, const PoseEstimate& gt,
                         const SkeletonModel& skel, const LossWeights& w) {
  LossBreakdown b;
  b.l_rot = w.rot * loss_rot(pred.local_rot, gt.local_rot);
  b.l_pos = w.pos * loss_pos(pred.positions, gt.positions);
  b.l_bone = w.bone * loss_bone(pred.positions, skel);
  b.l_total = b.l_rot + b.l_pos + b.l_bone;
  return b;
}

Matrix to_matrix(const Positions& p) {
  Matrix m(kNumJoints, 3);
  for (int j = 0; j < kNumJoints; ++j) m.row(j) = p[j].transpose();
  return m;
}

Var loss_rot(const Var& pred, const Matrix& gt) {
  return ad::mean(ad::abs(ad::sub(pred, pred.tape()->constant(gt))));
}

Var loss_pos(const Var& pred, const Matrix& gt) {
  return ad::mean(ad::abs(ad::sub(pred, pred.tape()->constant(gt))));
}

Var loss_bone(const Var& pred, const SkeletonModel& skel) {
  auto length = [&](const Bone& b) {
    return ad::norm(ad::sub(ad::block(pred, b.second, 0, 1, 3), ad::block(pred, b.first, 0, 1, 3)));
  };
  std::vector<Var> terms;
  for (std::size_t i = 0; i < skel.left_bones.size(); ++i) {
    terms.push_back(ad::abs(ad::sub(length(skel.left_bones[i]), length(skel.right_bones[i]))));
  }
  return ad::sum(ad::vstack(terms));
}

LossBreakdown TapeLoss::values() const {
  LossBreakdown b;
  b.l_rot = rot.scalar();
  b.l_pos = pos.scalar();
  b.l_bone = bone.scalar();
  b.l_total = b.l_rot + b.l_pos + b.l_bone;
  return b;
}

TapeLoss total_loss(const Var& pred_axis_angles, const Var& pred_positions,
                    const PoseEstimate& gt, const SkeletonModel& skel, const LossWeights& w) {
  TapeLoss l;
  l.rot = ad::scale(loss_rot(pred_axis_angles, to_matrix(gt.local_rot)), w.rot);
  l.pos = ad::scale(loss_pos(pred_positions, to_matrix(gt.positions)), w.pos);
  l.bone = ad::scale(loss_bone(pred_positions, skel), w.bone);
  l.total = ad::add(ad::add(l.rot, l.pos), l.bone);
  return l;
}

// --------------------------------------------------------------- metrics

MetricReport evaluate(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
                      double fps) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(preds.size()) +
                                " predictions vs " + std::to_string(gts.size()) + " targets");
  }
  if (preds.size() < 2) throw std::invalid_argument("evaluate: need at least 2 frames");
  const std::size_t n = preds.size();
  MetricReport r;
  r.frames = n;
  double rot = 0.0;
  double vel = 0.0;
  std::array<double, kNumJoints> pos{};
  for (std::size_t t = 0; t < n; ++t) {
    // Frame 0 reuses frame 1's backward difference.
    const std::size_t cur = t == 0 ? 1 : t;
    for (int j = 0; j < kNumJoints; ++j) {
      rot += rotmath::geodesic_deg(rotmath::axis_angle_to_matrix(preds[t].local_rot[j]),
                                   rotmath::axis_angle_to_matrix(gts[t].local_rot[j]));
      pos[j] += (preds[t].positions[j] - gts[t].positions[j]).norm();
      const Vec3 vp = finite_diff_velocity(preds[cur - 1].positions[j], preds[cur].positions[j], fps);
      const Vec3 vg = finite_diff_velocity(gts[cur - 1].positions[j], gts[cur].positions[j], fps);
      vel += (vp - vg).norm();
    }
  }
  const double count = static_cast<double>(n) * kNumJoints;
  r.mpjre_deg = rot / count;
  r.mpjve_cm_s = 100.0 * vel / count;
  double pos_total = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    pos_total += pos[j];
    r.per_joint_mpjpe_cm[j] = 100.0 * pos[j] / static_cast<double>(n);
  }
  r.mpjpe_cm = 100.0 * pos_total / count;
  return r;
}

MetricReport merge(std::span<const MetricReport> reports) {
  MetricReport out;
  for (const auto& r : reports) out.frames += r.frames;
  if (out.frames == 0) return out;
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.frames) / static_cast<double>(out.frames);
    out.mpjre_deg += w * r.mpjre_deg;
    out.mpjpe_cm += w * r.mpjpe_cm;
    out.mpjve_cm_s += w * r.mpjve_cm_s;
    for (int j = 0; j < kNumJoints; ++j) out.per_joint_mpjpe_cm[j] += w * r.per_joint_mpjpe_cm[j];
  }
  return out;
}

std::string to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["mpjre_deg"] = r.mpjre_deg;
  j["mpjpe_cm"] = r.mpjpe_cm;
  j["mpjve_cm_s"] = r.mpjve_cm_s;
  j["per_joint_mpjpe_cm"] = r.per_joint_mpjpe_cm;
  j["frames"] = r.frames;
  return j.dump(2) + "\n";
}

std::string to_text(const MetricReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "frames: " << r.frames << '\n';
  out << "mpjre_deg: " << r.mpjre_deg << '\n';
  out << "mpjpe_cm: " << r.mpjpe_cm << '\n';
  out << "mpjve_cm_s: " << r.mpjve_cm_s << '\n';
  for (int j = 0; j < kNumJoints; ++j) {
    out << "mpjpe_cm[" << j << "]: " << r.per_joint_mpjpe_cm[j] << '\n';
  }
  return out.str();
}

void write_metrics_json(const MetricReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << to_json(r);
}

// --------------------------------------------------------------- dataset

Dataset build_dataset(std::span<const MotionSequence> sequences, const SkeletonModel& skel,
                      int window) {
  Dataset d;
  if (!sequences.empty()) d.fps = sequences.front().fps;
  for (const auto& seq : sequences) {
    if (seq.fps != d.fps) throw std::runtime_error("dataset: motion files differ in fps");
    const auto sensors = extract_sensors(seq, skel);
    const auto windows = make_windows(sensors, window, seq.fps);
    if (windows.empty()) continue;
    Clip clip{d.samples.size(), windows.size()};
    for (const auto& w : windows) {
      Sample s;
      s.features = featinit::assemble_features(w);
      s.head_position = w.frames.back().position[0];
      const auto& f = seq.frames[w.target];
      s.target = PoseEstimate::from_local(f.local_rot, f.root_translation, skel);
      d.samples.push_back(std::move(s));
    }
    d.clips.push_back(clip);
  }
  return d;
}

int worker_threads() {
  if (const char* env = std::getenv("BPG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 256);
  }
  return 1;
}

namespace {

// Runs fn(i) for i in [0, n) over `threads` contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (t == 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t per = (n + t - 1) / t;
  for (std::size_t c = 0; c < t; ++c) {
    const std::size_t lo = c * per;
    const std::size_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, c, lo, hi] { fn(c, lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

std::vector<PoseEstimate> predict_all(const BpgModel& model, const Dataset& data) {
  std::vector<PoseEstimate> out(data.samples.size());
  parallel_chunks(data.samples.size(), worker_threads(),
                  [&](std::size_t, std::size_t lo, std::size_t hi) {
                    for (std::size_t i = lo; i < hi; ++i) {
                      ad::Tape tape(false);
                      const auto& s = data.samples[i];
                      out[i] = model.to_pose(model.forward(tape, s.features, s.head_position));
                    }
                  });
  return out;
}

MetricReport evaluate_model(const BpgModel& model, const Dataset& data) {
  const auto preds = predict_all(model, data);
  std::vector<MetricReport> per_clip;
  for (const auto& c : data.clips) {
    if (c.count < 2) continue;
    std::vector<PoseEstimate> gts;
    gts.reserve(c.count);
    for (std::size_t i = 0; i < c.count; ++i) gts.push_back(data.samples[c.first + i].target);
    per_clip.push_back(evaluate(std::span(preds).subspan(c.first, c.count), gts, data.fps));
  }
  if (per_clip.empty()) throw std::runtime_error("evaluate: no motion long enough for two windows");
  return merge(per_clip);
}

// --------------------------------------------------------------- training

NonFiniteLoss::NonFiniteLoss(const std::string& term, std::int64_t step)
    : std::runtime_error("non-finite loss term " + term + " at step " + std::to_string(step)),
      term_(term) {}

AdamState AdamState::zeros(const ParamStore& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

std::vector<std::pair<std::string, Matrix>> AdamState::to_tensors(const ParamStore& params) const {
  std::vector<std::pair<std::string, Matrix>> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back("adam.m/" + params[i].name, m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back("adam.v/" + params[i].name, v[i]);
  return out;
}

AdamState AdamState::from_checkpoint(const Checkpoint& ck, const ParamStore& params) {
  AdamState s = zeros(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix* m = ck.find("adam.m/" + params[i].name);
    const Matrix* v = ck.find("adam.v/" + params[i].name);
    if (!m || !v) continue;
    if (m->rows() != s.m[i].rows() || m->cols() != s.m[i].cols() || v->rows() != s.v[i].rows() ||
        v->cols() != s.v[i].cols()) {
      throw std::runtime_error("checkpoint: optimizer state shape mismatch for " + params[i].name);
    }
    s.m[i] = *m;
    s.v[i] = *v;
  }
  return s;
}

std::vector<std::size_t> batch_indices(std::size_t n_samples, int batch, std::uint64_t seed,
                                       std::int64_t step) {
  if (n_samples == 0) throw std::invalid_argument("batch_indices: empty dataset");
  std::map<std::int64_t, std::vector<std::size_t>> perms;
  auto permutation = [&](std::int64_t epoch) -> const std::vector<std::size_t>& {
    auto it = perms.find(epoch);
    if (it != perms.end()) return it->second;
    std::vector<std::size_t> p(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) p[i] = i;
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
    for (std::size_t i = n_samples; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(p[i - 1], p[pick(rng)]);
    }
    return perms.emplace(epoch, std::move(p)).first->second;
  };
  std::vector<std::size_t> out;
  out.reserve(batch);
  const auto n = static_cast<std::int64_t>(n_samples);
  for (int i = 0; i < batch; ++i) {
    const std::int64_t pos = step * batch + i;
    out.push_back(permutation(pos / n)[static_cast<std::size_t>(pos % n)]);
  }
  return out;
}

namespace {

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.l_rot += b.l_rot;
  a.l_pos += b.l_pos;
  a.l_bone += b.l_bone;
  a.l_total += b.l_total;
  return a;
}

LossBreakdown scaled(LossBreakdown b, double s) {
  b.l_rot *= s;
  b.l_pos *= s;
  b.l_bone *= s;
  b.l_total = b.l_rot + b.l_pos + b.l_bone;
  return b;
}

}  // namespace

BatchGradient batch_gradient(const BpgModel& model, const Dataset& data,
                             std::span<const std::size_t> batch, const LossWeights& w,
                             int threads) {
  const ParamStore& params = model.params();
  const std::size_t n = batch.size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<std::vector<Matrix>> chunk_grads(chunks);
  std::vector<LossBreakdown> losses(n);

  parallel_chunks(n, static_cast<int>(chunks), [&](std::size_t c, std::size_t lo, std::size_t hi) {
    auto& g = chunk_grads[c];
    for (const auto& p : params) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    for (std::size_t i = lo; i < hi; ++i) {
      const Sample& s = data.samples.at(batch[i]);
      ad::Tape tape;
      const auto out = model.forward(tape, s.features, s.head_position);
      const auto loss = total_loss(out.axis_angles, out.positions, s.target, model.skeleton(), w);
      tape.backward(loss.total);
      losses[i] = loss.values();
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (const Matrix* pg = tape.external_grad(params[k].value)) g[k] += *pg;
      }
    }
  });

  BatchGradient out;
  const double inv = 1.0 / static_cast<double>(n);
  for (const auto& l : losses) out.loss += l;
  out.loss = scaled(out.loss, inv);
  out.grads = std::move(chunk_grads[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    if (chunk_grads[c].empty()) continue;
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += chunk_grads[c][k];
  }
  for (auto& g : out.grads) g *= inv;
  return out;
}

LossBreakdown batch_loss(const BpgModel& model, const Dataset& data,
                         std::span<const std::size_t> batch, const LossWeights& w) {
  LossBreakdown total;
  for (std::size_t idx : batch) {
    const Sample& s = data.samples.at(idx);
    ad::Tape tape(false);
    const auto out = model.forward(tape, s.features, s.head_position);
    total += total_loss(out.axis_angles, out.positions, s.target, model.skeleton(), w).values();
  }
  return scaled(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<StepRecord> train(BpgModel& model, const Dataset& data, const TrainConfig& cfg,
                              AdamState& adam, std::int64_t start_step, const TrainHooks& hooks) {
  if (data.samples.empty()) throw std::runtime_error("train: no motion long enough for one window");
  const LossWeights w{cfg.w_rot, cfg.w_pos, cfg.w_bone};
  const int threads = worker_threads();
  ParamStore& params = model.params();
  std::vector<StepRecord> curve;

  for (std::int64_t step = start_step; step < cfg.steps; ++step) {
    const auto batch = batch_indices(data.samples.size(), cfg.batch, cfg.seed, step);
    BatchGradient bg = batch_gradient(model, data, batch, w, threads);
    if (!std::isfinite(bg.loss.l_rot)) throw NonFiniteLoss("l_rot", step);
    if (!std::isfinite(bg.loss.l_pos)) throw NonFiniteLoss("l_pos", step);
    if (!std::isfinite(bg.loss.l_bone)) throw NonFiniteLoss("l_bone", step);

    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Matrix& g = bg.grads[k];
      adam.m[k] = cfg.beta1 * adam.m[k] + (1.0 - cfg.beta1) * g;
      adam.v[k] = cfg.beta2 * adam.v[k] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      params[k].value.array() -=
          cfg.lr * (adam.m[k].array() / c1) / ((adam.v[k].array() / c2).sqrt() + cfg.eps);
    }

    StepRecord rec{step, bg.loss};
    curve.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.on_checkpoint && (step + 1) % cfg.checkpoint_every == 0) hooks.on_checkpoint(step + 1);
  }
  return curve;
}

std::string loss_curve_csv_header() { return "step,l_rot,l_pos,l_bone,l_total\n"; }

std::string loss_curve_csv_row(const StepRecord& r) {
  return std::to_string(r.step) + "," + format_double(r.loss.l_rot) + "," +
         format_double(r.loss.l_pos) + "," + format_double(r.loss.l_bone) + "," +
         format_double(r.loss.l_total) + "\n";
}

}  // namespace bpg::learning
