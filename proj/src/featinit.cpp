#include "featinit.hpp"

#include <stdexcept>

namespace bpg::featinit {

using ad::Var;

SensorFeatureBlock assemble_features(const SensorWindow& w) {
  const int K = static_cast<int>(w.frames.size());
  if (K < 2) throw std::invalid_argument("assemble_features: window needs at least 2 frames");
  SensorFeatureBlock f;
  f.frames = K;
  f.position.resize(kNumSensors * K, kPositionChannels);
  f.rotation.resize(kNumSensors * K, kRotationChannels);
  for (int s = 0; s < kNumSensors; ++s) {
    for (int t = 0; t < K; ++t) {
      // The first frame has no predecessor and reuses the second frame's rates.
      const int cur = t == 0 ? 1 : t;
      const auto& prev_frame = w.frames[cur - 1];
      const auto& cur_frame = w.frames[cur];
      const int row = s * K + t;
      f.position.block<1, 3>(row, 0) = w.frames[t].position[s].transpose();
      f.position.block<1, 3>(row, 3) =
          finite_diff_velocity(prev_frame.position[s], cur_frame.position[s], w.fps).transpose();
      f.rotation.block<1, 6>(row, 0) = rotmath::matrix_to_sixd(w.frames[t].rotation[s]).transpose();
      f.rotation.block<1, 6>(row, 6) =
          rotmath::angular_velocity_sixd(prev_frame.rotation[s], cur_frame.rotation[s]).transpose();
    }
  }
  return f;
}

DualInteractive DualInteractive::create(ParamStore& store, const std::string& name, int width,
                                        int kernel, double clamp, std::mt19937_64& rng) {
  auto map = [&](const char* m) {
    return Conv1d::create(store, name + "." + m, blocks::kFeatureIntegration, width, width,
                          kernel, ad::Padding::kSame, Init::kZero, rng);
  };
  DualInteractive d;
  d.phi = map("phi");
  d.psi = map("psi");
  d.rho = map("rho");
  d.eta = map("eta");
  d.clamp = clamp;
  return d;
}

std::pair<Var, Var> DualInteractive::operator()(ad::Tape& tape, const ParamStore& store,
                                                const Var& p, const Var& a, int segments) const {
  if (p.rows() != a.rows() || p.cols() != a.cols()) {
    throw std::invalid_argument("dual_interactive: streams must have equal shape");
  }
  const Var gate_a = gated_exp(phi(tape, store, a, segments), clamp);
  const Var gate_p = gated_exp(psi(tape, store, p, segments), clamp);
  const Var p_gated = ad::mul(p, gate_a);
  const Var a_gated = ad::mul(a, gate_p);
  const Var p_out = ad::sub(p_gated, rho(tape, store, a_gated, segments));
  const Var a_out = ad::add(a_gated, eta(tape, store, p_gated, segments));
  return {p_out, a_out};
}

SciBlock SciBlock::create(ParamStore& store, const std::string& name, int in, int out,
                          int kernel, double clamp, std::mt19937_64& rng) {
  auto map = [&](const char* m) {
    return Conv1d::create(store, name + "." + m, blocks::kSciBlock, in, in, kernel,
                          ad::Padding::kSame, Init::kZero, rng);
  };
  SciBlock b;
  b.in = in;
  b.out = out;
  b.phi = map("phi");
  b.psi = map("psi");
  b.rho = map("rho");
  b.eta = map("eta");
  if (out != in) {
    b.projection = Conv1d::create(store, name + ".proj", blocks::kSciBlock, in, out, 1,
                                  ad::Padding::kSame, Init::kUniform, rng);
  }
  b.clamp = clamp;
  return b;
}

Var SciBlock::operator()(ad::Tape& tape, const ParamStore& store, const Var& x) const {
  if (x.cols() != in) throw std::invalid_argument("sci_block: channel mismatch");
  const int len = static_cast<int>(x.rows());
  const int half = (len + 1) / 2;
  std::vector<int> even_idx(half);
  std::vector<int> odd_idx(half);
  for (int i = 0; i < half; ++i) {
    even_idx[i] = 2 * i;
    odd_idx[i] = std::min(2 * i + 1, len - 1);  // odd length: repeat the last frame
  }
  const Var even = ad::gather_rows(x, even_idx);
  const Var odd = ad::gather_rows(x, odd_idx);

  const Var odd_1 = ad::mul(odd, gated_exp(phi(tape, store, even), clamp));
  const Var even_1 = ad::mul(even, gated_exp(psi(tape, store, odd), clamp));
  const Var odd_2 = ad::add(odd_1, rho(tape, store, even_1));
  const Var even_2 = ad::sub(even_1, eta(tape, store, odd_1));

  // Rows of vstack(even_2, odd_2): even i at i, odd i at half + i.
  std::vector<int> order(len);
  for (int t = 0; t < len; ++t) order[t] = t % 2 == 0 ? t / 2 : half + t / 2;
  const Var merged = ad::gather_rows(ad::vstack({even_2, odd_2}), order);
  return projection ? (*projection)(tape, store, merged) : merged;
}

Var temporal_downsample(const Var& x) {
  const int len = static_cast<int>(x.rows());
  const int half = (len + 1) / 2;
  std::vector<int> a(half);
  std::vector<int> b(half);
  for (int i = 0; i < half; ++i) {
    a[i] = 2 * i;
    b[i] = std::min(2 * i + 1, len - 1);
  }
  return ad::scale(ad::add(ad::gather_rows(x, a), ad::gather_rows(x, b)), 0.5);
}

Var temporal_upsample(const Var& x, Eigen::Index frames) {
  std::vector<int> idx(frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    idx[t] = static_cast<int>(std::min<Eigen::Index>(t / 2, x.rows() - 1));
  }
  return ad::gather_rows(x, idx);
}

Var interleave_channels(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("interleave_channels: width mismatch");
  const int c = static_cast<int>(a.cols());
  std::vector<int> idx(2 * c);
  for (int i = 0; i < c; ++i) {
    idx[2 * i] = i;
    idx[2 * i + 1] = c + i;
  }
  return ad::gather_cols(ad::hstack({a, b}), idx);
}

TemporalPyramid TemporalPyramid::create(ParamStore& store, const std::string& name, int in,
                                        int c1, int d_t, int kernel, double clamp,
                                        std::mt19937_64& rng) {
  TemporalPyramid p;
  p.frame_level = SciBlock::create(store, name + ".frame", in, c1, kernel, clamp, rng);
  p.clip_level = SciBlock::create(store, name + ".clip", in, c1, kernel, clamp, rng);
  p.fusion = SciBlock::create(store, name + ".fusion", 2 * c1, 2 * c1, kernel, clamp, rng);
  p.aggregate = Conv1d::create(store, name + ".aggregate", blocks::kTemporalPyramid, 2 * c1, d_t,
                               kernel, ad::Padding::kCausal, Init::kUniform, rng);
  return p;
}

Var TemporalPyramid::operator()(ad::Tape& tape, const ParamStore& store, const Var& x) const {
  const Eigen::Index len = x.rows();
  const Var frame = frame_level(tape, store, x);
  const Var clip = temporal_upsample(clip_level(tape, store, temporal_downsample(x)), len);
  const Var fused = fusion(tape, store, interleave_channels(frame, clip));

  // Causal convolution evaluated only at the last frame: the im2col row for
  // t = len-1 is the last `kernel` frames flattened in time order.
  const int k = aggregate.kernel;
  std::vector<int> taps(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::Index src = len - k + i;
    taps[i] = src < 0 ? -1 : static_cast<int>(src);
  }
  const Var last = ad::reshape(ad::gather_rows(fused, taps), 1, k * fused.cols());
  const Var w = tape.external(store.at(aggregate.weight_name()).value);
  const Var b = tape.external(store.at(aggregate.bias_name()).value);
  return ad::add_row(ad::matmul(last, w), b);
}

SpatialSplit SpatialSplit::create(ParamStore& store, const std::string& name, int d_t, int d_g,
                                  double clamp, std::mt19937_64& rng) {
  SpatialSplit s;
  if (d_t != d_g) {
    s.trunk_projection = Conv1d::create(store, name + ".trunk_proj", blocks::kSpatialSplit, d_t,
                                        d_g, 1, ad::Padding::kSame, Init::kUniform, rng);
    s.limb_projection = Conv1d::create(store, name + ".limb_proj", blocks::kSpatialSplit, d_t,
                                       d_g, 1, ad::Padding::kSame, Init::kUniform, rng);
  }
  auto map = [&](const char* m) {
    return Conv1d::create(store, name + "." + m, blocks::kSpatialSplit, d_g, d_g, 1,
                          ad::Padding::kSame, Init::kZero, rng);
  };
  s.phi = map("phi");
  s.psi = map("psi");
  s.rho = map("rho");
  s.clamp = clamp;
  return s;
}

std::pair<Var, Var> SpatialSplit::operator()(ad::Tape& tape, const ParamStore& store,
                                             const Var& trunk, const Var& limb) const {
  if (trunk.rows() != limb.rows() || trunk.cols() != limb.cols()) {
    throw std::invalid_argument("spatial_split: trunk/limb features differ in shape");
  }
  const Var t = trunk_projection ? (*trunk_projection)(tape, store, trunk) : trunk;
  const Var l = limb_projection ? (*limb_projection)(tape, store, limb) : limb;
  const Var l_gated = ad::mul(l, gated_exp(phi(tape, store, t), clamp));
  const Var t_gated = ad::mul(t, gated_exp(psi(tape, store, l), clamp));
  return {t, ad::add(l_gated, rho(tape, store, t_gated))};
}

NodeAssignment NodeAssignment::create(ParamStore& store, const std::string& name, int d_g,
                                      int d_node, const SkeletonModel& skel,
                                      std::mt19937_64& rng) {
  NodeAssignment a;
  for (int j = 0; j < kNumJoints; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), ".j%02d", j);
    a.node_maps.push_back(Conv1d::create(store, name + buf, blocks::kNodeAssignment, d_g, d_node,
                                         1, ad::Padding::kSame, Init::kUniform, rng));
    a.is_trunk.push_back(skel.is_trunk(j));
  }
  return a;
}

Var NodeAssignment::operator()(ad::Tape& tape, const ParamStore& store, const Var& trunk,
                               const Var& limb) const {
  std::vector<Var> rows;
  rows.reserve(node_maps.size());
  for (std::size_t j = 0; j < node_maps.size(); ++j) {
    rows.push_back(node_maps[j](tape, store, is_trunk[j] ? trunk : limb));
  }
  return ad::vstack(rows);
}

FeatureInitializer FeatureInitializer::create(ParamStore& store, const ModelConfig& cfg,
                                              const SkeletonModel& skel, std::mt19937_64& rng) {
  FeatureInitializer f;
  f.frames = cfg.k_window;
  f.d_mix = cfg.d_mix;
  const int k = cfg.kernel_size;
  f.entry_position = Conv1d::create(store, "featinit.entry_p", blocks::kFeatureIntegration,
                                    kPositionChannels, cfg.d_mix, k, ad::Padding::kSame,
                                    Init::kUniform, rng);
  f.entry_rotation = Conv1d::create(store, "featinit.entry_a", blocks::kFeatureIntegration,
                                    kRotationChannels, cfg.d_mix, k, ad::Padding::kSame,
                                    Init::kUniform, rng);
  f.dual = DualInteractive::create(store, "featinit.dual", cfg.d_mix, k, cfg.clamp, rng);
  const int seq_width = kNumSensors * cfg.d_mix;
  f.trunk_pyramid = TemporalPyramid::create(store, "featinit.pyr_trunk", seq_width, cfg.c1,
                                            cfg.d_t, k, cfg.clamp, rng);
  f.limb_pyramid = TemporalPyramid::create(store, "featinit.pyr_limb", seq_width, cfg.c1,
                                           cfg.d_t, k, cfg.clamp, rng);
  f.spatial = SpatialSplit::create(store, "featinit.spatial", cfg.d_t, cfg.d_g, cfg.clamp, rng);
  f.assign = NodeAssignment::create(store, "featinit.assign", cfg.d_g, cfg.d_node, skel, rng);
  return f;
}

Var FeatureInitializer::fused_sequence(ad::Tape& tape, const ParamStore& store,
                                       const SensorFeatureBlock& f) const {
  if (f.frames != frames) {
    throw std::invalid_argument("featinit: window has " + std::to_string(f.frames) +
                                " frames, model expects " + std::to_string(frames));
  }
  const Var p = entry_position(tape, store, tape.constant(f.position), kNumSensors);
  const Var a = entry_rotation(tape, store, tape.constant(f.rotation), kNumSensors);
  const auto [p2, a2] = dual(tape, store, p, a, kNumSensors);
  const Var fused = ad::add(p2, a2);
  std::vector<Var> per_sensor;
  for (int s = 0; s < kNumSensors; ++s) {
    per_sensor.push_back(ad::block(fused, s * frames, 0, frames, d_mix));
  }
  return ad::hstack(per_sensor);
}

Var FeatureInitializer::operator()(ad::Tape& tape, const ParamStore& store,
                                   const SensorFeatureBlock& f) const {
  const Var seq = fused_sequence(tape, store, f);
  const Var trunk = trunk_pyramid(tape, store, seq);
  const Var limb = limb_pyramid(tape, store, seq);
  const auto [t, l] = spatial(tape, store, trunk, limb);
  return assign(tape, store, t, l);
}

}  // namespace bpg::featinit
