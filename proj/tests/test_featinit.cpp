#include <random>

#include <gtest/gtest.h>

#include "featinit.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bpg;
using namespace bpg::featinit;
using Eigen::MatrixXd;

namespace {

RunConfig small_config(int d_g = 5, int kernel = 3) {
  auto cfg = RunConfig::defaults();
  cfg.merge_text("k_window = 9\nd_mix = 4\nc1 = 4\nd_t = 6\nd_node = 4\nclamp = 5\nseed = 3\n"
                 "edge_hidden = 5\nd_g = " + std::to_string(d_g) +
                     "\nkernel_size = " + std::to_string(kernel) + "\n",
                 "test", RunConfig::Source::kFlag);
  return cfg;
}

void randomize(ParamStore& store, std::uint64_t seed, double scale,
               const std::string& prefix = "") {
  std::mt19937_64 rng(seed);
  for (auto& p : store) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    p.value = testutil::random(p.value.rows(), p.value.cols(), rng, scale);
  }
}

void zero(ParamStore& store, const std::vector<std::string>& prefixes) {
  for (auto& p : store) {
    for (const auto& pre : prefixes) {
      if (p.name.rfind(pre, 0) == 0) p.value.setZero();
    }
  }
}

SensorFeatureBlock window_features(int K, MotionKind kind = MotionKind::kWalk,
                                   std::uint64_t seed = 4) {
  const auto skel = default_skeleton();
  const auto sensors = extract_sensors(synth_generate(kind, K + 5, 60.0, seed), skel);
  return assemble_features(make_windows(sensors, K, 60.0).back());
}

double diff(const MatrixXd& a, const MatrixXd& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Featinit, StaticWindowHasZeroRates) {
  SensorWindow w;
  w.fps = 60.0;
  SensorFrame f;
  for (int s = 0; s < kNumSensors; ++s) {
    f.position[s] = rotmath::Vec3(s, 1, 2);
    f.rotation[s] = rotmath::rot_y(0.3 * s);
  }
  w.frames.assign(5, f);
  const auto block = assemble_features(w);
  EXPECT_EQ(block.position.cols(), 6);
  EXPECT_EQ(block.rotation.cols(), 12);
  EXPECT_EQ(block.position.rows(), 15);
  EXPECT_EQ(block.position.rightCols(3).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index r = 0; r < block.rotation.rows(); ++r) {
    Eigen::RowVectorXd id(6);
    id << 1, 0, 0, 0, 1, 0;
    EXPECT_LT((block.rotation.block(r, 6, 1, 6) - id).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Featinit, UniformTranslationVelocity) {
  SensorWindow w;
  w.fps = 50.0;
  for (int t = 0; t < 6; ++t) {
    SensorFrame f;
    for (int s = 0; s < kNumSensors; ++s) {
      f.position[s] = rotmath::Vec3(t / 50.0, s, 0);
      f.rotation[s] = rotmath::Mat3::Identity();
    }
    w.frames.push_back(f);
  }
  const auto block = assemble_features(w);
  for (Eigen::Index r = 0; r < block.position.rows(); ++r) {
    EXPECT_NEAR(block.position(r, 3), 1.0, 1e-12);
    EXPECT_NEAR(block.position(r, 4), 0.0, 1e-12);
  }
}

TEST(Featinit, DualIsIdentityAtZeroParameters) {
  ParamStore store;
  std::mt19937_64 rng(1);
  const auto dual = DualInteractive::create(store, "d", 4, 3, 5.0, rng);
  for (const auto& p : store) EXPECT_EQ(p.value.cwiseAbs().maxCoeff(), 0.0) << p.name;
  ad::Tape tape;
  const MatrixXd p = testutil::random(12, 4, rng), a = testutil::random(12, 4, rng);
  const auto [p2, a2] = dual(tape, store, tape.constant(p), tape.constant(a), 3);
  EXPECT_EQ(p2.value(), p);
  EXPECT_EQ(a2.value(), a);
}

TEST(Featinit, DualMatchesOracle) {
  ParamStore store;
  std::mt19937_64 rng(2);
  const auto dual = DualInteractive::create(store, "d", 4, 3, 5.0, rng);
  randomize(store, 5, 0.5);
  ad::Tape tape(false);
  const MatrixXd p = testutil::random(15, 4, rng), a = testutil::random(15, 4, rng);
  const auto [p2, a2] = dual(tape, store, tape.constant(p), tape.constant(a), 3);
  const auto [rp, ra] = oracle::dual(store, "d", p, a, 5.0, 3);
  EXPECT_LT(diff(p2.value(), rp), 1e-13);
  EXPECT_LT(diff(a2.value(), ra), 1e-13);
}

TEST(Featinit, DualRejectsShapeMismatch) {
  ParamStore store;
  std::mt19937_64 rng(3);
  const auto dual = DualInteractive::create(store, "d", 4, 3, 5.0, rng);
  ad::Tape tape;
  EXPECT_THROW(dual(tape, store, tape.constant(MatrixXd::Zero(6, 4)),
                    tape.constant(MatrixXd::Zero(9, 4)), 3),
               std::invalid_argument);
}

TEST(Featinit, SciIsIdentityAtZeroParameters) {
  for (int len : {8, 9, 2, 1}) {
    ParamStore store;
    std::mt19937_64 rng(4);
    const auto sci = SciBlock::create(store, "s", 5, 5, 3, 5.0, rng);
    EXPECT_FALSE(sci.projection.has_value());
    ad::Tape tape;
    const MatrixXd x = testutil::random(len, 5, rng);
    EXPECT_EQ(sci(tape, store, tape.constant(x)).value(), x) << len;
  }
}

TEST(Featinit, SciMatchesOracleOnOddAndEvenLengths) {
  for (int len : {7, 8, 11}) {
    ParamStore store;
    std::mt19937_64 rng(5);
    const auto sci = SciBlock::create(store, "s", 4, 6, 3, 5.0, rng);
    randomize(store, 6, 0.5);
    ad::Tape tape(false);
    const MatrixXd x = testutil::random(len, 4, rng);
    const auto out = sci(tape, store, tape.constant(x));
    EXPECT_EQ(out.rows(), len);
    EXPECT_EQ(out.cols(), 6);
    EXPECT_LT(diff(out.value(), oracle::sci(store, "s", x, 5.0)), 1e-13);
  }
}

TEST(Featinit, SciRowsAreIndependentAcrossSamples) {
  ParamStore store;
  std::mt19937_64 rng(6);
  const auto sci = SciBlock::create(store, "s", 3, 3, 3, 5.0, rng);
  randomize(store, 7, 0.5);
  const MatrixXd a = testutil::random(8, 3, rng), b = testutil::random(8, 3, rng);
  ad::Tape tape(false);
  const MatrixXd ya = sci(tape, store, tape.constant(a)).value();
  const MatrixXd yb = sci(tape, store, tape.constant(b)).value();
  EXPECT_EQ(sci(tape, store, tape.constant(b)).value(), yb);
  EXPECT_EQ(sci(tape, store, tape.constant(a)).value(), ya);
}

TEST(Featinit, DownsampleUpsampleInterleave) {
  MatrixXd x(5, 1);
  x << 1, 3, 5, 7, 9;
  ad::Tape tape;
  const auto down = temporal_downsample(tape.constant(x));
  MatrixXd expected(3, 1);
  expected << 2, 6, 9;
  EXPECT_EQ(down.value(), expected);
  const auto up = temporal_upsample(down, 5);
  MatrixXd up_expected(5, 1);
  up_expected << 2, 2, 6, 6, 9;
  EXPECT_EQ(up.value(), up_expected);
  MatrixXd a(1, 2), b(1, 2);
  a << 1, 2;
  b << 10, 20;
  MatrixXd inter(1, 4);
  inter << 1, 10, 2, 20;
  EXPECT_EQ(interleave_channels(tape.constant(a), tape.constant(b)).value(), inter);
}

TEST(Featinit, PyramidOutputShapeIndependentOfWindow) {
  for (int K : {2, 8, 9, 41}) {
    ParamStore store;
    std::mt19937_64 rng(8);
    const auto pyr = TemporalPyramid::create(store, "p", 6, 4, 7, 3, 5.0, rng);
    ad::Tape tape(false);
    const auto out = pyr(tape, store, tape.constant(testutil::random(K, 6, rng)));
    EXPECT_EQ(out.rows(), 1);
    EXPECT_EQ(out.cols(), 7);
  }
}

TEST(Featinit, PyramidMatchesOracle) {
  ParamStore store;
  std::mt19937_64 rng(9);
  const auto pyr = TemporalPyramid::create(store, "p", 6, 4, 7, 3, 5.0, rng);
  randomize(store, 10, 0.4);
  for (int K : {8, 9}) {
    const MatrixXd x = testutil::random(K, 6, rng);
    ad::Tape tape(false);
    EXPECT_LT(diff(pyr(tape, store, tape.constant(x)).value(), oracle::pyramid(store, "p", x, 5.0)),
              1e-12);
  }
}

// Frame and clip extractors share parameter values. The even/odd split only
// keeps a constant sequence constant when both halves see the same update, so
// the random case ties psi to phi and eta to -rho with kernel 1.
TEST(Featinit, ConstantInputGivesEqualFrameAndClipFeatures) {
  for (int kernel : {1, 3}) {
    ParamStore store;
    std::mt19937_64 rng(11);
    const auto pyr = TemporalPyramid::create(store, "p", 6, 4, 7, kernel, 5.0, rng);
    if (kernel == 1) {
      randomize(store, 12, 0.5, "p.frame");
      for (auto& p : store) {
        if (p.name.rfind("p.frame.psi.", 0) == 0) {
          p.value = store.at("p.frame.phi." + p.name.substr(12)).value;
        } else if (p.name.rfind("p.frame.eta.", 0) == 0) {
          p.value = -store.at("p.frame.rho." + p.name.substr(12)).value;
        }
      }
    }
    for (auto& p : store) {
      if (p.name.rfind("p.clip.", 0) == 0) {
        p.value = store.at("p.frame." + p.name.substr(7)).value;
      }
    }
    for (int K : {8, 9}) {
      const MatrixXd x = MatrixXd::Ones(K, 1) * testutil::random(1, 6, rng);
      ad::Tape tape(false);
      const auto xc = tape.constant(x);
      const auto frame = pyr.frame_level(tape, store, xc);
      const auto clip = temporal_upsample(pyr.clip_level(tape, store, temporal_downsample(xc)), K);
      EXPECT_LT(diff(frame.value(), clip.value()), 1e-14) << "kernel " << kernel << " K " << K;
      const MatrixXd inter = interleave_channels(frame, clip).value();
      for (Eigen::Index c = 0; c < inter.cols(); c += 2) {
        EXPECT_LT((inter.col(c) - inter.col(c + 1)).cwiseAbs().maxCoeff(), 1e-14);
      }
    }
  }
}

TEST(Featinit, SpatialLeavesTrunkUnchanged) {
  ParamStore store;
  std::mt19937_64 rng(13);
  const auto sp = SpatialSplit::create(store, "s", 6, 6, 5.0, rng);
  EXPECT_FALSE(sp.trunk_projection.has_value());
  const MatrixXd t = testutil::random(1, 6, rng), l = testutil::random(1, 6, rng);
  {
    ad::Tape tape;
    const auto [t2, l2] = sp(tape, store, tape.constant(t), tape.constant(l));
    EXPECT_EQ(t2.value(), t);
    EXPECT_EQ(l2.value(), l);
  }
  randomize(store, 14, 0.5);
  ad::Tape tape;
  const auto [t2, l2] = sp(tape, store, tape.constant(t), tape.constant(l));
  EXPECT_EQ(t2.value(), t);
  const auto [rt, rl] = oracle::spatial(store, "s", t, l, 5.0);
  EXPECT_LT(diff(l2.value(), rl), 1e-14);
}

TEST(Featinit, SpatialLimbDependsOnTrunk) {
  ParamStore store;
  std::mt19937_64 rng(15);
  const auto sp = SpatialSplit::create(store, "s", 6, 5, 5.0, rng);
  ASSERT_TRUE(sp.trunk_projection.has_value());
  randomize(store, 16, 0.5);
  const MatrixXd t = testutil::random(1, 6, rng), l = testutil::random(1, 6, rng);
  ad::Tape tape(false);
  const auto [t1, l1] = sp(tape, store, tape.constant(t), tape.constant(l));
  MatrixXd t_perturbed = t;
  t_perturbed(0, 2) += 0.1;
  const auto [t2, l2] = sp(tape, store, tape.constant(t_perturbed), tape.constant(l));
  EXPECT_GT((l1.value() - l2.value()).cwiseAbs().maxCoeff(), 1e-6);
  const auto [rt, rl] = oracle::spatial(store, "s", t, l, 5.0);
  EXPECT_LT(diff(t1.value(), rt), 1e-14);
  EXPECT_LT(diff(l1.value(), rl), 1e-14);
}

TEST(Featinit, NodeAssignmentUsesPerNodeMaps) {
  const auto skel = default_skeleton();
  ParamStore store;
  std::mt19937_64 rng(17);
  const auto assign = NodeAssignment::create(store, "a", 5, 4, skel, rng);
  ad::Tape tape(false);
  const MatrixXd t = testutil::random(1, 5, rng), l = testutil::random(1, 5, rng);
  const MatrixXd out = assign(tape, store, tape.constant(t), tape.constant(l)).value();
  ASSERT_EQ(out.rows(), 22);
  ASSERT_EQ(out.cols(), 4);
  EXPECT_GT((out.row(0) - out.row(3)).norm(), 1e-6);
  EXPECT_LT(diff(out, oracle::per_node(store, "a", t, l, skel, 4)), 1e-15);
  const MatrixXd zeros =
      assign(tape, store, tape.constant(MatrixXd::Zero(1, 5)), tape.constant(MatrixXd::Zero(1, 5)))
          .value();
  for (int j = 0; j < 22; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "a.j%02d.b", j);
    EXPECT_EQ(zeros.row(j), store.at(buf).value.row(0));
  }
}

TEST(Featinit, FullStageMatchesOracle) {
  const auto model = BpgModel::create(small_config());
  auto store = model.params();
  randomize(store, 18, 0.3);
  const auto f = window_features(9);
  ad::Tape tape(false);
  const MatrixXd nodes = model.features()(tape, store, f).value();
  const MatrixXd ref = oracle::node_features(store, f.position, f.rotation, 9, 4, 4, 5.0,
                                             model.skeleton());
  EXPECT_LT(diff(nodes, ref), 1e-12);
}

TEST(Featinit, ZeroInteractionEqualsBypassPath) {
  const auto model = BpgModel::create(small_config(6));
  auto store = model.params();
  randomize(store, 19, 0.3);
  zero(store, {"featinit.dual.", "featinit.spatial."});
  const auto f = window_features(9, MotionKind::kKick);
  ad::Tape tape(false);
  const MatrixXd nodes = model.features()(tape, store, f).value();

  // Independent branches: entry maps, sum, two pyramids, per-node maps.
  const MatrixXd p = oracle::conv(store, "featinit.entry_p", f.position, false, 3);
  const MatrixXd a = oracle::conv(store, "featinit.entry_a", f.rotation, false, 3);
  const MatrixXd fused = p + a;
  MatrixXd seq(9, 12);
  for (int s = 0; s < 3; ++s) seq.block(0, 4 * s, 9, 4) = fused.block(9 * s, 0, 9, 4);
  const MatrixXd trunk = oracle::pyramid(store, "featinit.pyr_trunk", seq, 5.0);
  const MatrixXd limb = oracle::pyramid(store, "featinit.pyr_limb", seq, 5.0);
  const MatrixXd bypass = oracle::per_node(store, "featinit.assign", trunk, limb, model.skeleton(), 4);
  EXPECT_LT(diff(nodes, bypass), 1e-12);
}

TEST(Featinit, DeterministicAndFiniteUnderFuzz) {
  const auto model = BpgModel::create(small_config());
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    SensorFeatureBlock f;
    f.frames = 9;
    f.position = testutil::random(27, 6, rng, std::abs(u(rng)));
    f.rotation = testutil::random(27, 12, rng, std::abs(u(rng)));
    ad::Tape tape(false);
    const MatrixXd out = model.features()(tape, model.params(), f).value();
    ASSERT_TRUE(out.allFinite()) << "window " << i;
    if (i % 1000 == 0) {
      ad::Tape again(false);
      EXPECT_EQ(model.features()(again, model.params(), f).value(), out);
    }
  }
}

TEST(Featinit, RejectsWrongWindowLength) {
  const auto model = BpgModel::create(small_config());
  ad::Tape tape(false);
  EXPECT_THROW(model.features()(tape, model.params(), window_features(8)), std::invalid_argument);
}
