#include <random>

#include <gtest/gtest.h>

#include "bpgnet.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "grad_util.hpp"

using namespace bpg;
using namespace bpg::bpgnet;
using Eigen::MatrixXd;

namespace {

RunConfig small_config() {
  auto cfg = RunConfig::defaults();
  cfg.merge_text("k_window = 9\nd_mix = 4\nc1 = 4\nd_t = 6\nd_g = 6\nd_node = 5\nclamp = 5\n"
                 "kernel_size = 3\nseed = 5\nedge_hidden = 6\n",
                 "test", RunConfig::Source::kFlag);
  return cfg;
}

featinit::SensorFeatureBlock features(std::uint64_t seed) {
  const auto skel = default_skeleton();
  const auto sensors = extract_sensors(synth_generate(MotionKind::kWalk, 12, 60.0, seed), skel);
  return featinit::assemble_features(make_windows(sensors, 9, 60.0).back());
}

}  // namespace

TEST(Bpgnet, StaticAdjacencyIsSymmetricOnSkeleton) {
  const auto skel = default_skeleton();
  const MatrixXd a = static_adjacency(skel);
  EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  const MatrixXd mask = skeleton_adjacency(skel);
  EXPECT_EQ(mask.sum(), 22 + 42);
  for (int i = 0; i < 22; ++i) {
    for (int j = 0; j < 22; ++j) {
      EXPECT_EQ(a(i, j) != 0.0, mask(i, j) != 0.0) << i << "," << j;
    }
  }
  EXPECT_LT((a - oracle::normalized_adjacency(skel)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bpgnet, EdgeMlpZeroOutputLayerGivesZeroMatrix) {
  const auto skel = default_skeleton();
  ParamStore store;
  std::mt19937_64 rng(1);
  const auto mlp = EdgeMlp::create(store, "e", EdgeMlp::Kind::kSkeleton, 4, 6, skel, rng);
  store.at(mlp.w1()).value.setZero();
  store.at(mlp.b1()).value.setZero();
  ad::Tape tape;
  const auto out = mlp(tape, store, tape.constant(testutil::random(22, 4, rng)));
  EXPECT_EQ(out.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Bpgnet, DynamicSkeletonEdgesFollowBones) {
  const auto skel = default_skeleton();
  ParamStore store;
  std::mt19937_64 rng(2);
  const auto mlp = EdgeMlp::create(store, "e", EdgeMlp::Kind::kSkeleton, 4, 6, skel, rng);
  EXPECT_EQ(mlp.outputs(), 21);
  ad::Tape tape;
  const MatrixXd a = mlp(tape, store, tape.constant(testutil::random(22, 4, rng))).value();
  const MatrixXd mask = skeleton_adjacency(skel);
  int off_diag = 0;
  for (int i = 0; i < 22; ++i) {
    for (int j = 0; j < 22; ++j) {
      if (a(i, j) != 0.0) {
        EXPECT_NE(mask(i, j), 0.0);
        if (i != j) ++off_diag;
      }
    }
  }
  EXPECT_EQ(off_diag, 42);
  EXPECT_EQ(a, a.transpose());
}

TEST(Bpgnet, LatentEdgesAreSymmetricAndDense) {
  const auto skel = default_skeleton();
  ParamStore store;
  std::mt19937_64 rng(3);
  const auto mlp = EdgeMlp::create(store, "e", EdgeMlp::Kind::kLatent, 4, 6, skel, rng);
  EXPECT_EQ(mlp.outputs(), 22 * 23 / 2);
  ad::Tape tape;
  const MatrixXd a = mlp(tape, store, tape.constant(testutil::random(22, 4, rng))).value();
  EXPECT_EQ(a, a.transpose());
  EXPECT_GT((a.array() != 0.0).count(), 400);
}

TEST(Bpgnet, ComposeIsElementwiseSum) {
  std::mt19937_64 rng(4);
  const MatrixXd a = testutil::random(22, 22, rng), b = testutil::random(22, 22, rng),
                 c = testutil::random(22, 22, rng);
  ad::Tape tape;
  const MatrixXd h = compose_adjacency(tape.constant(a), tape.constant(b), tape.constant(c)).value();
  for (int i = 0; i < 22; ++i) {
    for (int j = 0; j < 22; ++j) EXPECT_EQ(h(i, j), (a(i, j) + b(i, j)) + c(i, j));
  }
}

TEST(Bpgnet, GcnLayerIdentityAndHandOracle) {
  std::mt19937_64 rng(5);
  ad::Tape tape;
  const MatrixXd x = testutil::random(22, 4, rng).cwiseAbs();
  const auto xi = tape.constant(x);
  const auto id22 = tape.constant(MatrixXd::Identity(22, 22));
  const auto id4 = tape.constant(MatrixXd::Identity(4, 4));
  EXPECT_EQ(gcn_layer(xi, id22, id4, 0.2, false).value(), x);

  // Three-node toy graph: node i's pre-activation is sum_j a_ij (XW)_j.
  MatrixXd a(3, 3), t(3, 2), w(2, 2);
  a << 1, 0.5, 0, 0.5, 1, 0.25, 0, 0.25, 1;
  t << 1, -2, 0.5, 1, -1, 3;
  w << 1, 2, -1, 0.5;
  const MatrixXd out =
      gcn_layer(tape.constant(t), tape.constant(a), tape.constant(w), 0.2, false).value();
  const MatrixXd xw = t * w;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 2; ++c) {
      double pre = 0.0;
      for (int j = 0; j < 3; ++j) pre += a(i, j) * xw(j, c);
      EXPECT_NEAR(out(i, c), pre > 0 ? pre : 0.2 * pre, 1e-15);
    }
  }
  const MatrixXd zero_a =
      gcn_layer(tape.constant(t), tape.constant(MatrixXd::Zero(3, 3)), tape.constant(w), 0.2, true)
          .value();
  EXPECT_EQ(zero_a, t);
}

TEST(Bpgnet, AdjacencyInvariantsAcrossForwardPasses) {
  const auto model = BpgModel::create(small_config());
  const MatrixXd mask = skeleton_adjacency(model.skeleton());
  std::mt19937_64 rng(6);
  for (int pass = 0; pass < 50; ++pass) {
    auto f = features(pass);
    f.position += testutil::random(f.position.rows(), f.position.cols(), rng, 0.1);
    ad::Tape tape(false);
    std::vector<AdjacencySet> trace;
    model.forward(tape, f, rotmath::Vec3::Zero(), &trace);
    ASSERT_EQ(trace.size(), 3u);
    for (const auto& s : trace) {
      EXPECT_EQ(s.a_ss, s.a_ss.transpose());
      EXPECT_LT((s.a_h - (s.a_ss + s.a_ds + s.a_l)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_EQ(s.a_ds, s.a_ds.transpose());
      EXPECT_EQ(s.a_l, s.a_l.transpose());
      EXPECT_EQ(((s.a_ds.array() != 0.0) && (mask.array() == 0.0)).count(), 0);
    }
  }
}

TEST(Bpgnet, ZeroEdgeMlpsReduceToVanillaGcn) {
  auto model = BpgModel::create(small_config());
  for (auto& p : model.params()) {
    if (p.block == blocks::kEdgeMlp) p.value.setZero();
  }
  const auto f = features(7);
  ad::Tape tape(false);
  const auto out = model.forward(tape, f, rotmath::Vec3::Zero());
  const MatrixXd ref = oracle::vanilla_gcn(model.params(), out.node_features.value(), 3, 0.2, true,
                                           model.skeleton());
  EXPECT_LT((out.axis_angles.value() - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bpgnet, DifferentiableFkMatchesFk) {
  const auto skel = default_skeleton();
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const MatrixXd local = testutil::random(22, 3, rng, 1.2);
    const MatrixXd root = testutil::random(1, 3, rng);
    ad::Tape tape;
    const auto fk = diff_forward_kinematics(tape, tape.constant(local), tape.constant(root), skel);
    LocalRotations lr;
    for (int j = 0; j < 22; ++j) lr[j] = local.row(j).transpose();
    const auto ref = forward_kinematics(lr, root.row(0).transpose(), skel);
    for (int j = 0; j < 22; ++j) {
      EXPECT_LT((fk.positions.value().row(j).transpose() - ref.positions[j]).norm(), 1e-13);
      EXPECT_LT((fk.global_rot[j].value() - ref.global_rot[j]).cwiseAbs().maxCoeff(), 1e-13);
    }
  }
}

TEST(Bpgnet, DifferentiableFkGradient) {
  const auto skel = default_skeleton();
  std::mt19937_64 rng(9);
  const MatrixXd local = testutil::random(22, 3, rng, 1.0);
  const double err = testutil::op_grad_error(
      [&](const ad::Var& v) {
        return diff_forward_kinematics(*v.tape(), v, v.tape()->constant(MatrixXd::Zero(1, 3)), skel)
            .positions;
      },
      local);
  EXPECT_LT(err, 1e-6);
}

TEST(Bpgnet, HeadAlignsToHeadset) {
  const auto model = BpgModel::create(small_config());
  const rotmath::Vec3 head(0.3, 1.7, -0.4);
  ad::Tape tape(false);
  const auto out = model.forward(tape, features(3), head);
  EXPECT_LT((out.positions.value().row(kHeadJoint).transpose() - head).norm(), 1e-15);
  const auto pose = model.to_pose(out);
  const auto fk = forward_kinematics(pose.local_rot, pose.root_translation, model.skeleton());
  for (int j = 0; j < 22; ++j) EXPECT_LT((fk.positions[j] - pose.positions[j]).norm(), 1e-14);
}

TEST(Bpgnet, ForwardIsDeterministic) {
  const auto model = BpgModel::create(small_config());
  const auto f = features(4);
  ad::Tape t1(false), t2(false);
  EXPECT_EQ(model.forward(t1, f, rotmath::Vec3::Ones()).positions.value(),
            model.forward(t2, f, rotmath::Vec3::Ones()).positions.value());
  const auto again = BpgModel::create(small_config());
  ad::Tape t3(false);
  EXPECT_EQ(again.forward(t3, f, rotmath::Vec3::Ones()).positions.value(),
            model.forward(t1, f, rotmath::Vec3::Ones()).positions.value());
}

TEST(Bpgnet, CheckpointRoundTripPreservesModel) {
  const auto model = BpgModel::create(small_config());
  const auto ck = model.to_checkpoint(17);
  const auto back = BpgModel::from_checkpoint(ck);
  ASSERT_EQ(back.params().size(), model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    EXPECT_EQ(back.params()[i].name, model.params()[i].name);
    EXPECT_EQ(back.params()[i].value, model.params()[i].value);
  }
  EXPECT_EQ(back.run_config().echo(false), model.run_config().echo(false));
}

TEST(Bpgnet, ModelKeysAreFixedAfterCreation) {
  auto model = BpgModel::create(small_config());
  EXPECT_NO_THROW(model.set_train_key("lr", "0.01", RunConfig::Source::kFlag));
  EXPECT_EQ(model.run_config().get("lr"), "0.01");
  EXPECT_THROW(model.set_train_key("d_node", "8", RunConfig::Source::kFlag), ConfigError);
  EXPECT_THROW(model.set_train_key("lr", "-1", RunConfig::Source::kFlag), ConfigError);
}
