#include <set>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "layers.hpp"
#include "model.hpp"

using namespace bpg;
using namespace bpg::gradcheck;

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-6, 0.0), 1e-3);
}

TEST(Gradcheck, EveryBlockPasses) {
  for (const auto& report : check_all()) {
    EXPECT_TRUE(report.pass) << report.to_text();
    EXPECT_LT(report.max_rel_err, 1e-4) << report.block;
    EXPECT_FALSE(report.tensors.empty()) << report.block;
  }
}

TEST(Gradcheck, EveryBlockPassesAtFeatureTolerance) {
  for (const char* block : {"feature_integration", "sci_block", "temporal_pyramid", "edge_mlp"}) {
    Options opt;
    opt.tol = 1e-5;
    const auto report = check_block(block, opt);
    EXPECT_TRUE(report.pass) << report.to_text();
  }
}

TEST(Gradcheck, CorruptedBlockFailsNamingTheParameter) {
  EXPECT_TRUE(is_block("corrupted"));
  const auto report = check_block("corrupted");
  EXPECT_FALSE(report.pass);
  EXPECT_EQ(report.worst, "linear.w");
  EXPECT_NEAR(report.max_rel_err, 0.01 / 1.01, 1e-4);
  const std::string text = report.to_text();
  EXPECT_NE(text.find("FAIL"), std::string::npos);
  EXPECT_NE(text.find("linear.w"), std::string::npos);
}

TEST(Gradcheck, UnknownBlockThrows) {
  EXPECT_FALSE(is_block("nope"));
  EXPECT_THROW(check_block("nope"), std::invalid_argument);
}

TEST(Gradcheck, RegistryCoversEveryParameterBlock) {
  const auto model = BpgModel::create(RunConfig::defaults());
  std::set<std::string> model_blocks;
  for (const auto& p : model.params()) model_blocks.insert(p.block);
  const auto& names = block_names();
  const std::set<std::string> registered(names.begin(), names.end());
  for (const auto& b : model_blocks) EXPECT_TRUE(registered.count(b)) << b;
  for (const char* b : {"loss_rot", "loss_pos", "loss_bone", "full_network", "kinematics"}) {
    EXPECT_TRUE(registered.count(b)) << b;
  }
}

TEST(Gradcheck, ReportsAreReproducible) {
  const auto a = check_block("gcn_layer");
  const auto b = check_block("gcn_layer");
  EXPECT_EQ(a.to_text(), b.to_text());
}
