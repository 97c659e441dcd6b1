#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rotmath.hpp"

using namespace bpg::rotmath;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_axis_angle(std::mt19937_64& rng, double lo, double hi) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Vec3 axis(n(rng), n(rng), n(rng));
  return axis.normalized() * u(rng);
}

}  // namespace

TEST(Rotmath, ZeroIsIdentity) {
  EXPECT_EQ(axis_angle_to_matrix(Vec3::Zero()), Mat3::Identity());
  EXPECT_EQ(matrix_to_axis_angle(Mat3::Identity()), Vec3::Zero());
}

TEST(Rotmath, QuarterTurnAboutZ) {
  const Mat3 r = axis_angle_to_matrix(Vec3(0, 0, kPi / 2));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((r * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-15);
}

TEST(Rotmath, MatchesQuaternionOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_axis_angle(rng, 0.0, kPi);
    const Mat3 expected = oracle::to_matrix(oracle::from_axis_angle(a));
    EXPECT_LT((axis_angle_to_matrix(a) - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Rotmath, LogMatchesQuaternionOracle) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_axis_angle(rng, 1e-6, kPi - 1e-3);
    const Mat3 r = oracle::to_matrix(oracle::from_axis_angle(a));
    const Vec3 expected = oracle::to_axis_angle(oracle::from_matrix(r));
    EXPECT_LT((matrix_to_axis_angle(r) - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rotmath, OutputIsProperRotation) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = axis_angle_to_matrix(random_axis_angle(rng, 0.0, 3 * kPi));
    EXPECT_TRUE(is_rotation(r, 1e-12));
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Rotmath, RoundTripAcrossRange) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = random_axis_angle(rng, 1e-6, kPi - 1e-3);
    EXPECT_LT((matrix_to_axis_angle(axis_angle_to_matrix(a)) - a).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Rotmath, TinyAnglesUseSeriesWithoutLoss) {
  for (double theta : {0.0, 1e-12, 1e-9, 5e-8, 9.9e-8, 1e-7, 2e-7, 1e-5}) {
    const Vec3 a = Vec3(1, -2, 0.5).normalized() * theta;
    const Mat3 r = axis_angle_to_matrix(a);
    const Mat3 expected = oracle::to_matrix(oracle::from_axis_angle(a));
    EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-15) << theta;
    EXPECT_LT((matrix_to_axis_angle(r) - a).norm(), 1e-15 + 1e-9 * theta) << theta;
  }
}

TEST(Rotmath, NearPiReturnsValidAxis) {
  for (double eps : {0.0, 1e-9, 1e-6, 1e-4, 1e-3}) {
    const Vec3 axis = Vec3(0.3, -0.5, 0.81).normalized();
    const Mat3 r = axis_angle_to_matrix(axis * (kPi - eps));
    const Vec3 back = matrix_to_axis_angle(r);
    EXPECT_NEAR(back.norm(), kPi - eps, 1e-7) << eps;
    // The axis sign is arbitrary at pi; the rotation itself must agree.
    EXPECT_LT((axis_angle_to_matrix(back) - r).cwiseAbs().maxCoeff(), 1e-7) << eps;
  }
}

TEST(Rotmath, LogRejectsNonRotations) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 2.0;
  EXPECT_THROW(matrix_to_axis_angle(m), std::invalid_argument);
  EXPECT_THROW(matrix_to_axis_angle(-Mat3::Identity()), std::invalid_argument);
}

TEST(Rotmath, NonFiniteInputThrows) {
  EXPECT_THROW(axis_angle_to_matrix(Vec3(std::nan(""), 0, 0)), std::invalid_argument);
  EXPECT_THROW(axis_angle_to_matrix(Vec3(INFINITY, 0, 0)), std::invalid_argument);
}

TEST(Rotmath, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  std::vector<Vec3> points{Vec3::Zero(), Vec3(1e-9, -2e-9, 0), Vec3(3e-4, 1e-4, -2e-4)};
  for (int i = 0; i < 50; ++i) points.push_back(random_axis_angle(rng, 0.0, 3.0));
  for (const Vec3& a : points) {
    const auto jac = axis_angle_jacobian(a);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      Vec3 ap = a, am = a;
      ap[k] += h;
      am[k] -= h;
      const Mat3 fd = (axis_angle_to_matrix(ap) - axis_angle_to_matrix(am)) / (2 * h);
      EXPECT_LT((jac[k] - fd).cwiseAbs().maxCoeff(), 1e-8) << a.transpose() << " k=" << k;
    }
  }
}

TEST(Rotmath, GeodesicDistance) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = axis_angle_to_matrix(random_axis_angle(rng, 0.0, kPi));
    EXPECT_EQ(geodesic_deg(r, r), 0.0);
    const double theta = std::uniform_real_distribution<double>(0.0, kPi)(rng);
    const Mat3 q = r * axis_angle_to_matrix(Vec3(0, theta, 0));
    EXPECT_NEAR(geodesic_deg(r, q), theta * 180.0 / kPi, 1e-9);
    EXPECT_NEAR(geodesic_deg(r, q), geodesic_deg(q, r), 1e-12);
  }
  EXPECT_NEAR(geodesic_deg(Mat3::Identity(), rot_x(kPi)), 180.0, 1e-9);
}

TEST(Rotmath, SixDIsFirstTwoRows) {
  const Mat3 r = rot_z(0.4) * rot_x(-1.1);
  const SixD s = matrix_to_sixd(r);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(s[c], r(0, c));
    EXPECT_EQ(s[3 + c], r(1, c));
  }
  const SixD w = angular_velocity_sixd(r, r);
  EXPECT_LT((w - matrix_to_sixd(Mat3::Identity())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rotmath, ElementaryRotations) {
  EXPECT_LT((rot_x(0.3) - axis_angle_to_matrix(Vec3(0.3, 0, 0))).norm(), 1e-15);
  EXPECT_LT((rot_y(0.3) - axis_angle_to_matrix(Vec3(0, 0.3, 0))).norm(), 1e-15);
  EXPECT_LT((rot_z(0.3) - axis_angle_to_matrix(Vec3(0, 0, 0.3))).norm(), 1e-15);
  EXPECT_EQ(hat(Vec3(1, 2, 3)) * Vec3(4, 5, 6), Vec3(1, 2, 3).cross(Vec3(4, 5, 6)));
}
