#include "rotmath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace bpg::rotmath {

namespace {

// sin(t)/t, (1-cos t)/t^2
struct RodriguesCoeffs {
  double a;
  double b;
};

RodriguesCoeffs rodrigues_coeffs(double theta) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0};
  }
  return {std::sin(theta) / theta, (1.0 - std::cos(theta)) / (theta * theta)};
}

// (dA/dtheta)/theta and (dB/dtheta)/theta. The closed forms cancel badly for
// small theta, so the series is used over a wider range than the values above.
RodriguesCoeffs rodrigues_coeff_derivs(double theta) {
  if (theta < 1e-3) {
    const double t2 = theta * theta;
    return {-1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0};
  }
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  const double t2 = theta * theta;
  return {(theta * c - s) / (t2 * theta), (theta * s - 2.0 * (1.0 - c)) / (t2 * t2)};
}

Vec3 vee_skew(const Mat3& M) {
  return {M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1)};
}

}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 K;
  K << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return K;
}

RotMatrix axis_angle_to_matrix(const AxisAngle& a) {
  if (!a.allFinite()) {
    throw std::invalid_argument("axis_angle_to_matrix: non-finite axis-angle");
  }
  const double theta = a.norm();
  const auto [ca, cb] = rodrigues_coeffs(theta);
  const Mat3 K = hat(a);
  return Mat3::Identity() + ca * K + cb * K * K;
}

std::array<Mat3, 3> axis_angle_jacobian(const AxisAngle& a) {
  if (!a.allFinite()) {
    throw std::invalid_argument("axis_angle_jacobian: non-finite axis-angle");
  }
  const double theta = a.norm();
  const auto [ca, cb] = rodrigues_coeffs(theta);
  const auto [da, db] = rodrigues_coeff_derivs(theta);
  const Mat3 K = hat(a);
  const Mat3 K2 = K * K;
  std::array<Mat3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 Ei = hat(Vec3::Unit(i));
    out[i] = ca * Ei + cb * (Ei * K + K * Ei) + (da * a[i]) * K + (db * a[i]) * K2;
  }
  return out;
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

AxisAngle matrix_to_axis_angle(const RotMatrix& R) {
  if (!is_rotation(R)) {
    throw std::invalid_argument("matrix_to_axis_angle: input is not a rotation matrix");
  }
  const Vec3 w = vee_skew(R);  // 2 sin(theta) * axis
  const double s = 0.5 * w.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(s, c);

  if (theta < kSmallAngle) {
    // theta / (2 sin theta) ~ 1/2 (1 + theta^2 / 6)
    return 0.5 * (1.0 + theta * theta / 6.0) * w;
  }
  if (std::numbers::pi - theta > 1e-4) {
    return (theta / (2.0 * std::sin(theta))) * w;
  }

  // Near pi: recover the axis from the symmetric part, R + R^T = 2 cos I + 2(1 - cos) u u^T.
  const Mat3 uut = (0.5 * (R + R.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  uut.diagonal().maxCoeff(&k);
  Vec3 u = uut.col(k) / std::sqrt(std::max(uut(k, k), 1e-300));
  u.normalize();
  if (u.dot(w) < 0.0) u = -u;
  return theta * u;
}

SixD matrix_to_sixd(const RotMatrix& R) {
  SixD r;
  r << R(0, 0), R(0, 1), R(0, 2), R(1, 0), R(1, 1), R(1, 2);
  return r;
}

SixD angular_velocity_sixd(const RotMatrix& R_prev, const RotMatrix& R_cur) {
  return matrix_to_sixd(R_prev.transpose() * R_cur);
}

double geodesic_deg(const RotMatrix& R1, const RotMatrix& R2) {
  // atan2 form of arccos((tr - 1) / 2); exact zero for R1 == R2 and well
  // conditioned near 0 and pi.
  const Mat3 M = R1.transpose() * R2;
  const double s = 0.5 * vee_skew(M).norm();
  const double c = std::clamp(0.5 * (M.trace() - 1.0), -1.0, 1.0);
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

RotMatrix rot_x(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
}

RotMatrix rot_y(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

RotMatrix rot_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace bpg::rotmath
