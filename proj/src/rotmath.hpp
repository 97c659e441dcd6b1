#pragma once

#include <array>

#include <Eigen/Core>

namespace bpg::rotmath {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-angle rotation: direction is the axis, magnitude the angle in radians.
using AxisAngle = Eigen::Vector3d;
/// Proper rotation matrix (orthonormal, det = +1).
using RotMatrix = Eigen::Matrix3d;
/// First and second rows of a rotation matrix, concatenated.
using SixD = Eigen::Matrix<double, 6, 1>;

/// Below this magnitude the Rodrigues coefficients use their series expansion.
inline constexpr double kSmallAngle = 1e-7;

Mat3 hat(const Vec3& v);

/// Rodrigues formula. Throws std::invalid_argument for non-finite input.
RotMatrix axis_angle_to_matrix(const AxisAngle& a);

/// dR/da_i for i = 0,1,2.
std::array<Mat3, 3> axis_angle_jacobian(const AxisAngle& a);

/// Matrix logarithm. Result magnitude lies in [0, pi]. For angles within 1e-6
/// of pi the axis sign is arbitrary. Throws std::invalid_argument if R is not
/// a rotation (tolerance 1e-6).
AxisAngle matrix_to_axis_angle(const RotMatrix& R);

SixD matrix_to_sixd(const RotMatrix& R);

/// 6-D encoding of R_prev^T * R_cur.
SixD angular_velocity_sixd(const RotMatrix& R_prev, const RotMatrix& R_cur);

/// Geodesic distance in degrees.
double geodesic_deg(const RotMatrix& R1, const RotMatrix& R2);

bool is_rotation(const Mat3& R, double tol = 1e-6);

RotMatrix rot_x(double angle);
RotMatrix rot_y(double angle);
RotMatrix rot_z(double angle);

}  // namespace bpg::rotmath
