#pragma once

#include <Eigen/Core>

namespace hpfc::so3 {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Mat3 hat(const Vec3& v);
Vec3 vee(const Mat3& m);

/// Rodrigues formula. Returns the rotation exp(hat(theta)).
Mat3 exp_so3(const Vec3& theta);

/// Principal logarithm of a rotation matrix as an axis-angle vector with
/// norm in [0, pi].
///
/// At an angle of exactly pi the axis sign is ambiguous; the branch returns
/// the axis whose largest-magnitude component is positive. Throws
/// std::invalid_argument if R is not orthonormal with det = +1.
Vec3 log_so3(const Mat3& R);

/// Rotation about a unit axis.
Mat3 axis_angle(const Vec3& axis, double angle);

/// Inverse of the left Jacobian of SO(3): maps world-frame angular velocity
/// to the rate of the log coordinates, theta_dot = J_l^{-1}(theta) * omega.
Mat3 left_jacobian_inverse(const Vec3& theta);

/// Time derivative of left_jacobian_inverse(theta(t)) given theta_dot.
Mat3 left_jacobian_inverse_dot(const Vec3& theta, const Vec3& theta_dot);

/// True if R^T R = I and det(R) = +1 within tol.
bool is_rotation(const Mat3& R, double tol = 1e-9);

}  // namespace hpfc::so3
