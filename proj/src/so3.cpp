#include "hpfc/so3.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hpfc::so3 {

namespace {

// Switch to the symmetric-part axis extraction once sin(angle) gets small
// enough that (R - R^T)/2 loses relative precision.
constexpr double kNearPiBranch = 1e-3;
constexpr double kSeriesBranch = 5e-2;

// c(t) = 1/t^2 - cot(t/2) / (2t), the Theta_hat^2 coefficient of J_l^{-1}.
double jl_inv_coeff(double t) {
  if (t < kSeriesBranch) {
    const double t2 = t * t;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  }
  return 1.0 / (t * t) - 1.0 / (2.0 * t * std::tan(0.5 * t));
}

// c'(t) / t.
double jl_inv_coeff_dot_over_t(double t) {
  const double t2 = t * t;
  if (t < kSeriesBranch) {
    return 1.0 / 360.0 + t2 / 7560.0 + t2 * t2 / 201600.0;
  }
  const double s = std::sin(0.5 * t);
  const double cot = std::cos(0.5 * t) / s;
  const double dc = -2.0 / (t2 * t) + cot / (2.0 * t2) + 1.0 / (4.0 * t * s * s);
  return dc / t;
}

}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat3 exp_so3(const Vec3& theta) {
  const double t = theta.norm();
  const Mat3 K = hat(theta);
  double a;
  double b;
  if (t < 1e-8) {
    a = 1.0 - t * t / 6.0;
    b = 0.5 - t * t / 24.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / (t * t);
  }
  return Mat3::Identity() + a * K + b * K * K;
}

Mat3 axis_angle(const Vec3& axis, double angle) { return exp_so3(axis.normalized() * angle); }

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  if ((R.transpose() * R - Mat3::Identity()).norm() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

Vec3 log_so3(const Mat3& R) {
  if (!is_rotation(R, 1e-6)) {
    throw std::invalid_argument("log_so3: input is not a proper rotation matrix");
  }
  const Vec3 skew = 0.5 * vee(R - R.transpose());  // sin(t) * axis
  const double sin_t = skew.norm();
  const double cos_t = 0.5 * (R.trace() - 1.0);
  const double t = std::atan2(sin_t, cos_t);

  if (t < 1e-8) {
    return (1.0 + t * t / 6.0) * skew;
  }
  if (std::numbers::pi - t > kNearPiBranch) {
    return (t / sin_t) * skew;
  }

  // Near pi: (R + R^T)/2 - cos(t) I = (1 - cos(t)) a a^T. Take the column
  // with the dominant diagonal entry for the axis direction.
  const Mat3 aat = (0.5 * (R + R.transpose()) - cos_t * Mat3::Identity()) / (1.0 - cos_t);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vec3 axis = aat.col(k) / std::sqrt(aat(k, k));
  if (sin_t > 1e-12) {
    if (axis.dot(skew) < 0.0) axis = -axis;
  } else {
    Eigen::Index j = 0;
    axis.cwiseAbs().maxCoeff(&j);
    if (axis(j) < 0.0) axis = -axis;
  }
  return t * axis.normalized();
}

Mat3 left_jacobian_inverse(const Vec3& theta) {
  const Mat3 K = hat(theta);
  return Mat3::Identity() - 0.5 * K + jl_inv_coeff(theta.norm()) * K * K;
}

Mat3 left_jacobian_inverse_dot(const Vec3& theta, const Vec3& theta_dot) {
  const double t = theta.norm();
  const Mat3 K = hat(theta);
  const Mat3 Kd = hat(theta_dot);
  const double c = jl_inv_coeff(t);
  const double dc = jl_inv_coeff_dot_over_t(t) * theta.dot(theta_dot);
  return -0.5 * Kd + dc * K * K + c * (Kd * K + K * Kd);
}

}  // namespace hpfc::so3
