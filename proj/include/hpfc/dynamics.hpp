#pragma once

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <string>

namespace hpfc::dynamics {

inline constexpr int kDof = 6;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Task configuration [Theta_x, Theta_y, Theta_z, x, y, z]: so(3) log
/// coordinates of the end-effector orientation on top, world position below.
using TaskConfig = Vec6;

/// Wrench applied by the end-effector to the environment, ordered
/// [moment; force], world frame, about the end-effector origin.
struct Wrench {
  Vec3 moment = Vec3::Zero();
  Vec3 force = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 w;
    w << moment, force;
    return w;
  }
};

struct Joint {
  Vec3 axis = Vec3::UnitZ();          // unit, expressed in the joint frame
  Mat3 rotation = Mat3::Identity();   // parent link frame -> joint frame
  Vec3 translation = Vec3::Zero();    // joint origin in the parent link frame (m)
};

struct Link {
  double mass = 1.0;                  // kg
  Vec3 com = Vec3::Zero();            // m, link frame
  Mat3 inertia = Mat3::Identity();    // kg m^2 about the COM, link frame
};

/// Serial chain of six revolute joints. Joint i's parent is link i-1 (the
/// world for i = 0); the end-effector frame is link 5's frame.
struct ChainModel {
  std::array<Joint, kDof> joints;
  std::array<Link, kDof> links;
  Vec3 gravity{0.0, 0.0, -9.81};

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

struct JointState {
  Vec6 q = Vec6::Zero();   // rad
  Vec6 qd = Vec6::Zero();  // rad/s
};

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
};

/// Loads a chain definition file (JSON key-value tree, schema in README).
ChainModel load_chain(const std::filesystem::path& path);
ChainModel chain_from_json_text(const std::string& text);

/// Moves the chain's base: prepends a world transform to joint 0.
ChainModel with_base(const ChainModel& chain, const Pose& base);

Pose forward_kinematics(const ChainModel& chain, const Vec6& q);
TaskConfig task_config(const ChainModel& chain, const Vec6& q);

/// Geometric Jacobian [angular; linear] at the end-effector origin, world frame.
Mat6 geometric_jacobian(const ChainModel& chain, const Vec6& q);
Mat6 geometric_jacobian_dot(const ChainModel& chain, const Vec6& q, const Vec6& qd);

/// J_f = d(task_config)/dq.
Mat6 task_jacobian(const ChainModel& chain, const Vec6& q);
Mat6 task_jacobian_dot(const ChainModel& chain, const Vec6& q, const Vec6& qd);

/// Joint-space inertia, assembled from per-link COM Jacobians.
Mat6 mass_matrix(const ChainModel& chain, const Vec6& q);

/// Recursive Newton-Euler: tau = M qdd + C qd + g + J^T F_ext.
Vec6 inverse_dynamics(const ChainModel& chain, const Vec6& q, const Vec6& qd, const Vec6& qdd,
                      const Wrench& ext = {}, bool with_gravity = true);

/// C qd + g. Evaluate at qd = 0 for the pure gravity torque.
Vec6 bias_forces(const ChainModel& chain, const Vec6& q, const Vec6& qd);

Vec6 gravity_torque(const ChainModel& chain, const Vec6& q);

/// qdd = M^{-1} (tau - C qd - g - J^T F_ext).
Vec6 forward_dynamics(const ChainModel& chain, const JointState& s, const Vec6& tau,
                      const Wrench& ext = {});

double kinetic_energy(const ChainModel& chain, const JointState& s);
double potential_energy(const ChainModel& chain, const Vec6& q);

struct IkResult {
  Vec6 q;
  double position_error = 0.0;
  double orientation_error = 0.0;
  bool converged = false;
};

/// Damped least-squares pose solver, used to place scenarios at a
/// requested starting pose.
IkResult inverse_kinematics(const ChainModel& chain, const Pose& target, const Vec6& seed,
                            int max_iterations = 500, double tolerance = 1e-12);

}  // namespace hpfc::dynamics
