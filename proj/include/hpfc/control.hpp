#pragma once

#include "hpfc/contact.hpp"
#include "hpfc/dynamics.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace hpfc::control {

using dynamics::Mat3;
using dynamics::Mat6;
using dynamics::TaskConfig;
using dynamics::Vec3;
using dynamics::Vec6;

/// Scalar task-space gains shared by all six channels.
struct MotionGains {
  double kv = 35.0;
  double kp = 405.0;
  double ki = 1500.0;

  /// Empty when s^3 + kv s^2 + kp s + ki is Hurwitz, otherwise the name of
  /// the first violated Routh condition.
  std::optional<std::string> routh_violation() const;
};

struct ForceGains {
  double kp1 = -0.05;
  double ki1 = -0.01;
  double kv1 = 0.0;  // only used by the PID law
};

/// How the sensed force is reported relative to the pushing direction. The
/// end-effector always pushes toward -z of the working frame.
///  positive: a pushing force reads as a positive number;
///  negative: the reading is the raw +z component, so pushing reads negative.
/// The gains must satisfy sign * kp1 <= 0 so that too little force drives
/// the desired height down.
enum class ForceSign { positive, negative };

enum class Cancellation { none, full, partial };

enum class Mode { non_contact, contact };

struct ControllerLimits {
  double motion_windup = 10.0;        // |integral of x_e| per channel
  double force_windup = 100.0;        // |integral of f_e|, N s
  double contact_threshold = 0.01;    // N
  double damping_trigger = 1e-4;      // smallest singular value of J_f
  double damping = 1e-6;
  double derivative_cutoff_hz = 100.0;
};

struct HybridControllerState {
  Vec6 motion_integral = Vec6::Zero();
  double force_integral = 0.0;
  double z_d = 0.0;
  double z_d_rate = 0.0;
  Mode mode = Mode::non_contact;
  double q_hat = 0.0;          // estimated contact height
  double delta = 0.01;         // estimate bound
  // derivative filter for the PID law
  double prev_force_error = 0.0;
  double force_error_rate = 0.0;
  bool has_prev_force_error = false;
};

/// Frame attached to another end-effector: origin and axes [V_x V_y V_z]
/// as the columns of `axes`.
struct FrameMap {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();

  void validate() const;
};

/// A frame moving by pure translation, with its origin's rate and
/// acceleration. Used to express one arm's task in another arm's frame.
struct MovingFrame {
  FrameMap frame;
  Vec3 origin_velocity = Vec3::Zero();
  Vec3 origin_acceleration = Vec3::Zero();
};

struct TaskReference {
  TaskConfig x = TaskConfig::Zero();
  Vec6 xd = Vec6::Zero();
  Vec6 xdd = Vec6::Zero();
};

struct MotionOptions {
  Cancellation cancellation = Cancellation::none;
  double partial_fraction = 0.5;
  dynamics::Wrench sensed_wrench{};
  std::optional<MovingFrame> task_frame;  // express the task in this frame
  ControllerLimits limits{};
};

struct MotionOutput {
  Vec6 tau = Vec6::Zero();
  TaskConfig x = TaskConfig::Zero();     // current task configuration (mapped if a frame is set)
  Vec6 x_rate = Vec6::Zero();
  Vec6 error = Vec6::Zero();             // x_d - x
  bool damped_inverse = false;
};

/// Task configuration and rate of the arm, in world or mapped coordinates.
struct TaskState {
  TaskConfig x;
  Vec6 x_rate;
  Mat6 jacobian;
  Vec6 bias_acceleration;  // d/dt(J) qd minus frame acceleration terms
};

TaskState task_state(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                     const std::optional<MovingFrame>& frame);

/// Computed-torque task-space controller:
///   tau = C qd + g + M J_f^{-1} (xdd_d + Kv xd_e + Kp x_e + Ki int x_e - Jdot_f qd)
/// The integral accumulator is advanced by x_e dt before use. Throws
/// std::domain_error on non-finite input.
MotionOutput motion_control(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                            const TaskReference& ref, const MotionGains& gains,
                            HybridControllerState& state, double dt,
                            const MotionOptions& options = {});

/// Indirect force PI: returns u_c = dz_d/dt = kp1 f_e + ki1 int f_e.
double force_pi(double f_e, HybridControllerState& state, const ForceGains& gains, double dt,
                const ControllerLimits& limits = {});

/// PI law with the saturation guard: out of contact and below the contact
/// estimate (z_d < q_hat) the descent command is frozen to zero.
double saturated_force_control(double f_z, double f_e, double z_d, double q_hat,
                               HybridControllerState& state, const ForceGains& gains, double dt,
                               const ControllerLimits& limits = {});

/// PID upgrade: returns u_c = d^2 z_d/dt^2 = kv1 fdot_e + kp1 f_e + ki1 int f_e.
double force_pid(double f_e, double f_e_rate, HybridControllerState& state,
                 const ForceGains& gains, double dt, const ControllerLimits& limits = {});

/// Backward difference through a one-pole low-pass at limits.derivative_cutoff_hz.
double filtered_force_error_rate(double f_e, HybridControllerState& state, double dt,
                                 const ControllerLimits& limits = {});

struct HybridConfig {
  MotionGains motion{};
  ForceGains force{};
  double desired_force = 5.0;       // magnitude, N
  ForceSign sign = ForceSign::positive;
  bool force_enabled = true;
  bool saturation = true;
  bool pid = false;
  Cancellation cancellation = Cancellation::none;
  double partial_fraction = 0.5;
  ControllerLimits limits{};

  /// Throws std::invalid_argument when the gain signs contradict `sign`.
  void validate() const;
};

struct SensorChannel {
  const contact::ContactEnv* env = nullptr;  // noise model; null means ideal sensor
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;
};

struct Telemetry {
  TaskConfig x = TaskConfig::Zero();
  TaskConfig x_d = TaskConfig::Zero();
  double f_z = 0.0;
  double f_e = 0.0;
  double z_d = 0.0;
  double u_c = 0.0;
  Mode mode = Mode::non_contact;
  bool damped_inverse = false;
};

struct HybridOutput {
  Vec6 tau = Vec6::Zero();
  Telemetry telemetry;
};

/// Signed force reading along the working z axis from the wrench the
/// end-effector applies to the environment.
double signed_normal_force(const dynamics::Wrench& applied, const Mat3& working_axes,
                           ForceSign sign);

/// One control period of the hybrid controller: read the sensor, update the
/// desired height from the force error, overwrite the z channel of the
/// reference, and run the motion controller. state.q_hat must be current.
HybridOutput hybrid_step(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                         const TaskReference& reference, const dynamics::Wrench& true_wrench,
                         const SensorChannel& sensor, const HybridConfig& config,
                         HybridControllerState& state, double dt,
                         const std::optional<MovingFrame>& task_frame = std::nullopt);

/// [Theta; V^T (p - origin)]
TaskConfig dual_arm_map(const FrameMap& phi, const TaskConfig& x);
/// [Theta; V p_bar + origin]
TaskConfig dual_arm_unmap(const FrameMap& phi, const TaskConfig& x_bar);

std::string to_string(Mode m);

}  // namespace hpfc::control
