#include "hpfc/control.hpp"

#include "hpfc/so3.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hpfc::control {

namespace {

double clamp_abs(double v, double bound) { return std::clamp(v, -bound, bound); }

double sign_factor(ForceSign s) { return s == ForceSign::positive ? 1.0 : -1.0; }

// Solves J x = a, switching to damped least squares near singularities.
Vec6 solve_task(const Mat6& J, const Vec6& a, const ControllerLimits& limits, bool& damped) {
  Eigen::JacobiSVD<Mat6> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  damped = sv(5) < limits.damping_trigger;
  if (!damped) return svd.solve(a);
  const double l2 = limits.damping * limits.damping;
  Vec6 inv_sv;
  for (int i = 0; i < 6; ++i) inv_sv(i) = sv(i) / (sv(i) * sv(i) + l2);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * a;
}

}  // namespace

std::optional<std::string> MotionGains::routh_violation() const {
  if (!(kv > 0.0)) return std::string("Kv > 0");
  if (!(ki > 0.0)) return std::string("Ki > 0");
  if (!(kv * kp > ki)) return std::string("Kv*Kp > Ki");
  return std::nullopt;
}

void FrameMap::validate() const {
  if (!origin.allFinite() || !so3::is_rotation(axes, 1e-9)) {
    throw std::invalid_argument("frame map: axes must be orthonormal with det = +1");
  }
}

void HybridConfig::validate() const {
  const double s = sign_factor(sign);
  if (s * force.kp1 > 0.0 || s * force.ki1 > 0.0) {
    throw std::invalid_argument(
        "force gains: sign of kp1/ki1 contradicts the force sign convention (need sign*gain <= 0)");
  }
  if (!(desired_force >= 0.0)) throw std::invalid_argument("desired force magnitude must be >= 0");
}

std::string to_string(Mode m) { return m == Mode::contact ? "contact" : "non_contact"; }

TaskState task_state(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                     const std::optional<MovingFrame>& frame) {
  TaskState ts;
  ts.x = dynamics::task_config(chain, s.q);
  ts.jacobian = dynamics::task_jacobian(chain, s.q);
  ts.bias_acceleration = dynamics::task_jacobian_dot(chain, s.q, s.qd) * s.qd;
  if (frame) {
    const Mat3 Vt = frame->frame.axes.transpose();
    ts.x = dual_arm_map(frame->frame, ts.x);
    ts.jacobian.bottomRows<3>() = Vt * ts.jacobian.bottomRows<3>();
    ts.bias_acceleration.tail<3>() =
        Vt * ts.bias_acceleration.tail<3>() - Vt * frame->origin_acceleration;
    ts.x_rate = ts.jacobian * s.qd;
    ts.x_rate.tail<3>() -= Vt * frame->origin_velocity;
  } else {
    ts.x_rate = ts.jacobian * s.qd;
  }
  return ts;
}

MotionOutput motion_control(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                            const TaskReference& ref, const MotionGains& gains,
                            HybridControllerState& state, double dt,
                            const MotionOptions& options) {
  if (!s.q.allFinite() || !s.qd.allFinite() || !ref.x.allFinite() || !ref.xd.allFinite() ||
      !ref.xdd.allFinite() || !std::isfinite(dt)) {
    throw std::domain_error("motion_control: non-finite input");
  }
  const TaskState ts = task_state(chain, s, options.task_frame);

  MotionOutput out;
  out.x = ts.x;
  out.x_rate = ts.x_rate;
  out.error = ref.x - ts.x;
  const Vec6 rate_error = ref.xd - ts.x_rate;
  for (int i = 0; i < 6; ++i) {
    state.motion_integral(i) =
        clamp_abs(state.motion_integral(i) + out.error(i) * dt, options.limits.motion_windup);
  }

  const Vec6 accel = ref.xdd + gains.kv * rate_error + gains.kp * out.error +
                     gains.ki * state.motion_integral - ts.bias_acceleration;
  const Vec6 qdd = solve_task(ts.jacobian, accel, options.limits, out.damped_inverse);

  out.tau = dynamics::bias_forces(chain, s.q, s.qd) + dynamics::mass_matrix(chain, s.q) * qdd;
  if (options.cancellation != Cancellation::none) {
    const double frac =
        options.cancellation == Cancellation::full ? 1.0 : options.partial_fraction;
    out.tau += frac * dynamics::geometric_jacobian(chain, s.q).transpose() *
               options.sensed_wrench.stacked();
  }
  return out;
}

double force_pi(double f_e, HybridControllerState& state, const ForceGains& gains, double dt,
                const ControllerLimits& limits) {
  state.force_integral = clamp_abs(state.force_integral + f_e * dt, limits.force_windup);
  return gains.kp1 * f_e + gains.ki1 * state.force_integral;
}

double saturated_force_control(double f_z, double f_e, double z_d, double q_hat,
                               HybridControllerState& state, const ForceGains& gains, double dt,
                               const ControllerLimits& limits) {
  const double u = force_pi(f_e, state, gains, dt, limits);
  const bool in_contact = std::abs(f_z) > limits.contact_threshold;
  if (!in_contact && z_d < q_hat) return 0.0;
  return u;
}

double filtered_force_error_rate(double f_e, HybridControllerState& state, double dt,
                                 const ControllerLimits& limits) {
  if (!state.has_prev_force_error) {
    state.prev_force_error = f_e;
    state.has_prev_force_error = true;
    return state.force_error_rate;
  }
  const double raw = (f_e - state.prev_force_error) / dt;
  const double tau = 1.0 / (2.0 * std::numbers::pi * limits.derivative_cutoff_hz);
  const double alpha = dt / (dt + tau);
  state.force_error_rate += alpha * (raw - state.force_error_rate);
  state.prev_force_error = f_e;
  return state.force_error_rate;
}

double force_pid(double f_e, double f_e_rate, HybridControllerState& state,
                 const ForceGains& gains, double dt, const ControllerLimits& limits) {
  state.force_integral = clamp_abs(state.force_integral + f_e * dt, limits.force_windup);
  return gains.kv1 * f_e_rate + gains.kp1 * f_e + gains.ki1 * state.force_integral;
}

double signed_normal_force(const dynamics::Wrench& applied, const Mat3& working_axes,
                           ForceSign sign) {
  const double raw = working_axes.col(2).dot(applied.force);
  // the environment pushes back with -raw along +z
  return sign == ForceSign::positive ? -raw : raw;
}

HybridOutput hybrid_step(const dynamics::ChainModel& chain, const dynamics::JointState& s,
                         const TaskReference& reference, const dynamics::Wrench& true_wrench,
                         const SensorChannel& sensor, const HybridConfig& config,
                         HybridControllerState& state, double dt,
                         const std::optional<MovingFrame>& task_frame) {
  const dynamics::Wrench sensed =
      sensor.env ? contact::ft_sensor_read(true_wrench, *sensor.env, sensor.seed, sensor.sample_index)
                 : true_wrench;
  const Mat3 axes = task_frame ? task_frame->frame.axes : Mat3::Identity();
  const double f_z = signed_normal_force(sensed, axes, config.sign);
  const double f_d = sign_factor(config.sign) * config.desired_force;
  const double f_e = f_d - f_z;
  const bool in_contact = std::abs(f_z) > config.limits.contact_threshold;
  state.mode = in_contact ? Mode::contact : Mode::non_contact;

  double u_c = 0.0;
  if (config.force_enabled) {
    if (config.pid) {
      const double rate = filtered_force_error_rate(f_e, state, dt, config.limits);
      u_c = force_pid(f_e, rate, state, config.force, dt, config.limits);
      if (config.saturation && !in_contact && state.z_d < state.q_hat) {
        u_c = 0.0;
        state.z_d_rate = 0.0;
      }
      state.z_d_rate += u_c * dt;
    } else {
      u_c = config.saturation ? saturated_force_control(f_z, f_e, state.z_d, state.q_hat, state,
                                                        config.force, dt, config.limits)
                              : force_pi(f_e, state, config.force, dt, config.limits);
      state.z_d_rate = u_c;
    }
    state.z_d += state.z_d_rate * dt;
  }

  TaskReference ref = reference;
  if (config.force_enabled) {
    ref.x(5) = state.z_d;
    ref.xd(5) = state.z_d_rate;
    ref.xdd(5) = config.pid ? u_c : 0.0;
  } else {
    state.z_d = ref.x(5);
  }

  MotionOptions opts;
  opts.cancellation = config.cancellation;
  opts.partial_fraction = config.partial_fraction;
  opts.sensed_wrench = sensed;
  opts.task_frame = task_frame;
  opts.limits = config.limits;
  const MotionOutput mo = motion_control(chain, s, ref, config.motion, state, dt, opts);

  HybridOutput out;
  out.tau = mo.tau;
  out.telemetry.x = mo.x;
  out.telemetry.x_d = ref.x;
  out.telemetry.f_z = f_z;
  out.telemetry.f_e = f_e;
  out.telemetry.z_d = state.z_d;
  out.telemetry.u_c = u_c;
  out.telemetry.mode = state.mode;
  out.telemetry.damped_inverse = mo.damped_inverse;
  return out;
}

TaskConfig dual_arm_map(const FrameMap& phi, const TaskConfig& x) {
  phi.validate();
  TaskConfig out = x;
  out.tail<3>() = phi.axes.transpose() * (x.tail<3>() - phi.origin);
  return out;
}

TaskConfig dual_arm_unmap(const FrameMap& phi, const TaskConfig& x_bar) {
  phi.validate();
  TaskConfig out = x_bar;
  out.tail<3>() = phi.axes * x_bar.tail<3>() + phi.origin;
  return out;
}

}  // namespace hpfc::control
