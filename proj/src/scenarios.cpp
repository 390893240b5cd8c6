#include "hpfc/sim.hpp"
#include "hpfc/so3.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hpfc::sim {

namespace {

using control::HybridControllerState;
using control::MovingFrame;
using control::TaskReference;

Mat3 rotz(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

// Smoothstep-blended phase: zero before t0, unit rate after t0 + ramp.
struct Phase {
  double value, rate, accel;
};

Phase blended_phase(double t, double t0, double ramp) {
  if (t <= t0) return {0.0, 0.0, 0.0};
  if (ramp <= 0.0) return {t - t0, 1.0, 0.0};
  const double u = (t - t0) / ramp;
  if (u >= 1.0) return {0.5 * ramp + (t - t0 - ramp), 1.0, 0.0};
  return {ramp * (u * u * u - 0.5 * u * u * u * u), 3 * u * u - 2 * u * u * u,
          6.0 * u * (1.0 - u) / ramp};
}

// Quintic 0 -> 1 between t0 and t1.
Phase quintic(double t, double t0, double t1) {
  if (t <= t0) return {0.0, 0.0, 0.0};
  if (t >= t1) return {1.0, 0.0, 0.0};
  const double T = t1 - t0;
  const double u = (t - t0) / T;
  const double u2 = u * u, u3 = u2 * u;
  return {10 * u3 - 15 * u3 * u + 6 * u3 * u2, (30 * u2 - 60 * u3 + 30 * u3 * u) / T,
          (60 * u - 180 * u2 + 120 * u3) / (T * T)};
}

dynamics::Pose pose_of(const Vec3& axis_angle, const Vec3& p) {
  return {so3::exp_so3(axis_angle), p};
}

Vec6 solve_start(const dynamics::ChainModel& chain, const dynamics::Pose& target, const Vec6& seed,
                 const char* who) {
  const auto ik = dynamics::inverse_kinematics(chain, target, seed);
  if (!ik.converged || ik.position_error > 1e-9 || ik.orientation_error > 1e-9) {
    std::ostringstream os;
    os << who << ": start pose unreachable (position error " << ik.position_error << " m)";
    throw std::invalid_argument(os.str());
  }
  return ik.q;
}

std::vector<std::pair<std::string, std::string>> base_metadata(const Scenario& sc) {
  std::vector<std::pair<std::string, std::string>> md;
  md.emplace_back("kind", to_string(sc.kind));
  for (const auto& kv : sc.metadata) {
    if (kv.first != "kind") md.push_back(kv);
  }
  return md;
}

void check_state(const dynamics::JointState& s, double t, const char* who) {
  if (!s.q.allFinite() || !s.qd.allFinite() || s.qd.cwiseAbs().maxCoeff() > 1e3) {
    std::ostringstream os;
    os << who << " diverged at t=" << t;
    throw SimulationAbort(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// contour tracking

SimLog run_contour_tracking(const Scenario& sc) {
  sc.validate();
  const auto chain = dynamics::load_chain(sc.chain_path);
  const auto& env = sc.env;
  const auto& cp = sc.contour;
  const auto& cfg = sc.controller;

  Eigen::Vector2d center = cp.center;
  if (const auto* e = std::get_if<contact::EllipsoidProfile>(&env.topography)) {
    center = e->center.head<2>();
  }
  const double z0 = contact::nominal_height(env, center.x(), center.y(), 0.0) + cp.start_gap;
  const Vec3 theta = so3::log_so3(so3::exp_so3(cp.orientation));
  dynamics::JointState s{solve_start(chain, pose_of(cp.orientation, {center.x(), center.y(), z0}),
                                     cp.q_seed, "contour_tracking"),
                         Vec6::Zero()};

  auto reference = [&](double t) {
    const Phase ph = blended_phase(t, cp.approach_time, cp.ramp_time);
    TaskReference r;
    r.x.head<3>() = theta;
    for (int k = 0; k < 2; ++k) {
      const double A = cp.amplitude(k), w = cp.omega(k);
      const double a = w * ph.value;
      r.x(3 + k) = center(k) + A * std::sin(a);
      r.xd(3 + k) = A * w * std::cos(a) * ph.rate;
      r.xdd(3 + k) = -A * w * w * std::sin(a) * ph.rate * ph.rate + A * w * std::cos(a) * ph.accel;
    }
    r.x(5) = z0;
    return r;
  };

  auto contact_wrench = [&](const Vec3& tip, double t) {
    dynamics::Wrench w;
    const auto h = contact::surface_height(env, tip.x(), tip.y(), t);
    w.force.z() = -contact::contact_force(env, h, tip.z());
    return w;
  };

  SimLog log;
  log.kind = ScenarioKind::contour_tracking;
  log.metadata = base_metadata(sc);
  log.columns = {"t",   "x",   "y",   "z",    "x_d",  "y_d",  "z_d",  "e_x", "e_y",
                 "tracking_error", "f_z", "f_e", "u_c", "surface_z", "mode", "damped",
                 "q1",  "q2",  "q3",  "q4",   "q5",   "q6"};

  HybridControllerState st;
  st.z_d = z0;
  const double h = sc.physics_step;
  const long per_control = std::lround(sc.control_period / h);
  const long controls = std::lround(sc.duration / sc.control_period);

  try {
    for (long c = 0; c <= controls; ++c) {
      const double t = c * sc.control_period;
      const Vec3 tip = dynamics::forward_kinematics(chain, s.q).p;
      st.q_hat = contact::nominal_height(env, tip.x(), tip.y(), t) - sc.q_hat_offset;
      const TaskReference ref = reference(t);
      const control::SensorChannel sensor{&env, sc.seed, static_cast<std::uint64_t>(c)};
      const auto out =
          control::hybrid_step(chain, s, ref, contact_wrench(tip, t), sensor, cfg, st,
                               sc.control_period);
      const auto& tm = out.telemetry;
      const double ex = ref.x(3) - tm.x(3), ey = ref.x(4) - tm.x(4);
      log.rows.push_back({t, tm.x(3), tm.x(4), tm.x(5), ref.x(3), ref.x(4), tm.x_d(5), ex, ey,
                          std::hypot(ex, ey), tm.f_z, tm.f_e, tm.u_c,
                          contact::nominal_height(env, tip.x(), tip.y(), t),
                          tm.mode == control::Mode::contact ? 1.0 : 0.0,
                          tm.damped_inverse ? 1.0 : 0.0, s.q(0), s.q(1), s.q(2), s.q(3), s.q(4),
                          s.q(5)});
      if (c == controls) break;
      for (long i = 0; i < per_control; ++i) {
        const double ti = t + i * h;
        const Vec3 p = dynamics::forward_kinematics(chain, s.q).p;
        s = integrate_step(chain, s, out.tau, contact_wrench(p, ti), h);
        check_state(s, ti + h, "contour_tracking");
      }
    }
  } catch (const SimulationAbort& e) {
    log.aborted = true;
    log.abort_reason = e.what();
  }
  return log;
}

// ---------------------------------------------------------------------------
// dual-arm grab

namespace {

struct FaceContact {
  Vec3 normal;             // direction the tip pushes the box
  Vec3 anchor = Vec3::Zero();  // tip offset from the box center when sticking began
  bool sticking = false;
};

struct FaceForce {
  double normal = 0.0;
  Vec3 on_box = Vec3::Zero();
  Eigen::Vector2d tangential = Eigen::Vector2d::Zero();  // required stick force
  bool friction_ok = true;
};

}  // namespace

SimLog run_dual_arm_grab(const Scenario& sc) {
  sc.validate();
  const auto& dp = sc.dual;
  const auto& cfg = sc.controller;
  const auto base = dynamics::load_chain(sc.chain_path);
  const auto chain_a = dynamics::with_base(base, {rotz(dp.yaw_a), dp.base_a});
  const auto chain_b = dynamics::with_base(base, {rotz(dp.yaw_b), dp.base_b});
  if (!(dp.box_mass > 0.0) || !(dp.box_edge > 0.0) || !(dp.friction >= 0.0)) {
    throw std::invalid_argument("dual_arm_grab: box mass, edge must be > 0 and friction >= 0");
  }
  if (!(dp.lift_end > dp.lift_start)) {
    throw std::invalid_argument("dual_arm_grab: lift_end must be after lift_start");
  }

  const Mat3 Ra = so3::exp_so3(dp.orientation_a);
  const Mat3 Rb = so3::exp_so3(dp.orientation_b);
  const Vec3 theta_a = so3::log_so3(Ra);
  const Vec3 theta_b = so3::log_so3(Rb);
  const Vec3 n = Ra.col(2);  // grab axis, from arm A into the box
  const double half = 0.5 * dp.box_edge;
  const double k = sc.env.stiffness;
  const double pre = cfg.desired_force / k;

  const Vec3 pa0 = dp.box_center - (half - pre) * n;
  const double zbar0 = dp.box_edge - pre + dp.start_gap;
  const Vec3 pb0 = pa0 + zbar0 * n;

  dynamics::JointState sa{solve_start(chain_a, {Ra, pa0}, dp.q_seed_a, "dual_arm_grab arm A"),
                          Vec6::Zero()};
  dynamics::JointState sb{solve_start(chain_b, {Rb, pb0}, dp.q_seed_b, "dual_arm_grab arm B"),
                          Vec6::Zero()};

  auto commanded_a = [&](double t) {
    const Phase ph = quintic(t, dp.lift_start, dp.lift_end);
    TaskReference r;
    r.x.head<3>() = theta_a;
    r.x.tail<3>() = pa0 + ph.value * dp.displacement;
    r.xd.tail<3>() = ph.rate * dp.displacement;
    r.xdd.tail<3>() = ph.accel * dp.displacement;
    return r;
  };

  // box: translational rigid body resting on a table until lifted
  Vec3 box = dp.box_center;
  Vec3 box_v = Vec3::Zero();
  const double table = dp.box_center.z() - half;
  const Vec3 gravity = base.gravity;
  FaceContact face_a{n}, face_b{-n};
  const Vec3 e1 = Ra.col(0), e2 = Ra.col(1);

  auto face_force = [&](FaceContact& fc, const Vec3& tip, const Vec3& tip_v, bool commit,
                        bool& slipped) {
    FaceForce out;
    const Vec3 rel = tip - box;
    const double pen = fc.normal.dot(rel) + half;  // tip past the face along its push direction
    if (!dp.box_present || pen <= 0.0) {
      if (commit) fc.sticking = false;
      return out;
    }
    out.normal = k * pen;
    const Mat3 P = Mat3::Identity() - fc.normal * fc.normal.transpose();
    Vec3 anchor = fc.sticking ? fc.anchor : rel;
    const Vec3 d = P * (rel - anchor);
    const Vec3 vrel = P * (tip_v - box_v);
    Vec3 t_force = dp.tangential_stiffness * d + dp.tangential_damping * vrel;
    out.tangential = {e1.dot(t_force), e2.dot(t_force)};
    out.friction_ok = contact::friction_check(out.normal, out.tangential, dp.friction);
    if (!out.friction_ok) {
      // kinetic fallback: cap at mu N and let the anchor slide
      t_force *= dp.friction * out.normal / t_force.norm();
      anchor = rel - P * ((t_force - dp.tangential_damping * vrel) / dp.tangential_stiffness);
      slipped = true;
    }
    if (commit) {
      fc.anchor = anchor;
      fc.sticking = true;
    }
    out.on_box = out.normal * fc.normal + t_force;
    return out;
  };

  SimLog log;
  log.kind = ScenarioKind::dual_arm_grab;
  log.metadata = base_metadata(sc);
  log.columns = {"t",        "box_x",     "box_y",     "box_z",       "box_dx",     "box_dy",
                 "box_dz",   "a_ex",      "a_ey",      "a_ez",        "b_ex_bar",   "b_ey_bar",
                 "b_zbar",   "b_zbar_d",  "f_z",       "f_e",         "u_c",        "squeeze_a",
                 "squeeze_b", "tangential_a", "tangential_b", "friction_ok", "slip", "mode",
                 "tracking_error", "damped_a", "damped_b", "qa1", "qa2", "qa3", "qa4", "qa5",
                 "qa6",      "qb1",       "qb2",       "qb3",         "qb4",        "qb5",
                 "qb6"};

  HybridControllerState st_a, st_b;
  st_b.z_d = zbar0;
  const double h = sc.physics_step;
  const long per_control = std::lround(sc.control_period / h);
  const long controls = std::lround(sc.duration / sc.control_period);
  bool slip_reported = false;

  auto tip_state = [](const dynamics::ChainModel& c, const dynamics::JointState& s) {
    const Vec3 p = dynamics::forward_kinematics(c, s.q).p;
    const Vec3 v = dynamics::geometric_jacobian(c, s.q).bottomRows<3>() * s.qd;
    return std::pair<Vec3, Vec3>{p, v};
  };

  try {
    for (long c = 0; c <= controls; ++c) {
      const double t = c * sc.control_period;
      const auto [pa, va] = tip_state(chain_a, sa);
      const auto [pb, vb] = tip_state(chain_b, sb);
      bool slipped = false;
      const FaceForce fa = face_force(face_a, pa, va, false, slipped);
      const FaceForce fb = face_force(face_b, pb, vb, false, slipped);

      const TaskReference ref_a = commanded_a(t);
      control::MotionOptions opt_a;
      opt_a.cancellation = cfg.cancellation;
      opt_a.partial_fraction = cfg.partial_fraction;
      opt_a.limits = cfg.limits;
      opt_a.sensed_wrench.force = fa.on_box;
      const auto out_a =
          control::motion_control(chain_a, sa, ref_a, cfg.motion, st_a, sc.control_period, opt_a);

      MovingFrame mf;
      mf.frame.axes = Ra;
      if (dp.frame_source == FrameSource::commanded) {
        mf.frame.origin = ref_a.x.tail<3>();
        mf.origin_velocity = ref_a.xd.tail<3>();
      } else {
        mf.frame.origin = pa;
        mf.origin_velocity = va;
      }
      mf.origin_acceleration = ref_a.xdd.tail<3>();

      TaskReference ref_b;
      ref_b.x.head<3>() = theta_b;
      ref_b.x.tail<3>() = Vec3(0.0, 0.0, zbar0);
      st_b.q_hat = dp.box_edge - pre - sc.q_hat_offset;
      dynamics::Wrench wb;
      wb.force = fb.on_box;
      const control::SensorChannel sensor{&sc.env, sc.seed, static_cast<std::uint64_t>(c)};
      const auto out_b =
          control::hybrid_step(chain_b, sb, ref_b, wb, sensor, cfg, st_b, sc.control_period, mf);
      const auto& tm = out_b.telemetry;

      const Vec3 ea = ref_a.x.tail<3>() - pa;
      const double bex = tm.x_d(3) - tm.x(3), bey = tm.x_d(4) - tm.x(4);
      const Vec3 disp = box - dp.box_center;
      const bool ok = fa.friction_ok && fb.friction_ok;
      log.rows.push_back({t, box.x(), box.y(), box.z(), disp.x(), disp.y(), disp.z(), ea.x(),
                          ea.y(), ea.z(), bex, bey, tm.x(5), tm.x_d(5), tm.f_z, tm.f_e, tm.u_c,
                          fa.normal, fb.normal, fa.tangential.norm(), fb.tangential.norm(),
                          ok ? 1.0 : 0.0, slipped ? 1.0 : 0.0,
                          tm.mode == control::Mode::contact ? 1.0 : 0.0, std::hypot(bex, bey),
                          out_a.damped_inverse ? 1.0 : 0.0, tm.damped_inverse ? 1.0 : 0.0,
                          sa.q(0), sa.q(1), sa.q(2), sa.q(3), sa.q(4), sa.q(5), sb.q(0), sb.q(1),
                          sb.q(2), sb.q(3), sb.q(4), sb.q(5)});
      if (c == controls) break;

      for (long i = 0; i < per_control; ++i) {
        const double ti = t + i * h;
        const auto [pai, vai] = tip_state(chain_a, sa);
        const auto [pbi, vbi] = tip_state(chain_b, sb);
        bool sl = false;
        const FaceForce ga = face_force(face_a, pai, vai, true, sl);
        const FaceForce gb = face_force(face_b, pbi, vbi, true, sl);
        if (sl && !slip_reported) {
          std::ostringstream os;
          os << "slip: friction cone violated at t=" << ti;
          log.warnings.push_back(os.str());
          slip_reported = true;
        }
        dynamics::Wrench wa_i, wb_i;
        wa_i.force = ga.on_box;
        wb_i.force = gb.on_box;
        sa = integrate_step(chain_a, sa, out_a.tau, wa_i, h);
        sb = integrate_step(chain_b, sb, out_b.tau, wb_i, h);
        check_state(sa, ti + h, "arm A");
        check_state(sb, ti + h, "arm B");

        if (dp.box_present) {
          Vec3 f = dp.box_mass * gravity + ga.on_box + gb.on_box;
          const double sink = table - (box.z() - half);
          if (sink > 0.0) f.z() += std::max(0.0, dp.support_stiffness * sink - dp.support_damping * box_v.z());
          box_v += h * f / dp.box_mass;
          box += h * box_v;
          if (!box.allFinite() || (box - dp.box_center).norm() > 10.0) {
            throw SimulationAbort("box diverged");
          }
        }
      }
    }
  } catch (const SimulationAbort& e) {
    log.aborted = true;
    log.abort_reason = e.what();
  }
  return log;
}

}  // namespace hpfc::sim
