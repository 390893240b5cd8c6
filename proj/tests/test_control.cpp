#include "hpfc/control.hpp"
#include "hpfc/so3.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hpfc;
using namespace hpfc::control;
using hpfc::testing::reference_chain;

namespace {

const Vec6 kWorkPose = (Vec6() << 0.3, -1.1, 1.6, -0.9, 1.2, 0.4).finished();

// RK4 plant at 1e-4 s with the torque held over each 1e-3 s control period.
struct Loop {
  dynamics::ChainModel chain = reference_chain();
  dynamics::JointState s{kWorkPose, Vec6::Zero()};
  dynamics::Wrench disturbance{};

  void advance(const Vec6& tau, double period = 1e-3, int sub = 10) {
    const double h = period / sub;
    auto f = [&](const Vec6& q, const Vec6& qd) {
      return dynamics::forward_dynamics(chain, {q, qd}, tau, disturbance);
    };
    for (int i = 0; i < sub; ++i) {
      const Vec6 a1 = f(s.q, s.qd);
      const Vec6 v1 = s.qd;
      const Vec6 v2 = s.qd + 0.5 * h * a1;
      const Vec6 a2 = f(s.q + 0.5 * h * v1, v2);
      const Vec6 v3 = s.qd + 0.5 * h * a2;
      const Vec6 a3 = f(s.q + 0.5 * h * v2, v3);
      const Vec6 v4 = s.qd + h * a3;
      const Vec6 a4 = f(s.q + h * v3, v4);
      s.q += h / 6.0 * (v1 + 2 * v2 + 2 * v3 + v4);
      s.qd += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    }
  }
};

double regulate(Loop& loop, const TaskReference& ref, double seconds) {
  HybridControllerState st;
  MotionGains g;
  const int n = static_cast<int>(std::lround(seconds / 1e-3));
  for (int i = 0; i < n; ++i) {
    loop.advance(motion_control(loop.chain, loop.s, ref, g, st, 1e-3).tau);
  }
  return (ref.x - dynamics::task_config(loop.chain, loop.s.q)).norm();
}

}  // namespace

TEST_CASE("Routh conditions on the motion gains") {
  CHECK_FALSE(MotionGains{}.routh_violation().has_value());
  CHECK(*MotionGains{1, 1, 5}.routh_violation() == "Kv*Kp > Ki");
  CHECK(*MotionGains{-1, 1, 0.1}.routh_violation() == "Kv > 0");
  CHECK(*MotionGains{1, 1, 0}.routh_violation() == "Ki > 0");
}

TEST_CASE("motion control compensates gravity at rest on target") {
  const auto chain = reference_chain();
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const Vec6 q = testing::random_q(rng, 2.0);
    dynamics::JointState s{q, Vec6::Zero()};
    TaskReference ref;
    ref.x = dynamics::task_config(chain, q);
    HybridControllerState st;
    const auto out = motion_control(chain, s, ref, MotionGains{}, st, 1e-3);
    if (out.damped_inverse) continue;
    CHECK((out.tau - dynamics::gravity_torque(chain, q)).norm() < 1e-9);
  }
}

TEST_CASE("motion control regulates a pose offset") {
  Loop loop;
  TaskReference ref;
  ref.x = dynamics::task_config(loop.chain, loop.s.q);
  ref.x(3) += 0.01;
  ref.x(5) -= 0.01;
  ref.x(0) += 0.02;
  const double e = regulate(loop, ref, 2.0);
  CHECK(e < 1e-3);
}

TEST_CASE("integral action rejects a constant end-effector load") {
  Loop loop;
  loop.disturbance.force = {0.0, 0.0, 2.0};
  TaskReference ref;
  ref.x = dynamics::task_config(loop.chain, loop.s.q);
  const double e = regulate(loop, ref, 4.0);
  CHECK(e < 1e-3);
}

TEST_CASE("task error follows the closed-loop third-order law") {
  // With exact cancellation each channel obeys e''' + Kv e'' + Kp e' + Ki e = 0
  // on the integral; compare to an independent scalar integration.
  Loop loop;
  TaskReference ref;
  ref.x = dynamics::task_config(loop.chain, loop.s.q);
  ref.x(4) += 0.005;
  HybridControllerState st;
  MotionGains g;
  // scalar oracle on (I, e, e') with I the integral of e; e = x_d - x
  double I = 0.0, e = 0.005, ed = 0.0;
  for (int i = 0; i < 300; ++i) {
    const auto out = motion_control(loop.chain, loop.s, ref, g, st, 1e-3);
    I += e * 1e-3;
    // hold the integral term over the period, as the controller does
    const double hold_I = I;
    for (int j = 0; j < 10; ++j) {
      const double h = 1e-4;
      auto acc = [&](double ee, double eed) { return -(g.kv * eed + g.kp * ee + g.ki * hold_I); };
      const double k1e = ed, k1v = acc(e, ed);
      const double k2e = ed + 0.5 * h * k1v, k2v = acc(e + 0.5 * h * k1e, ed + 0.5 * h * k1v);
      const double k3e = ed + 0.5 * h * k2v, k3v = acc(e + 0.5 * h * k2e, ed + 0.5 * h * k2v);
      const double k4e = ed + h * k3v, k4v = acc(e + h * k3e, ed + h * k3v);
      e += h / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e);
      ed += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    loop.advance(out.tau);
  }
  const double actual = ref.x(4) - dynamics::task_config(loop.chain, loop.s.q)(4);
  CHECK(actual == doctest::Approx(e).epsilon(1e-3));
}

TEST_CASE("damped inverse near singularity") {
  const auto chain = reference_chain();
  dynamics::JointState s{Vec6::Zero(), Vec6::Zero()};
  TaskReference ref;
  ref.x = dynamics::task_config(chain, s.q);
  ref.x(3) += 0.01;
  HybridControllerState st;
  const auto out = motion_control(chain, s, ref, MotionGains{}, st, 1e-3);
  CHECK(out.damped_inverse);
  CHECK(out.tau.allFinite());
}

TEST_CASE("motion control rejects NaN") {
  const auto chain = reference_chain();
  dynamics::JointState s{kWorkPose, Vec6::Zero()};
  s.qd(2) = std::nan("");
  HybridControllerState st;
  CHECK_THROWS_AS(motion_control(chain, s, TaskReference{}, MotionGains{}, st, 1e-3),
                  std::domain_error);
}

TEST_CASE("force PI arithmetic") {
  HybridControllerState st;
  ForceGains g{-0.05, -0.01, 0.0};
  double u = 0.0;
  for (int i = 0; i < 1000; ++i) u = force_pi(5.0, st, g, 1e-3);
  CHECK(u == doctest::Approx(-0.30).epsilon(1e-9));

  SUBCASE("affine growth of the command under constant error") {
    HybridControllerState s2;
    std::vector<double> us;
    for (int i = 0; i < 500; ++i) us.push_back(force_pi(5.0, s2, g, 1e-3));
    for (std::size_t i = 2; i < us.size(); ++i) {
      CHECK(us[i] - us[i - 1] == doctest::Approx(us[1] - us[0]).epsilon(1e-9));
    }
    CHECK(us[1] - us[0] == doctest::Approx(g.ki1 * 5.0 * 1e-3));
  }

  SUBCASE("anti-windup clamp") {
    HybridControllerState s3;
    for (int i = 0; i < 100000; ++i) force_pi(5.0, s3, g, 1e-3);
    CHECK(s3.force_integral == doctest::Approx(100.0));
  }
}

TEST_CASE("saturation freezes descent below the contact estimate") {
  ForceGains g{-0.05, -0.01, 0.0};
  SUBCASE("out of contact below q_hat") {
    HybridControllerState st;
    CHECK(saturated_force_control(0.0, 5.0, -0.01, 0.0, st, g, 1e-3) == 0.0);
  }
  SUBCASE("out of contact above q_hat") {
    HybridControllerState st;
    CHECK(saturated_force_control(0.0, 5.0, 0.01, 0.0, st, g, 1e-3) < 0.0);
  }
  SUBCASE("in contact") {
    HybridControllerState st;
    CHECK(saturated_force_control(2.0, 3.0, -0.01, 0.0, st, g, 1e-3) < 0.0);
  }
  SUBCASE("threshold") {
    HybridControllerState st;
    CHECK(saturated_force_control(0.009, 5.0, -0.01, 0.0, st, g, 1e-3) == 0.0);
  }
}

TEST_CASE("PID derivative filter") {
  ControllerLimits lim;
  const double dt = 1e-3;
  const double tau = 1.0 / (2.0 * std::numbers::pi * lim.derivative_cutoff_hz);
  const double alpha = dt / (dt + tau);

  HybridControllerState st;
  CHECK(filtered_force_error_rate(0.0, st, dt, lim) == 0.0);
  const double spike = filtered_force_error_rate(5.0, st, dt, lim);
  CHECK(spike == doctest::Approx(alpha * 5000.0));
  double prev = spike;
  for (int i = 0; i < 20; ++i) {
    const double r = filtered_force_error_rate(5.0, st, dt, lim);
    CHECK(r == doctest::Approx((1 - alpha) * prev));
    prev = r;
  }
  CHECK(prev < 0.01 * spike);
}

TEST_CASE("PID law double-integrated matches PI on a smooth signal") {
  const ForceGains pi{-0.05, -0.01, 0.0};
  const ForceGains pid{pi.ki1, 0.0, pi.kp1};  // kv1 <- kp1, kp1 <- ki1
  const double dt = 1e-3;
  auto f = [](double t) { return 5.0 * std::exp(-t) + 0.5 * std::sin(2.0 * t); };

  HybridControllerState a, b;
  b.prev_force_error = f(0.0);
  b.has_prev_force_error = true;
  b.force_error_rate = -5.0 + 1.0;
  b.z_d_rate = pi.kp1 * f(0.0);
  double za = 0.0, zb = 0.0;
  for (int i = 1; i <= 3000; ++i) {
    const double t = i * dt;
    za += force_pi(f(t), a, pi, dt) * dt;
    const double rate = filtered_force_error_rate(f(t), b, dt);
    b.z_d_rate += force_pid(f(t), rate, b, pid, dt) * dt;
    zb += b.z_d_rate * dt;
  }
  CHECK(zb == doctest::Approx(za).epsilon(5e-3));
}

TEST_CASE("signed normal force conventions") {
  dynamics::Wrench w;
  w.force = {0.0, 0.0, -5.0};  // pushing down on a floor
  CHECK(signed_normal_force(w, Mat3::Identity(), ForceSign::positive) == 5.0);
  CHECK(signed_normal_force(w, Mat3::Identity(), ForceSign::negative) == -5.0);

  HybridConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.sign = ForceSign::negative;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.force = {0.008, 0.002, 0.0};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("hybrid step with the force path disabled equals the motion controller") {
  const auto chain = reference_chain();
  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) {
    dynamics::JointState s{kWorkPose + 0.1 * testing::random_q(rng, 1.0),
                           0.2 * testing::random_q(rng, 1.0)};
    TaskReference ref;
    ref.x = dynamics::task_config(chain, s.q) + 0.01 * testing::random_q(rng, 1.0);
    ref.xd = 0.05 * testing::random_q(rng, 1.0);
    dynamics::Wrench w;
    w.force = {0.0, 0.0, -3.0};

    HybridConfig cfg;
    cfg.force_enabled = false;
    HybridControllerState s1, s2;
    const auto h = hybrid_step(chain, s, ref, w, SensorChannel{}, cfg, s1, 1e-3);
    const auto m = motion_control(chain, s, ref, cfg.motion, s2, 1e-3);
    CHECK((h.tau - m.tau).norm() == 0.0);
  }
}

TEST_CASE("hybrid step overwrites the z channel") {
  const auto chain = reference_chain();
  dynamics::JointState s{kWorkPose, Vec6::Zero()};
  TaskReference ref;
  ref.x = dynamics::task_config(chain, s.q);
  HybridConfig cfg;
  HybridControllerState st;
  st.z_d = ref.x(5);
  st.q_hat = ref.x(5) - 0.1;  // surface well below: descent allowed
  const auto out = hybrid_step(chain, s, ref, dynamics::Wrench{}, SensorChannel{}, cfg, st, 1e-3);
  CHECK(out.telemetry.mode == Mode::non_contact);
  CHECK(out.telemetry.f_e == 5.0);
  CHECK(out.telemetry.u_c == doctest::Approx(-0.05 * 5.0 - 0.01 * 5.0 * 1e-3));
  CHECK(out.telemetry.x_d(5) == doctest::Approx(ref.x(5) + out.telemetry.u_c * 1e-3));
}

TEST_CASE("dual-arm frame map") {
  TaskConfig x;
  x << 0.1, -0.2, 0.3, 1.0, 2.0, 3.0;
  SUBCASE("identity frame") {
    CHECK(dual_arm_map(FrameMap{}, x) == x);
  }
  SUBCASE("rotation about z") {
    FrameMap phi;
    phi.origin = {1.0, 0.0, 0.0};
    phi.axes = so3::exp_so3(Vec3(0, 0, std::numbers::pi / 2));
    const auto xb = dual_arm_map(phi, x);
    CHECK(xb(3) == doctest::Approx(2.0));
    CHECK(xb(4) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xb(5) == doctest::Approx(3.0));
    CHECK(xb.head<3>() == x.head<3>());
  }
  SUBCASE("round trip and isometry") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
      FrameMap phi;
      phi.axes = testing::rodrigues(testing::random_unit(rng), 3.0 * testing::random_unit(rng)(0));
      phi.origin = testing::random_unit(rng);
      TaskConfig a = testing::random_q(rng, 1.0), b = testing::random_q(rng, 1.0);
      CHECK((dual_arm_unmap(phi, dual_arm_map(phi, a)) - a).norm() < 1e-12);
      const double d0 = (a.tail<3>() - b.tail<3>()).norm();
      const double d1 = (dual_arm_map(phi, a).tail<3>() - dual_arm_map(phi, b).tail<3>()).norm();
      CHECK(d1 == doctest::Approx(d0).epsilon(1e-12));
    }
  }
  SUBCASE("non-orthonormal axes") {
    FrameMap phi;
    phi.axes(0, 1) = 0.1;
    CHECK_THROWS_AS(dual_arm_map(phi, x), std::invalid_argument);
  }
}

TEST_CASE("moving frame task state") {
  const auto chain = reference_chain();
  dynamics::JointState s{kWorkPose, (Vec6() << 0.1, -0.2, 0.3, 0.1, 0.2, -0.1).finished()};
  MovingFrame mf;
  mf.frame.axes = so3::exp_so3(Vec3(0.3, -0.2, 0.5));
  mf.frame.origin = {0.2, 0.1, -0.1};
  mf.origin_velocity = {0.05, 0.0, -0.02};
  const auto ts = task_state(chain, s, mf);
  // finite-difference the mapped position along the joint flow and frame motion
  const double h = 1e-6;
  MovingFrame later = mf;
  later.frame.origin += h * mf.origin_velocity;
  const Vec6 q1 = s.q + h * s.qd;
  const Vec3 p0 = dual_arm_map(mf.frame, dynamics::task_config(chain, s.q)).tail<3>();
  const Vec3 p1 = dual_arm_map(later.frame, dynamics::task_config(chain, q1)).tail<3>();
  CHECK(((p1 - p0) / h - ts.x_rate.tail<3>()).norm() < 1e-5);
}
