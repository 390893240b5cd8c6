#include "hpfc/dynamics.hpp"

#include "hpfc/so3.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hpfc::dynamics {

namespace {

// World-frame quantities for every joint/link at one configuration.
struct Kinematics {
  std::array<Vec3, kDof> axis;      // joint axis, world
  std::array<Vec3, kDof> origin;    // joint origin, world
  std::array<Mat3, kDof> rotation;  // link frame orientation, world
  std::array<Vec3, kDof> com;       // link COM, world
  Pose ee;
};

Kinematics compute_kinematics(const ChainModel& chain, const Vec6& q) {
  Kinematics k;
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < kDof; ++i) {
    const Joint& j = chain.joints[i];
    p = p + R * j.translation;
    R = R * j.rotation;
    k.axis[i] = R * j.axis;
    k.origin[i] = p;
    R = R * so3::axis_angle(j.axis, q(i));
    k.rotation[i] = R;
    k.com[i] = p + R * chain.links[i].com;
  }
  k.ee = {R, p};
  return k;
}

Mat6 jacobian_from(const Kinematics& k) {
  Mat6 J;
  for (int i = 0; i < kDof; ++i) {
    J.block<3, 1>(0, i) = k.axis[i];
    J.block<3, 1>(3, i) = k.axis[i].cross(k.ee.p - k.origin[i]);
  }
  return J;
}

Vec3 json_vec3(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw std::invalid_argument(std::string("chain: '") + key + "' must be a 3-array");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

Mat3 json_mat3(const nlohmann::json& v, const char* what) {
  if (!v.is_array() || v.size() != 3) {
    throw std::invalid_argument(std::string("chain: '") + what + "' must be a 3x3 array");
  }
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!v[r].is_array() || v[r].size() != 3) {
      throw std::invalid_argument(std::string("chain: '") + what + "' must be a 3x3 array");
    }
    for (int c = 0; c < 3; ++c) m(r, c) = v[r][c].get<double>();
  }
  return m;
}

}  // namespace

void ChainModel::validate() const {
  for (int i = 0; i < kDof; ++i) {
    const Joint& j = joints[i];
    if (!j.axis.allFinite() || std::abs(j.axis.norm() - 1.0) >= 1e-12) {
      throw std::invalid_argument("chain: joint " + std::to_string(i) + " axis is not unit length");
    }
    if (!so3::is_rotation(j.rotation, 1e-9)) {
      throw std::invalid_argument("chain: joint " + std::to_string(i) +
                                  " parent rotation is not orthonormal");
    }
    if (!j.translation.allFinite()) {
      throw std::invalid_argument("chain: joint " + std::to_string(i) + " translation not finite");
    }
    const Link& l = links[i];
    if (!(l.mass > 0.0) || !std::isfinite(l.mass)) {
      throw std::invalid_argument("chain: link " + std::to_string(i) + " mass must be positive");
    }
    if ((l.inertia - l.inertia.transpose()).norm() > 1e-12 * (1.0 + l.inertia.norm())) {
      throw std::invalid_argument("chain: link " + std::to_string(i) + " inertia not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(l.inertia);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw std::invalid_argument("chain: link " + std::to_string(i) +
                                  " inertia not positive definite");
    }
  }
  if (!gravity.allFinite()) throw std::invalid_argument("chain: gravity not finite");
}

ChainModel chain_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("chain: parse error: ") + e.what());
  }
  ChainModel chain;
  try {
    const auto& joints = doc.at("joints");
    if (!joints.is_array() || joints.size() != kDof) {
      throw std::invalid_argument("chain: exactly 6 joints required");
    }
    for (int i = 0; i < kDof; ++i) {
      const auto& jj = joints[i];
      if (jj.value("type", std::string("revolute")) != "revolute") {
        throw std::invalid_argument("chain: only revolute joints are supported");
      }
      Joint& j = chain.joints[i];
      j.axis = json_vec3(jj, "axis");
      j.translation = json_vec3(jj, "translation");
      if (jj.contains("rotation")) j.rotation = json_mat3(jj.at("rotation"), "rotation");
      const auto& ll = jj.at("link");
      Link& l = chain.links[i];
      l.mass = ll.at("mass").get<double>();
      l.com = json_vec3(ll, "com");
      l.inertia = json_mat3(ll.at("inertia"), "inertia");
    }
    if (doc.contains("gravity")) chain.gravity = json_vec3(doc, "gravity");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("chain: ") + e.what());
  }
  chain.validate();
  return chain;
}

ChainModel load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return chain_from_json_text(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

ChainModel with_base(const ChainModel& chain, const Pose& base) {
  ChainModel out = chain;
  Joint& j0 = out.joints[0];
  j0.translation = base.p + base.R * j0.translation;
  j0.rotation = base.R * j0.rotation;
  return out;
}

Pose forward_kinematics(const ChainModel& chain, const Vec6& q) {
  return compute_kinematics(chain, q).ee;
}

TaskConfig task_config(const ChainModel& chain, const Vec6& q) {
  const Pose ee = forward_kinematics(chain, q);
  TaskConfig x;
  x << so3::log_so3(ee.R), ee.p;
  return x;
}

Mat6 geometric_jacobian(const ChainModel& chain, const Vec6& q) {
  return jacobian_from(compute_kinematics(chain, q));
}

Mat6 geometric_jacobian_dot(const ChainModel& chain, const Vec6& q, const Vec6& qd) {
  const Kinematics k = compute_kinematics(chain, q);
  const Mat6 J = jacobian_from(k);
  const Vec3 ee_vel = J.bottomRows<3>() * qd;

  Mat6 Jd;
  Vec3 omega = Vec3::Zero();      // angular velocity of the parent link
  Vec3 origin_vel = Vec3::Zero(); // velocity of the current joint origin
  for (int i = 0; i < kDof; ++i) {
    if (i > 0) {
      // joint i origin is rigidly attached to link i-1
      origin_vel += omega.cross(k.origin[i] - k.origin[i - 1]);
    }
    const Vec3 axis_dot = omega.cross(k.axis[i]);
    Jd.block<3, 1>(0, i) = axis_dot;
    Jd.block<3, 1>(3, i) =
        axis_dot.cross(k.ee.p - k.origin[i]) + k.axis[i].cross(ee_vel - origin_vel);
    omega += k.axis[i] * qd(i);
  }
  return Jd;
}

Mat6 task_jacobian(const ChainModel& chain, const Vec6& q) {
  const Kinematics k = compute_kinematics(chain, q);
  Mat6 J = jacobian_from(k);
  const Vec3 theta = so3::log_so3(k.ee.R);
  J.topRows<3>() = so3::left_jacobian_inverse(theta) * J.topRows<3>();
  return J;
}

Mat6 task_jacobian_dot(const ChainModel& chain, const Vec6& q, const Vec6& qd) {
  const Kinematics k = compute_kinematics(chain, q);
  const Mat6 J = jacobian_from(k);
  const Mat6 Jd = geometric_jacobian_dot(chain, q, qd);
  const Vec3 theta = so3::log_so3(k.ee.R);
  const Mat3 Linv = so3::left_jacobian_inverse(theta);
  const Vec3 theta_dot = Linv * (J.topRows<3>() * qd);
  Mat6 out = Jd;
  out.topRows<3>() = so3::left_jacobian_inverse_dot(theta, theta_dot) * J.topRows<3>() +
                     Linv * Jd.topRows<3>();
  return out;
}

Mat6 mass_matrix(const ChainModel& chain, const Vec6& q) {
  const Kinematics k = compute_kinematics(chain, q);
  Mat6 M = Mat6::Zero();
  for (int i = 0; i < kDof; ++i) {
    Eigen::Matrix<double, 3, kDof> Jv = Eigen::Matrix<double, 3, kDof>::Zero();
    Eigen::Matrix<double, 3, kDof> Jw = Eigen::Matrix<double, 3, kDof>::Zero();
    for (int j = 0; j <= i; ++j) {
      Jw.col(j) = k.axis[j];
      Jv.col(j) = k.axis[j].cross(k.com[i] - k.origin[j]);
    }
    const Mat3 Iw = k.rotation[i] * chain.links[i].inertia * k.rotation[i].transpose();
    M.noalias() += chain.links[i].mass * Jv.transpose() * Jv + Jw.transpose() * Iw * Jw;
  }
  return 0.5 * (M + M.transpose());
}

Vec6 inverse_dynamics(const ChainModel& chain, const Vec6& q, const Vec6& qd, const Vec6& qdd,
                      const Wrench& ext, bool with_gravity) {
  const Kinematics k = compute_kinematics(chain, q);

  std::array<Vec3, kDof> omega;
  std::array<Vec3, kDof> alpha;
  std::array<Vec3, kDof> force;   // net force on link i
  std::array<Vec3, kDof> moment;  // net moment on link i about its COM

  Vec3 w = Vec3::Zero();
  Vec3 wd = Vec3::Zero();
  Vec3 a = with_gravity ? Vec3(-chain.gravity) : Vec3(Vec3::Zero());  // origin acceleration
  Vec3 prev_origin = k.origin[0];
  for (int i = 0; i < kDof; ++i) {
    const Vec3 r = k.origin[i] - prev_origin;
    a = a + wd.cross(r) + w.cross(w.cross(r));
    const Vec3 z = k.axis[i];
    const Vec3 w_next = w + z * qd(i);
    wd = wd + z * qdd(i) + w.cross(z * qd(i));
    w = w_next;
    omega[i] = w;
    alpha[i] = wd;
    prev_origin = k.origin[i];

    const Vec3 rc = k.com[i] - k.origin[i];
    const Vec3 ac = a + wd.cross(rc) + w.cross(w.cross(rc));
    const Mat3 Iw = k.rotation[i] * chain.links[i].inertia * k.rotation[i].transpose();
    force[i] = chain.links[i].mass * ac;
    moment[i] = Iw * wd + w.cross(Iw * w);
  }

  Vec6 tau;
  Vec3 f = ext.force;
  Vec3 n = ext.moment;
  Vec3 child_origin = k.ee.p;
  for (int i = kDof - 1; i >= 0; --i) {
    // n is carried about the child point; shift it to this joint's origin
    n = n + (child_origin - k.origin[i]).cross(f);
    const Vec3 rc = k.com[i] - k.origin[i];
    n = n + moment[i] + rc.cross(force[i]);
    f = f + force[i];
    tau(i) = k.axis[i].dot(n);
    child_origin = k.origin[i];
  }
  return tau;
}

Vec6 bias_forces(const ChainModel& chain, const Vec6& q, const Vec6& qd) {
  return inverse_dynamics(chain, q, qd, Vec6::Zero());
}

Vec6 gravity_torque(const ChainModel& chain, const Vec6& q) {
  return inverse_dynamics(chain, q, Vec6::Zero(), Vec6::Zero());
}

Vec6 forward_dynamics(const ChainModel& chain, const JointState& s, const Vec6& tau,
                      const Wrench& ext) {
  const Mat6 M = mass_matrix(chain, s.q);
  // inverse dynamics at zero acceleration gives C qd + g + J^T F_ext
  const Vec6 rhs = tau - inverse_dynamics(chain, s.q, s.qd, Vec6::Zero(), ext);
  return M.llt().solve(rhs);
}

double kinetic_energy(const ChainModel& chain, const JointState& s) {
  return 0.5 * s.qd.dot(mass_matrix(chain, s.q) * s.qd);
}

double potential_energy(const ChainModel& chain, const Vec6& q) {
  const Kinematics k = compute_kinematics(chain, q);
  double u = 0.0;
  for (int i = 0; i < kDof; ++i) u -= chain.links[i].mass * chain.gravity.dot(k.com[i]);
  return u;
}

IkResult inverse_kinematics(const ChainModel& chain, const Pose& target, const Vec6& seed,
                            int max_iterations, double tolerance) {
  IkResult res;
  res.q = seed;
  constexpr double kDamping = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    const Pose ee = forward_kinematics(chain, res.q);
    Vec6 err;
    err << so3::log_so3(target.R * ee.R.transpose()), target.p - ee.p;
    res.orientation_error = err.head<3>().norm();
    res.position_error = err.tail<3>().norm();
    if (err.norm() < tolerance) {
      res.converged = true;
      return res;
    }
    // twist error is expressed at the world origin frame axes, EE point
    const Mat6 J = geometric_jacobian(chain, res.q);
    const Mat6 JJt = J * J.transpose() + kDamping * kDamping * Mat6::Identity();
    Vec6 step = J.transpose() * JJt.ldlt().solve(err);
    const double n = step.norm();
    if (n > 0.5) step *= 0.5 / n;
    res.q += step;
  }
  return res;
}

}  // namespace hpfc::dynamics
