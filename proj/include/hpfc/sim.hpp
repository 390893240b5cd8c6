#pragma once

#include "hpfc/contact.hpp"
#include "hpfc/control.hpp"
#include "hpfc/dynamics.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpfc::sim {

using dynamics::Mat3;
using dynamics::Vec3;
using dynamics::Vec6;

enum class ScenarioKind { one_dof_rig, contour_tracking, dual_arm_grab };

std::string to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(const std::string& s);

/// Scalar rig: error dynamics of the z channel, force PI law and spring
/// contact, with no arm.
struct RigParams {
  double z_t0 = 0.05;
  double z_d0 = -0.001;
  double z_e_rate0 = 0.0;
  double int_z_e0 = 0.0;
  double int_f_e0 = 0.0;
  double epsilon = 0.0;   // coupling of f_z into the z error dynamics
  double eta = 0.0;
};

/// Raster over an ellipsoid cap with a constant tool orientation.
struct ContourParams {
  Vec3 orientation = Vec3::Zero();  // axis-angle of the tool, world frame
  Vec6 q_seed = Vec6::Zero();       // IK seed for the start pose
  Eigen::Vector2d center{0.45, 0.0};  // raster center unless the surface is an ellipsoid
  double start_gap = 0.002;         // start this far above the apex
  double approach_time = 2.0;       // hold (x, y) while contact builds
  double ramp_time = 2.0;           // raster speed blends in over this
  Eigen::Vector2d amplitude{0.06, 0.04};
  Eigen::Vector2d omega{0.3, 0.05}; // rad/s of the raster phase
};

enum class FrameSource { commanded, measured };

struct DualArmParams {
  Vec3 base_a{0.45, -0.45, 0.0};
  double yaw_a = 0.0;
  Vec3 base_b{0.45, 0.55, 0.0};
  double yaw_b = 3.141592653589793;
  Vec6 q_seed_a = Vec6::Zero();
  Vec6 q_seed_b = Vec6::Zero();
  Vec3 orientation_a{-1.5707963267948966, 0.0, 0.0};  // tool z along +y
  Vec3 orientation_b{1.5707963267948966, 0.0, 0.0};   // tool z along -y
  double box_mass = 1.0;
  double box_edge = 0.2;
  Vec3 box_center{0.3, 0.0, 0.15};
  Vec3 displacement{0.27, 0.1, 0.27};
  double lift_start = 1.0;
  double lift_end = 5.0;
  double friction = 0.9;
  double tangential_stiffness = 5000.0;  // stick spring at each face
  double tangential_damping = 100.0;
  double support_stiffness = 20000.0;    // table under the box before lift
  double support_damping = 200.0;
  double start_gap = -0.004;  // arm B start offset from its face; -f_d/k starts at the balanced grip
  bool box_present = true;
  FrameSource frame_source = FrameSource::commanded;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::one_dof_rig;
  std::filesystem::path chain_path;
  contact::ContactEnv env;
  control::HybridConfig controller;
  double q_hat_offset = 0.005;  // half the estimate bound below the surface
  double duration = 5.0;
  double physics_step = 1e-4;
  double control_period = 1e-3;
  std::uint64_t seed = 0;
  RigParams rig;
  ContourParams contour;
  DualArmParams dual;
  std::vector<std::pair<std::string, std::string>> metadata;  // flattened config

  void validate() const;
};

class SimulationAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimLog {
  ScenarioKind kind = ScenarioKind::one_dof_rig;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> warnings;
  bool aborted = false;
  std::string abort_reason;

  /// Index of a column; throws std::out_of_range if absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::vector<double> series(const std::string& name) const;
};

/// Semi-implicit Euler: qd+ = qd + h qdd, q+ = q + h qd+. Throws
/// SimulationAbort on a non-finite acceleration.
dynamics::JointState integrate_step(const dynamics::ChainModel& chain,
                                    const dynamics::JointState& s, const Vec6& tau,
                                    const dynamics::Wrench& ext, double h);

SimLog run_one_dof_rig(const Scenario& sc);
SimLog run_contour_tracking(const Scenario& sc);
SimLog run_dual_arm_grab(const Scenario& sc);
SimLog run_scenario(const Scenario& sc);

/// `# key=value` metadata lines, one header line, one row per control step
/// with 9 significant digits, and `# status=aborted reason=...` on abort.
void write_log(const SimLog& log, const std::filesystem::path& path);
std::string format_log(const SimLog& log);

/// Parses a log written by write_log. Throws std::runtime_error naming the
/// 1-based line number of the first malformed line.
SimLog read_log(const std::filesystem::path& path);
SimLog parse_log(const std::string& text);

struct RunSummary {
  double first_contact_time = -1.0;  // -1 when contact never happened
  double settle_time = -1.0;         // |f_e| < band from here on; -1 if never
  double settle_after_contact = -1.0;
  double steady_rms_force_error = 0.0;  // over the final half of the run
  double max_tracking_error = 0.0;
  int mode_switches = 0;
  bool aborted = false;
  std::string abort_reason;
};

constexpr double kSettleBand = 0.05;  // N

RunSummary summarize(const SimLog& log, double settle_band = kSettleBand);

}  // namespace hpfc::sim
