#pragma once

#include "hpfc/control.hpp"

#include <Eigen/Core>

#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace hpfc::analysis {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat62 = Eigen::Matrix<double, 6, 2>;
using Vec2 = Eigen::Vector2d;

/// Parameters of the linearized force channel. State ordering:
///   w1 = int z_e, w2 = z_t, w3 = dz_e/dt, w4 = z_d, w5 = int f_e, w6 = f_e.
struct ClosedLoopParams {
  control::MotionGains motion{};
  control::ForceGains force{};
  double stiffness = 1500.0;
  double epsilon = 0.0;
  bool contact = true;  // selects delta(k) = k (true) or 0

  double delta() const { return contact ? stiffness : 0.0; }
};

struct ClosedLoopModel {
  Mat6 A = Mat6::Zero();
  Mat62 B = Mat62::Zero();
  ClosedLoopParams params;

  /// [eta - epsilon delta q_z; -delta dq_z/dt]
  Vec2 input(double q_z, double q_z_rate, double eta = 0.0) const;
};

/// Row 3 of the state matrix carries the velocity gain in the (3,3) slot.
ClosedLoopModel build_closed_loop(const ClosedLoopParams& params);

/// Upper-left 3x3 block: the (w1, w2, w3) dynamics left when delta(k) = 0.
Eigen::Matrix3d non_contact_block(const ClosedLoopModel& model);

struct SpectrumReport {
  std::vector<std::complex<double>> eigenvalues;
  int rank = 0;
  int zero_eigenvalues = 0;
  Vec6 null_vector = Vec6::Zero();
  bool stable_nonzero_part = false;
  bool nullvector_structure_ok = false;
  bool repeated_eigenvalues = false;
  bool outside_hypothesis = false;  // epsilon != 0
};

/// Eigenvalues, singular-value rank (threshold 1e-9 scaled by the largest
/// singular value), and the structure of the zero-eigenvalue null vector
/// (components 3, 5 and 6 must vanish).
SpectrumReport spectrum(const ClosedLoopModel& model);

/// |G(j omega)| for G(s) = s / (s^3 + Kv s^2 + Kp s + Ki). Throws
/// std::invalid_argument naming the violated Routh condition.
double transfer_magnitude(const control::MotionGains& gains, double omega);

std::vector<std::pair<double, double>> frequency_response(const control::MotionGains& gains,
                                                          const std::vector<double>& omegas);

using InputSignal = std::function<Vec2(double)>;

/// RK4 integration of dW/dt = A W + B U_w(t).
std::vector<Vec6> simulate_linear(const ClosedLoopModel& model, const Vec6& w0,
                                  const InputSignal& input, double duration, double step);

struct BiboBound {
  bool analytic_available = false;
  std::string reason;        // why the analytic path is unavailable
  double gamma = 0.0;
  double bound = 0.0;        // gamma * |U_w|_inf
  double empirical = 0.0;    // max |f_e| over the final quarter of the simulated window
  bool has_empirical = false;
};

struct EmpiricalRun {
  InputSignal input;
  Vec6 w0 = Vec6::Zero();
  double duration = 20.0;
  double step = 1e-4;
};

/// Gamma from the eigen-decomposition A = V D V^{-1}:
///   sum over nonzero lambda_i of |V(6,i)| / |Re lambda_i| * (|Vinv(i,3)| + |Vinv(i,6)|).
BiboBound bibo_bound_estimate(const ClosedLoopModel& model, double input_bound,
                              const EmpiricalRun* empirical = nullptr);

struct GainPoint {
  double kp1;
  double ki1;
};

/// Grid points whose contact-mode model has exactly one zero eigenvalue and
/// all other eigenvalues in the open left half-plane.
std::vector<GainPoint> gain_search(const std::vector<double>& kp1_values,
                                   const std::vector<double>& ki1_values,
                                   const control::MotionGains& motion, double stiffness);

bool is_stabilizing(const ClosedLoopParams& params);

}  // namespace hpfc::analysis
