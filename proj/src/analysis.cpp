#include "hpfc/analysis.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpfc::analysis {

namespace {

constexpr double kRankTol = 1e-9;
constexpr double kStructureTol = 1e-9;

double matrix_scale(const Mat6& A) { return std::max(1.0, A.norm()); }

// Index of the eigenvalue closest to zero.
Eigen::Index zero_index(const Eigen::Matrix<std::complex<double>, 6, 1>& ev) {
  Eigen::Index idx = 0;
  ev.cwiseAbs().minCoeff(&idx);
  return idx;
}

}  // namespace

Vec2 ClosedLoopModel::input(double q_z, double q_z_rate, double eta) const {
  const double d = params.delta();
  return {eta - params.epsilon * d * q_z, -d * q_z_rate};
}

ClosedLoopModel build_closed_loop(const ClosedLoopParams& p) {
  const double kv = p.motion.kv;
  const double kp = p.motion.kp;
  const double ki = p.motion.ki;
  const double kp1 = p.force.kp1;
  const double ki1 = p.force.ki1;
  const double d = p.delta();

  ClosedLoopModel m;
  m.params = p;
  m.A << 0, -1, 0, 1, 0, 0,
         0, 0, -1, 0, ki1, kp1,
         -ki, p.epsilon * d + kp, -kv, -kp, 0, 0,
         0, 0, 0, 0, ki1, kp1,
         0, 0, 0, 0, 0, 1,
         0, 0, -d, 0, d * ki1, d * kp1;
  m.B.setZero();
  m.B(2, 0) = 1.0;
  m.B(5, 1) = 1.0;
  return m;
}

Eigen::Matrix3d non_contact_block(const ClosedLoopModel& model) {
  return model.A.topLeftCorner<3, 3>();
}

SpectrumReport spectrum(const ClosedLoopModel& model) {
  SpectrumReport r;
  r.outside_hypothesis = model.params.epsilon != 0.0;

  Eigen::EigenSolver<Mat6> eig(model.A, false);
  const auto ev = eig.eigenvalues();
  const double scale = matrix_scale(model.A);
  for (int i = 0; i < 6; ++i) r.eigenvalues.push_back(ev(i));

  Eigen::JacobiSVD<Mat6> svd(model.A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = kRankTol * std::max(sv(0), 1e-300);
  r.rank = static_cast<int>((sv.array() > tol).count());

  r.stable_nonzero_part = true;
  for (int i = 0; i < 6; ++i) {
    if (std::abs(ev(i)) < kRankTol * scale) {
      ++r.zero_eigenvalues;
    } else if (!(ev(i).real() < 0.0)) {
      r.stable_nonzero_part = false;
    }
    for (int j = i + 1; j < 6; ++j) {
      if (std::abs(ev(i) - ev(j)) < 1e-6 * scale) r.repeated_eigenvalues = true;
    }
  }

  Vec6 v = svd.matrixV().col(5);
  Eigen::Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  if (v(big) < 0.0) v = -v;
  r.null_vector = v / v.norm();
  r.nullvector_structure_ok = r.rank < 6 && std::abs(r.null_vector(2)) < kStructureTol &&
                              std::abs(r.null_vector(4)) < kStructureTol &&
                              std::abs(r.null_vector(5)) < kStructureTol;
  return r;
}

double transfer_magnitude(const control::MotionGains& gains, double omega) {
  if (const auto violation = gains.routh_violation()) {
    throw std::invalid_argument("motion gains are not Hurwitz: violates " + *violation);
  }
  const std::complex<double> s(0.0, omega);
  const std::complex<double> den = s * s * s + gains.kv * s * s + gains.kp * s + gains.ki;
  return std::abs(s / den);
}

std::vector<std::pair<double, double>> frequency_response(const control::MotionGains& gains,
                                                          const std::vector<double>& omegas) {
  std::vector<std::pair<double, double>> out;
  out.reserve(omegas.size());
  for (double w : omegas) out.emplace_back(w, transfer_magnitude(gains, w));
  return out;
}

std::vector<Vec6> simulate_linear(const ClosedLoopModel& model, const Vec6& w0,
                                  const InputSignal& input, double duration, double step) {
  if (!(step > 0.0) || !(duration >= 0.0)) {
    throw std::invalid_argument("simulate_linear: step must be > 0 and duration >= 0");
  }
  const auto f = [&](double t, const Vec6& w) -> Vec6 {
    return model.A * w + model.B * (input ? input(t) : Vec2::Zero());
  };
  const auto n = static_cast<long>(std::llround(duration / step));
  std::vector<Vec6> out;
  out.reserve(n + 1);
  Vec6 w = w0;
  out.push_back(w);
  for (long i = 0; i < n; ++i) {
    const double t = i * step;
    const Vec6 k1 = f(t, w);
    const Vec6 k2 = f(t + 0.5 * step, w + 0.5 * step * k1);
    const Vec6 k3 = f(t + 0.5 * step, w + 0.5 * step * k2);
    const Vec6 k4 = f(t + step, w + step * k3);
    w += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.push_back(w);
  }
  return out;
}

BiboBound bibo_bound_estimate(const ClosedLoopModel& model, double input_bound,
                              const EmpiricalRun* empirical) {
  BiboBound b;
  const SpectrumReport rep = spectrum(model);
  if (!rep.stable_nonzero_part) {
    b.reason = "nonzero spectrum is not stable";
  } else if (rep.repeated_eigenvalues) {
    b.reason = "repeated eigenvalues: A_w may be defective";
  } else {
    Eigen::EigenSolver<Mat6> eig(model.A, true);
    const auto ev = eig.eigenvalues();
    const Eigen::Matrix<std::complex<double>, 6, 6> V = eig.eigenvectors();
    Eigen::FullPivLU<Eigen::Matrix<std::complex<double>, 6, 6>> lu(V);
    const double cond = V.norm() * lu.inverse().norm();
    if (!lu.isInvertible() || !(cond < 1e12)) {
      b.reason = "eigenvector matrix is ill-conditioned";
    } else {
      const auto Vinv = lu.inverse();
      const Eigen::Index z = zero_index(ev);
      double gamma = 0.0;
      for (Eigen::Index i = 0; i < 6; ++i) {
        if (i == z) continue;
        const double eps_i = 1.0 / std::abs(ev(i).real());
        gamma += std::abs(V(5, i)) * eps_i * (std::abs(Vinv(i, 2)) + std::abs(Vinv(i, 5)));
      }
      b.analytic_available = true;
      b.gamma = gamma;
      b.bound = gamma * input_bound;
    }
  }

  if (empirical) {
    const auto traj =
        simulate_linear(model, empirical->w0, empirical->input, empirical->duration, empirical->step);
    const std::size_t start = traj.size() * 3 / 4;
    double worst = 0.0;
    for (std::size_t i = start; i < traj.size(); ++i) worst = std::max(worst, std::abs(traj[i](5)));
    b.empirical = worst;
    b.has_empirical = true;
  }
  return b;
}

bool is_stabilizing(const ClosedLoopParams& params) {
  const SpectrumReport r = spectrum(build_closed_loop(params));
  return r.stable_nonzero_part && r.zero_eigenvalues == 1;
}

std::vector<GainPoint> gain_search(const std::vector<double>& kp1_values,
                                   const std::vector<double>& ki1_values,
                                   const control::MotionGains& motion, double stiffness) {
  std::vector<GainPoint> out;
  for (double kp1 : kp1_values) {
    for (double ki1 : ki1_values) {
      ClosedLoopParams p;
      p.motion = motion;
      p.force = {kp1, ki1, 0.0};
      p.stiffness = stiffness;
      p.contact = true;
      if (is_stabilizing(p)) out.push_back({kp1, ki1});
    }
  }
  return out;
}

}  // namespace hpfc::analysis
