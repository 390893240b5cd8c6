#pragma once

#include "hpfc/dynamics.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace hpfc::contact {

struct PlaneProfile {
  double height = 0.0;  // m
};

/// q_z(t) = offset + amplitude * sin(2 pi frequency t)
struct SinusoidProfile {
  double offset = 0.01;
  double amplitude = 0.01;
  double frequency = 0.2;  // Hz
};

/// Upper cap of an axis-aligned ellipsoid.
struct EllipsoidProfile {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d semi_axes{0.15, 0.10, 0.05};
};

/// Surface at `height` for the first `duty` fraction of every period, absent
/// otherwise.
struct SquareWaveProfile {
  double height = 0.0;
  double period = 10.0;
  double duty = 0.5;
};

/// Planar face whose height along the working axis is set by the simulation
/// (the box faces of the dual-arm scene).
struct BoxFaceProfile {
  double height = 0.0;
};

using Topography =
    std::variant<PlaneProfile, SinusoidProfile, EllipsoidProfile, SquareWaveProfile, BoxFaceProfile>;

struct ContactEnv {
  double stiffness = 1500.0;    // N/m
  Topography topography = PlaneProfile{};
  double noise_amplitude = 0.0; // N (and N m for moments)

  void validate() const;
};

struct ContactReading {
  double normal = 0.0;                              // N, >= 0
  Eigen::Vector2d tangential = Eigen::Vector2d::Zero();
  bool in_contact = false;
};

std::string profile_name(const Topography& t);

/// Surface height under (x, y) at time t; nullopt when there is no surface
/// there (outside the ellipsoid footprint, absent square-wave phase).
std::optional<double> surface_height(const ContactEnv& env, double x, double y, double t);

/// Height the surface is expected at, ignoring absent phases. This is what
/// the controller's contact-height estimate is built from.
double nominal_height(const ContactEnv& env, double x, double y, double t);

/// Piecewise stiffness selector: k when q_z > z_t, else 0.
double delta_k(const ContactEnv& env, double q_z, double z_t);

/// Unilateral spring law f_z = delta(k) (q_z - z_t).
double contact_force(const ContactEnv& env, double q_z, double z_t);

/// Same law, with "no surface" mapped to zero force.
double contact_force(const ContactEnv& env, std::optional<double> q_z, double z_t);

/// Simulated force/torque sensor: adds zero-mean uniform noise of the
/// configured amplitude. Noise is a pure function of (seed, sample_index).
dynamics::Wrench ft_sensor_read(const dynamics::Wrench& true_wrench, const ContactEnv& env,
                                std::uint64_t rng_seed, std::uint64_t sample_index = 0);

/// Coulomb cone membership: |tangential| <= mu * normal.
bool friction_check(double normal, const Eigen::Vector2d& tangential, double mu);

}  // namespace hpfc::contact
