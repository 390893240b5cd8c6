#include "hpfc/contact.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace hpfc::contact {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool square_wave_present(const SquareWaveProfile& s, double t) {
  const double phase = t / s.period - std::floor(t / s.period);
  return phase < s.duty;
}

}  // namespace

void ContactEnv::validate() const {
  if (!(stiffness >= 0.0) || !std::isfinite(stiffness)) {
    throw std::invalid_argument("contact: stiffness must be finite and >= 0");
  }
  if (!(noise_amplitude >= 0.0)) throw std::invalid_argument("contact: noise amplitude must be >= 0");
  std::visit(overloaded{
                 [](const PlaneProfile&) {},
                 [](const BoxFaceProfile&) {},
                 [](const SinusoidProfile& s) {
                   if (!std::isfinite(s.offset) || !std::isfinite(s.amplitude) ||
                       !std::isfinite(s.frequency)) {
                     throw std::invalid_argument("contact: sinusoid parameters must be finite");
                   }
                 },
                 [](const EllipsoidProfile& e) {
                   if (!(e.semi_axes.minCoeff() > 0.0)) {
                     throw std::invalid_argument("contact: ellipsoid semi-axes must be positive");
                   }
                 },
                 [](const SquareWaveProfile& s) {
                   if (!(s.period > 0.0) || !(s.duty >= 0.0 && s.duty <= 1.0)) {
                     throw std::invalid_argument("contact: square wave needs period > 0, duty in [0,1]");
                   }
                 },
             },
             topography);
}

std::string profile_name(const Topography& t) {
  return std::visit(overloaded{
                        [](const PlaneProfile&) { return std::string("plane"); },
                        [](const SinusoidProfile&) { return std::string("sinusoid"); },
                        [](const EllipsoidProfile&) { return std::string("ellipsoid"); },
                        [](const SquareWaveProfile&) { return std::string("square_wave"); },
                        [](const BoxFaceProfile&) { return std::string("box_face"); },
                    },
                    t);
}

std::optional<double> surface_height(const ContactEnv& env, double x, double y, double t) {
  return std::visit(
      overloaded{
          [](const PlaneProfile& p) -> std::optional<double> { return p.height; },
          [](const BoxFaceProfile& p) -> std::optional<double> { return p.height; },
          [t](const SinusoidProfile& s) -> std::optional<double> {
            return s.offset + s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t);
          },
          [x, y](const EllipsoidProfile& e) -> std::optional<double> {
            const double u = (x - e.center.x()) / e.semi_axes.x();
            const double v = (y - e.center.y()) / e.semi_axes.y();
            const double r = 1.0 - u * u - v * v;
            if (r < 0.0) return std::nullopt;
            return e.center.z() + e.semi_axes.z() * std::sqrt(r);
          },
          [t](const SquareWaveProfile& s) -> std::optional<double> {
            if (square_wave_present(s, t)) return s.height;
            return std::nullopt;
          },
      },
      env.topography);
}

double nominal_height(const ContactEnv& env, double x, double y, double t) {
  if (const auto* s = std::get_if<SquareWaveProfile>(&env.topography)) return s->height;
  if (const auto* e = std::get_if<EllipsoidProfile>(&env.topography)) {
    return surface_height(env, x, y, t).value_or(e->center.z());
  }
  return *surface_height(env, x, y, t);
}

double delta_k(const ContactEnv& env, double q_z, double z_t) {
  return q_z > z_t ? env.stiffness : 0.0;
}

double contact_force(const ContactEnv& env, double q_z, double z_t) {
  return delta_k(env, q_z, z_t) * (q_z - z_t);
}

double contact_force(const ContactEnv& env, std::optional<double> q_z, double z_t) {
  if (!q_z) return 0.0;
  return contact_force(env, *q_z, z_t);
}

dynamics::Wrench ft_sensor_read(const dynamics::Wrench& true_wrench, const ContactEnv& env,
                                std::uint64_t rng_seed, std::uint64_t sample_index) {
  if (env.noise_amplitude == 0.0) return true_wrench;
  std::seed_seq seq{static_cast<std::uint32_t>(rng_seed), static_cast<std::uint32_t>(rng_seed >> 32),
                    static_cast<std::uint32_t>(sample_index),
                    static_cast<std::uint32_t>(sample_index >> 32)};
  std::mt19937_64 gen(seq);
  std::uniform_real_distribution<double> noise(-env.noise_amplitude, env.noise_amplitude);
  dynamics::Wrench out = true_wrench;
  for (int i = 0; i < 3; ++i) out.moment(i) += noise(gen);
  for (int i = 0; i < 3; ++i) out.force(i) += noise(gen);
  return out;
}

bool friction_check(double normal, const Eigen::Vector2d& tangential, double mu) {
  if (!(normal >= 0.0)) throw std::invalid_argument("friction_check: normal force must be >= 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("friction_check: mu must be >= 0");
  return tangential.norm() <= mu * normal;
}

}  // namespace hpfc::contact
