#include "hpfc/sim.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hpfc::sim {

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::one_dof_rig: return "one_dof_rig";
    case ScenarioKind::contour_tracking: return "contour_tracking";
    case ScenarioKind::dual_arm_grab: return "dual_arm_grab";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "one_dof_rig") return ScenarioKind::one_dof_rig;
  if (s == "contour_tracking") return ScenarioKind::contour_tracking;
  if (s == "dual_arm_grab") return ScenarioKind::dual_arm_grab;
  throw std::invalid_argument("unknown scenario kind '" + s + "'");
}

void Scenario::validate() const {
  if (!(physics_step > 0.0) || !(control_period > 0.0)) {
    throw std::invalid_argument("scenario: physics_step and control_period must be > 0");
  }
  if (control_period < physics_step) {
    throw std::invalid_argument("scenario: control_period must be >= physics_step");
  }
  const double ratio = control_period / physics_step;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw std::invalid_argument("scenario: control_period must be a multiple of physics_step");
  }
  if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be > 0");
  env.validate();
  controller.validate();
}

std::size_t SimLog::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("log has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

bool SimLog::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> SimLog::series(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

dynamics::JointState integrate_step(const dynamics::ChainModel& chain,
                                    const dynamics::JointState& s, const Vec6& tau,
                                    const dynamics::Wrench& ext, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("integrate_step: h must be > 0");
  const Vec6 qdd = dynamics::forward_dynamics(chain, s, tau, ext);
  if (!qdd.allFinite()) throw SimulationAbort("non-finite joint acceleration");
  dynamics::JointState out;
  out.qd = s.qd + h * qdd;
  out.q = s.q + h * out.qd;
  return out;
}

// ---------------------------------------------------------------------------
// scalar rig

namespace {

using RigState = Eigen::Matrix<double, 5, 1>;  // int z_e, z_t, dz_e/dt, z_d, int f_e

struct RigAux {
  double f = 0.0;        // physical spring force, >= 0
  double f_signed = 0.0;
  double f_e = 0.0;
  double u_c = 0.0;
  double q_z = 0.0;
  bool surface = false;
  bool in_contact = false;
};

struct RigModel {
  const Scenario& sc;
  double noise = 0.0;  // held over one physics step

  RigState deriv(double t, const RigState& y, RigAux* aux = nullptr) const {
    const auto& cfg = sc.controller;
    const double sign = cfg.sign == control::ForceSign::positive ? 1.0 : -1.0;
    const auto qz = contact::surface_height(sc.env, 0.0, 0.0, t);
    const double f = contact::contact_force(sc.env, qz, y(1));
    const double f_signed = sign * (f + noise);
    const double f_e = sign * cfg.desired_force - f_signed;
    const bool in_contact = std::abs(f_signed) > cfg.limits.contact_threshold;

    double u = 0.0;
    if (cfg.force_enabled) {
      u = cfg.force.kp1 * f_e + cfg.force.ki1 * y(4);
      const double q_hat = contact::nominal_height(sc.env, 0.0, 0.0, t) - sc.q_hat_offset;
      if (cfg.saturation && !in_contact && y(3) < q_hat) u = 0.0;
    }

    const double z_e = y(3) - y(1);
    RigState d;
    d(0) = z_e;
    d(1) = u - y(2);
    d(2) = -cfg.motion.kv * y(2) - cfg.motion.kp * z_e - cfg.motion.ki * y(0) +
           sc.rig.epsilon * f + sc.rig.eta;
    d(3) = u;
    const double w = cfg.limits.force_windup;
    d(4) = ((y(4) >= w && f_e > 0.0) || (y(4) <= -w && f_e < 0.0)) ? 0.0 : f_e;

    if (aux) {
      aux->f = f;
      aux->f_signed = f_signed;
      aux->f_e = f_e;
      aux->u_c = u;
      aux->q_z = contact::nominal_height(sc.env, 0.0, 0.0, t);
      aux->surface = qz.has_value();
      aux->in_contact = in_contact;
    }
    return d;
  }
};

std::vector<std::pair<std::string, std::string>> base_metadata(const Scenario& sc) {
  std::vector<std::pair<std::string, std::string>> md;
  md.emplace_back("kind", to_string(sc.kind));
  for (const auto& kv : sc.metadata) {
    if (kv.first != "kind") md.push_back(kv);
  }
  return md;
}

}  // namespace

SimLog run_one_dof_rig(const Scenario& sc) {
  sc.validate();
  if (sc.controller.pid) {
    throw std::invalid_argument("one_dof_rig: the PID law is only available on the arm scenarios");
  }
  SimLog log;
  log.kind = ScenarioKind::one_dof_rig;
  log.metadata = base_metadata(sc);
  log.columns = {"t",   "z_t", "z_d",     "z_e",     "z_e_rate", "f_z",  "f_e", "u_c",
                 "q_z", "surface", "mode", "int_z_e", "int_f_e", "tracking_error"};

  RigModel model{sc};
  RigState y;
  y << sc.rig.int_z_e0, sc.rig.z_t0, sc.rig.z_e_rate0, sc.rig.z_d0, sc.rig.int_f_e0;

  const double h = sc.physics_step;
  const long per_control = std::lround(sc.control_period / h);
  const long steps = std::lround(sc.duration / h);
  const double w = sc.controller.limits.force_windup;

  auto noise_at = [&](long i) {
    if (sc.env.noise_amplitude == 0.0) return 0.0;
    dynamics::Wrench zero;
    return contact::ft_sensor_read(zero, sc.env, sc.seed, static_cast<std::uint64_t>(i)).force.z();
  };

  auto record = [&](double t) {
    RigAux a;
    model.deriv(t, y, &a);
    const double z_e = y(3) - y(1);
    log.rows.push_back({t, y(1), y(3), z_e, y(2), a.f_signed, a.f_e, a.u_c, a.q_z,
                        a.surface ? 1.0 : 0.0, a.in_contact ? 1.0 : 0.0, y(0), y(4),
                        std::abs(z_e)});
  };

  model.noise = noise_at(0);
  record(0.0);
  for (long i = 0; i < steps; ++i) {
    const double t = i * h;
    model.noise = noise_at(i);
    const RigState k1 = model.deriv(t, y);
    const RigState k2 = model.deriv(t + 0.5 * h, y + 0.5 * h * k1);
    const RigState k3 = model.deriv(t + 0.5 * h, y + 0.5 * h * k2);
    const RigState k4 = model.deriv(t + h, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    y(4) = std::clamp(y(4), -w, w);

    if (!y.allFinite() || std::abs(y(1)) > 10.0) {
      log.aborted = true;
      std::ostringstream os;
      os << "unstable: |z_t| exceeded 10 m at t=" << (i + 1) * h;
      log.abort_reason = os.str();
      break;
    }
    if ((i + 1) % per_control == 0) {
      model.noise = noise_at(i + 1);
      record((i + 1) * h);
    }
  }
  return log;
}

SimLog run_scenario(const Scenario& sc) {
  switch (sc.kind) {
    case ScenarioKind::one_dof_rig: return run_one_dof_rig(sc);
    case ScenarioKind::contour_tracking: return run_contour_tracking(sc);
    case ScenarioKind::dual_arm_grab: return run_dual_arm_grab(sc);
  }
  throw std::invalid_argument("unknown scenario kind");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

std::string format_log(const SimLog& log) {
  std::string out;
  bool kind_written = false;
  for (const auto& [k, v] : log.metadata) {
    if (k == "kind") kind_written = true;
  }
  if (!kind_written) out += "# kind=" + to_string(log.kind) + "\n";
  for (const auto& [k, v] : log.metadata) out += "# " + k + "=" + sanitize(v) + "\n";
  for (const auto& w : log.warnings) out += "# warning=" + sanitize(w) + "\n";
  for (std::size_t i = 0; i < log.columns.size(); ++i) {
    if (i) out += ',';
    out += log.columns[i];
  }
  out += '\n';
  for (const auto& row : log.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  if (log.aborted) out += "# status=aborted reason=" + sanitize(log.abort_reason) + "\n";
  return out;
}

void write_log(const SimLog& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << format_log(log);
  f.flush();
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

SimLog parse_log(const std::string& text) {
  SimLog log;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  auto fail = [&](const std::string& what) {
    std::string where = "malformed log at line " + std::to_string(lineno);
    if (have_header) where += " (data row " + std::to_string(log.rows.size() + 1) + ")";
    throw std::runtime_error(where + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string value = body.substr(eq + 1);
      if (key == "status") {
        log.aborted = value.rfind("aborted", 0) == 0;
        const auto r = value.find("reason=");
        if (r != std::string::npos) log.abort_reason = value.substr(r + 7);
      } else if (key == "warning") {
        log.warnings.push_back(value);
      } else {
        if (key == "kind") {
          try {
            log.kind = scenario_kind_from_string(value);
          } catch (const std::invalid_argument&) {
            fail("unknown kind '" + value + "'");
          }
        }
        log.metadata.emplace_back(key, value);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (!have_header) {
      for (const auto& c : cells) {
        if (c.empty()) fail("empty column name in header");
      }
      log.columns = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != log.columns.size()) {
      fail("expected " + std::to_string(log.columns.size()) + " fields, found " +
           std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size()) fail("not a number: '" + c + "'");
      row.push_back(v);
    }
    log.rows.push_back(std::move(row));
  }
  if (!have_header) {
    lineno = std::max(lineno, 1);
    fail("missing column header");
  }
  return log;
}

SimLog read_log(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open log '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_log(ss.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

RunSummary summarize(const SimLog& log, double band) {
  RunSummary s;
  s.aborted = log.aborted;
  s.abort_reason = log.abort_reason;
  if (log.rows.empty()) return s;
  const auto t = log.series("t");
  const auto fe = log.series("f_e");
  const auto mode = log.series("mode");

  for (std::size_t i = 0; i < t.size(); ++i) {
    if (mode[i] > 0.5) {
      s.first_contact_time = t[i];
      break;
    }
  }
  for (std::size_t i = 1; i < mode.size(); ++i) {
    if ((mode[i] > 0.5) != (mode[i - 1] > 0.5)) ++s.mode_switches;
  }

  long last_bad = -1;
  for (std::size_t i = 0; i < fe.size(); ++i) {
    if (!(std::abs(fe[i]) < band)) last_bad = static_cast<long>(i);
  }
  if (last_bad < 0) {
    s.settle_time = t.front();
  } else if (last_bad + 1 < static_cast<long>(t.size())) {
    s.settle_time = t[last_bad + 1];
  }
  if (s.settle_time >= 0.0 && s.first_contact_time >= 0.0) {
    s.settle_after_contact = s.settle_time - s.first_contact_time;
  }

  const double half = t.front() + 0.5 * (t.back() - t.front());
  double acc = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= half) {
      acc += fe[i] * fe[i];
      ++n;
    }
  }
  s.steady_rms_force_error = n ? std::sqrt(acc / n) : 0.0;

  if (log.has_column("tracking_error")) {
    for (double e : log.series("tracking_error")) s.max_tracking_error = std::max(s.max_tracking_error, e);
  }
  return s;
}

}  // namespace hpfc::sim
