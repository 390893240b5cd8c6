#include "hpfc/cli.hpp"

#include "hpfc/config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hpfc::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Json time_or_null(double t) { return t < 0.0 ? Json(nullptr) : Json(t); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(part);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::invalid_argument(what + ": '" + s + "' is not a number");
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

// Plain CSV for plotting: header plus rows, no metadata comments.
std::string table(const sim::SimLog& log, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    if (!log.has_column(n)) throw std::invalid_argument("log has no column '" + n + "'");
    idx.push_back(log.column(n));
  }
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
  out += '\n';
  for (const auto& row : log.rows) {
    for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? "," : "") + fmt(row[idx[i]]);
    out += '\n';
  }
  return out;
}

Json spectrum_json(const analysis::ClosedLoopParams& p, const analysis::SpectrumReport& r) {
  Json eig = Json::array();
  for (const auto& e : r.eigenvalues) eig.push_back({e.real(), e.imag()});
  Json null = Json::array();
  for (int i = 0; i < 6; ++i) null.push_back(r.null_vector(i));
  return {
      {"stiffness", p.stiffness},
      {"epsilon", p.epsilon},
      {"contact", p.contact},
      {"motion_gains", {{"kv", p.motion.kv}, {"kp", p.motion.kp}, {"ki", p.motion.ki}}},
      {"force_gains", {{"kp1", p.force.kp1}, {"ki1", p.force.ki1}}},
      {"eigenvalues", eig},
      {"rank", r.rank},
      {"zero_eigenvalues", r.zero_eigenvalues},
      {"null_vector", null},
      {"stable", r.stable_nonzero_part},
      {"nullvector_structure_ok", r.nullvector_structure_ok},
      {"repeated_eigenvalues", r.repeated_eigenvalues},
      {"outside_hypothesis", r.outside_hypothesis},
  };
}

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

sim::Scenario load(const Common& c, const std::vector<std::string>& extra = {}) {
  auto ov = c.overrides;
  ov.insert(ov.end(), extra.begin(), extra.end());
  auto sc = config::load_scenario(c.config, ov);
  if (c.seed) {
    sc.seed = *c.seed;
    auto it = std::find_if(sc.metadata.begin(), sc.metadata.end(),
                           [](const auto& kv) { return kv.first == "seed"; });
    if (it == sc.metadata.end()) it = sc.metadata.insert(sc.metadata.end(), {"seed", ""});
    it->second = std::to_string(*c.seed);
  }
  return sc;
}

int cmd_simulate(const Common& c, std::ostream& out, std::ostream& err) {
  const auto sc = load(c);
  const fs::path dir = output_dir(c.out);
  ensure_dir(dir);
  const std::string stem = fs::path(c.config).stem().string();

  const auto log = sim::run_scenario(sc);
  const auto s = sim::summarize(log);
  const fs::path csv = dir / (stem + ".csv");
  const fs::path summary = dir / (stem + "_summary.json");
  sim::write_log(log, csv);
  const std::string text = summary_json(log, s);
  write_text(summary, text);

  out << "log: " << csv.string() << "\nsummary: " << summary.string() << '\n' << text;
  if (log.aborted) {
    err << "error: run aborted: " << log.abort_reason << '\n';
    return 3;
  }
  return 0;
}

struct AnalyzeArgs {
  std::optional<double> kv, kp, ki, kp1, ki1, k, epsilon;
  bool non_contact = false;
  std::string grid = "0.1:100:logarithmic:50";
};

int cmd_analyze(const Common& c, const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  analysis::ClosedLoopParams p;
  if (!c.config.empty()) p = closed_loop_params(load(c));
  if (a.kv) p.motion.kv = *a.kv;
  if (a.kp) p.motion.kp = *a.kp;
  if (a.ki) p.motion.ki = *a.ki;
  if (a.kp1) p.force.kp1 = *a.kp1;
  if (a.ki1) p.force.ki1 = *a.ki1;
  if (a.k) p.stiffness = *a.k;
  if (a.epsilon) p.epsilon = *a.epsilon;
  if (a.non_contact) p.contact = false;
  const auto omegas = parse_omega_grid(a.grid);

  const auto model = analysis::build_closed_loop(p);
  const auto report = analysis::spectrum(model);
  Json j = spectrum_json(p, report);

  std::string csv = "omega,magnitude\n";
  const auto violation = p.motion.routh_violation();
  j["motion_hurwitz"] = !violation.has_value();
  if (violation) {
    const std::string w = "motion gains are not Hurwitz: violates " + *violation;
    j["warning"] = w;
    err << "warning: " << w << "; frequency response not computed\n";
  } else {
    j["warning"] = nullptr;
    for (const auto& [w, m] : analysis::frequency_response(p.motion, omegas)) {
      csv += fmt(w) + "," + fmt(m) + "\n";
    }
  }
  const auto bibo = analysis::bibo_bound_estimate(model, 1.0);
  j["bibo_gamma"] = bibo.analytic_available ? Json(bibo.gamma) : Json(nullptr);
  if (!bibo.analytic_available) j["bibo_note"] = bibo.reason;

  const fs::path dir = output_dir(c.out);
  ensure_dir(dir);
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "spectrum.json", text);
  write_text(dir / "frequency.csv", csv);
  out << text;
  return 0;
}

struct PointResult {
  sim::RunSummary summary;
  bool linear_stable = false;
  std::string error;
};

int cmd_sweep(const Common& c, const std::vector<std::string>& specs, unsigned jobs,
              std::ostream& out, std::ostream& err) {
  if (specs.empty()) throw std::invalid_argument("sweep needs at least one --param key=v1,v2");
  std::vector<std::pair<std::string, std::vector<std::string>>> params;
  for (const auto& s : specs) params.push_back(parse_sweep_param(s));

  // Cartesian product, last parameter varying fastest.
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& [key, values] : params) {
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        next.push_back(p);
        next.back().push_back(v);
      }
    }
    points = std::move(next);
  }

  // Configs are checked up front so a typo fails before anything runs.
  std::vector<sim::Scenario> scenarios;
  for (const auto& p : points) {
    std::vector<std::string> ov;
    for (std::size_t i = 0; i < params.size(); ++i) ov.push_back(params[i].first + "=" + p[i]);
    scenarios.push_back(load(c, ov));
  }

  const fs::path dir = output_dir(c.out);
  ensure_dir(dir);
  auto log_name = [](std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "point_%03zu.csv", i);
    return std::string(buf);
  };

  std::vector<PointResult> results(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      auto& r = results[i];
      try {
        r.linear_stable = analysis::is_stabilizing(closed_loop_params(scenarios[i]));
        const auto log = sim::run_scenario(scenarios[i]);
        r.summary = sim::summarize(log);
        sim::write_log(log, dir / log_name(i));
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(points.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string csv = "point";
  for (const auto& [key, values] : params) csv += "," + csv_field(key);
  csv += ",linear_stable,aborted,first_contact_time,settle_after_contact,"
         "steady_rms_force_error,max_tracking_error,mode_switches,log,reason\n";
  int failures = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& r = results[i];
    const auto& s = r.summary;
    csv += std::to_string(i);
    for (const auto& v : points[i]) csv += "," + csv_field(v);
    const bool aborted = s.aborted || !r.error.empty();
    csv += std::string(",") + (r.linear_stable ? "1" : "0") + "," + (aborted ? "1" : "0");
    if (!r.error.empty()) {
      csv += ",,,,,,," + csv_field(r.error) + "\n";
      ++failures;
      continue;
    }
    csv += "," + fmt(s.first_contact_time) + "," + fmt(s.settle_after_contact) + "," +
           fmt(s.steady_rms_force_error) + "," + fmt(s.max_tracking_error) + "," +
           std::to_string(s.mode_switches) + "," + log_name(i) + "," + csv_field(s.abort_reason) +
           "\n";
    if (s.aborted) ++failures;
  }
  write_text(dir / "sweep.csv", csv);
  out << csv;
  if (failures) err << "warning: " << failures << " of " << points.size() << " points aborted\n";
  return 0;
}

int cmd_export(const std::string& log_path, const std::string& out_flag,
               const std::vector<std::string>& columns, std::ostream& out) {
  const auto log = sim::read_log(log_path);
  const fs::path dir = output_dir(out_flag);
  ensure_dir(dir);

  std::vector<std::pair<std::string, std::vector<std::string>>> files;
  if (!columns.empty()) {
    files.push_back({"columns.csv", columns});
  } else {
    // An empty log may not carry every column; it still yields header-only tables.
    auto pick = [&](std::initializer_list<const char*> names) -> std::string {
      for (const char* n : names) {
        if (log.has_column(n)) return n;
      }
      if (log.rows.empty()) return *names.begin();
      throw std::invalid_argument("log has none of the expected columns for this table");
    };
    files.push_back({"force_error.csv", {"t", pick({"f_e"})}});
    files.push_back({"desired_position.csv", {"t", pick({"z_d", "b_zbar_d"})}});
  }
  for (const auto& [name, cols] : files) {
    std::string text;
    if (log.rows.empty()) {
      for (std::size_t i = 0; i < cols.size(); ++i) text += (i ? "," : "") + cols[i];
      text += '\n';
    } else {
      text = table(log, cols);
    }
    write_text(dir / name, text);
    out << (dir / name).string() << '\n';
  }
  return 0;
}

}  // namespace

std::vector<double> parse_omega_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 4) {
    throw std::invalid_argument("omega grid '" + text + "' must be start:stop:logarithmic|linear:count");
  }
  const double a = parse_number(parts[0], "omega grid start");
  const double b = parse_number(parts[1], "omega grid stop");
  const double nd = parse_number(parts[3], "omega grid count");
  if (nd < 1 || nd != std::floor(nd)) throw std::invalid_argument("omega grid count must be a positive integer");
  const auto n = static_cast<std::size_t>(nd);
  const bool log = parts[2] == "logarithmic" || parts[2] == "log";
  if (!log && parts[2] != "linear") {
    throw std::invalid_argument("omega grid spacing must be logarithmic or linear, got '" + parts[2] + "'");
  }
  if (a < 0 || b < a) throw std::invalid_argument("omega grid needs 0 <= start <= stop");
  if (log && a <= 0) throw std::invalid_argument("logarithmic omega grid needs start > 0");

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = log ? a * std::pow(b / a, s) : a + (b - a) * s;
  }
  if (n > 1) out.back() = b;
  return out;
}

std::pair<std::string, std::vector<std::string>> parse_sweep_param(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw std::invalid_argument("sweep parameter '" + text + "' is not key=v1,v2,...");
  }
  auto values = split(text.substr(eq + 1), ',');
  for (const auto& v : values) {
    if (v.empty()) throw std::invalid_argument("sweep parameter '" + text + "' has an empty value");
  }
  return {text.substr(0, eq), values};
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "out";
}

analysis::ClosedLoopParams closed_loop_params(const sim::Scenario& sc) {
  analysis::ClosedLoopParams p;
  const double s = sc.controller.sign == control::ForceSign::positive ? 1.0 : -1.0;
  p.motion = sc.controller.motion;
  p.force = sc.controller.force;
  p.force.kp1 *= s;
  p.force.ki1 *= s;
  p.force.kv1 *= s;
  p.stiffness = sc.env.stiffness;
  p.epsilon = sc.rig.epsilon;
  return p;
}

std::string summary_json(const sim::SimLog& log, const sim::RunSummary& s) {
  Json j = {
      {"kind", sim::to_string(log.kind)},
      {"rows", log.rows.size()},
      {"first_contact_time", time_or_null(s.first_contact_time)},
      {"settle_time", time_or_null(s.settle_time)},
      {"settle_after_contact", time_or_null(s.settle_after_contact)},
      {"settle_band", sim::kSettleBand},
      {"steady_rms_force_error", s.steady_rms_force_error},
      {"rms_window", "final half of the run"},
      {"max_tracking_error", s.max_tracking_error},
      {"mode_switches", s.mode_switches},
      {"aborted", s.aborted},
      {"abort_reason", s.abort_reason},
      {"warnings", log.warnings},
  };
  return j.dump(2) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid position/force control simulator", "hpfc"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("-c,--config", common.config, "scenario config (JSON)");
    if (config_required) opt->required();
    sub->add_option("-o,--out", common.out,
                    std::string("output directory (default $") + kOutDirEnv + " or ./out)");
    sub->add_option("--seed", common.seed, "noise seed");
    sub->add_option("overrides", common.overrides, "key=value config overrides");
  };

  auto* simulate = app.add_subcommand("simulate", "run a scenario and write its log and summary");
  add_common(simulate, true);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "spectrum and frequency response of the force channel");
  add_common(analyze, false);
  analyze->add_option("--kv", an.kv);
  analyze->add_option("--kp", an.kp);
  analyze->add_option("--ki", an.ki);
  analyze->add_option("--kp1", an.kp1);
  analyze->add_option("--ki1", an.ki1);
  analyze->add_option("--k", an.k, "environment stiffness");
  analyze->add_option("--epsilon", an.epsilon);
  analyze->add_flag("--non-contact", an.non_contact, "analyze with delta(k) = 0");
  analyze->add_option("--omega-grid", an.grid, "start:stop:logarithmic|linear:count");

  std::vector<std::string> sweep_params;
  unsigned jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "run a scenario over a parameter grid");
  add_common(sweep, true);
  sweep->add_option("-p,--param", sweep_params, "key=v1,v2,... (repeatable)")
      ->required()
      ->allow_extra_args(false);
  sweep->add_option("-j,--jobs", jobs, "parallel runs (0 = all cores)");

  std::string log_path;
  std::vector<std::string> columns;
  auto* exporter = app.add_subcommand("export", "derive plot tables from a log");
  exporter->add_option("-l,--log", log_path, "log written by simulate")->required();
  exporter->add_option("-o,--out", common.out, "output directory");
  exporter->add_option("--columns", columns, "export only these columns")
      ->delimiter(',')
      ->allow_extra_args(false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*simulate) return cmd_simulate(common, out, err);
    if (*analyze) return cmd_analyze(common, an, out, err);
    if (*sweep) return cmd_sweep(common, sweep_params, jobs, out, err);
    if (*exporter) return cmd_export(log_path, common.out, columns, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace hpfc::cli
