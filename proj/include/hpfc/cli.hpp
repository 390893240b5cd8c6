#pragma once

#include "hpfc/analysis.hpp"
#include "hpfc/sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hpfc::cli {

/// Environment variable naming the default output directory.
constexpr const char* kOutDirEnv = "HPFC_OUT_DIR";

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `a:b:logarithmic:n` or `a:b:linear:n`.
std::vector<double> parse_omega_grid(const std::string& text);

/// `key=v1,v2,...` -> (key, {"v1", "v2", ...}).
std::pair<std::string, std::vector<std::string>> parse_sweep_param(const std::string& text);

/// --out if given, else $HPFC_OUT_DIR, else ./out.
std::filesystem::path output_dir(const std::string& flag);

/// Force-channel model implied by a scenario. Gains are expressed in the
/// positive-sign convention so that the spectrum reads the same for both.
analysis::ClosedLoopParams closed_loop_params(const sim::Scenario& sc);

std::string summary_json(const sim::SimLog& log, const sim::RunSummary& s);

}  // namespace hpfc::cli
