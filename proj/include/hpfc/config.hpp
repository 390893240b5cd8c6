#pragma once

#include "hpfc/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hpfc::config {

using Json = nlohmann::json;

Json load_json(const std::filesystem::path& path);

/// Applies `key=value` to the tree. `key` is a dotted path ("environment.k")
/// or a leaf name that occurs exactly once ("k"). The key must already exist.
/// The value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(Json& tree, const std::string& assignment);

/// Builds a scenario. Relative chain paths resolve against `base_dir`.
/// Unknown keys are rejected so that typos do not pass silently.
sim::Scenario scenario_from_json(const Json& tree, const std::filesystem::path& base_dir);

sim::Scenario load_scenario(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides = {});

/// Leaves of the tree as (dotted.key, compact JSON value), in key order.
std::vector<std::pair<std::string, std::string>> flatten(const Json& tree);

}  // namespace hpfc::config
