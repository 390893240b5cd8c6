#include "hpfc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hpfc::config {

namespace {

// Reads fields of one JSON object and rejects any key it was not asked for.
class Section {
 public:
  Section(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw std::invalid_argument(where() + "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw std::invalid_argument(where() + key + ": " + e.what());
    }
  }

  void vec(const char* key, Eigen::Ref<Eigen::VectorXd> out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_array() || static_cast<Eigen::Index>(it->size()) != out.size()) {
      throw std::invalid_argument(where() + key + ": expected an array of " +
                                  std::to_string(out.size()) + " numbers");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (!(*it)[i].is_number()) throw std::invalid_argument(where() + key + ": not a number");
      out(i) = (*it)[i].get<double>();
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  Section sub(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    const auto it = obj_.find(key);
    return Section(it == obj_.end() ? empty : *it, path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw std::invalid_argument("unknown config key '" + path_ + k + "'");
    }
  }

 private:
  std::string where() const { return "config " + (path_.empty() ? std::string() : path_); }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

control::ForceSign parse_sign(const std::string& s) {
  if (s == "positive") return control::ForceSign::positive;
  if (s == "negative") return control::ForceSign::negative;
  throw std::invalid_argument("force.sign must be 'positive' or 'negative', got '" + s + "'");
}

control::Cancellation parse_cancellation(const std::string& s) {
  if (s == "none") return control::Cancellation::none;
  if (s == "full") return control::Cancellation::full;
  if (s == "partial") return control::Cancellation::partial;
  throw std::invalid_argument("cancellation.mode must be none, full or partial, got '" + s + "'");
}

contact::Topography parse_surface(Section s) {
  std::string type = "plane";
  s.get("type", type);
  contact::Topography out;
  if (type == "plane") {
    contact::PlaneProfile p;
    s.get("height", p.height);
    out = p;
  } else if (type == "sinusoid") {
    contact::SinusoidProfile p;
    s.get("offset", p.offset);
    s.get("amplitude", p.amplitude);
    s.get("frequency", p.frequency);
    out = p;
  } else if (type == "ellipsoid") {
    contact::EllipsoidProfile p;
    s.vec("center", p.center);
    s.vec("semi_axes", p.semi_axes);
    out = p;
  } else if (type == "square_wave") {
    contact::SquareWaveProfile p;
    s.get("height", p.height);
    s.get("period", p.period);
    s.get("duty", p.duty);
    out = p;
  } else if (type == "box_face") {
    contact::BoxFaceProfile p;
    s.get("height", p.height);
    out = p;
  } else {
    throw std::invalid_argument("unknown surface type '" + type + "'");
  }
  s.finish();
  return out;
}

void collect_leaves(const Json& node, const std::string& prefix,
                    std::vector<std::pair<std::string, std::string>>& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) {
      collect_leaves(v, prefix.empty() ? k : prefix + "." + k, out);
    }
  } else {
    out.emplace_back(prefix, node.is_string() ? node.get<std::string>() : node.dump());
  }
}

void find_leaf(const Json& node, const std::string& name, const std::string& prefix,
               std::vector<std::string>& hits) {
  if (!node.is_object()) return;
  for (const auto& [k, v] : node.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (k == name) hits.push_back(path);
    find_leaf(v, name, path, hits);
  }
}

}  // namespace

Json load_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config '" + path.string() + "'");
  try {
    return Json::parse(f, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("parse error in '" + path.string() + "': " + e.what());
  }
}

void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  if (key.find('.') == std::string::npos && !tree.contains(key)) {
    std::vector<std::string> hits;
    find_leaf(tree, key, "", hits);
    if (hits.empty()) throw std::invalid_argument("override key '" + key + "' does not exist");
    if (hits.size() > 1) {
      std::string all;
      for (const auto& h : hits) all += (all.empty() ? "" : ", ") + h;
      throw std::invalid_argument("override key '" + key + "' is ambiguous: " + all);
    }
    key = hits.front();
  }

  Json* node = &tree;
  std::istringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw std::invalid_argument("override key '" + key + "' does not exist");
    }
    node = &(*node)[part];
  }
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  *node = value;
}

std::vector<std::pair<std::string, std::string>> flatten(const Json& tree) {
  std::vector<std::pair<std::string, std::string>> out;
  collect_leaves(tree, "", out);
  return out;
}

sim::Scenario scenario_from_json(const Json& tree, const std::filesystem::path& base_dir) {
  sim::Scenario sc;
  Section root(tree, "");

  std::string kind = "one_dof_rig";
  root.get("kind", kind);
  sc.kind = sim::scenario_kind_from_string(kind);
  std::string chain;
  root.get("chain", chain);
  if (!chain.empty()) {
    const std::filesystem::path p(chain);
    sc.chain_path = p.is_absolute() ? p : base_dir / p;
  } else if (sc.kind != sim::ScenarioKind::one_dof_rig) {
    throw std::invalid_argument("config: 'chain' is required for " + kind);
  }
  root.get("duration", sc.duration);
  root.get("physics_step", sc.physics_step);
  root.get("control_period", sc.control_period);
  root.get("seed", sc.seed);

  auto& hc = sc.controller;
  {
    Section s = root.sub("motion_gains");
    s.get("kv", hc.motion.kv);
    s.get("kp", hc.motion.kp);
    s.get("ki", hc.motion.ki);
    s.finish();
  }
  {
    Section s = root.sub("force_gains");
    s.get("kp1", hc.force.kp1);
    s.get("ki1", hc.force.ki1);
    s.get("kv1", hc.force.kv1);
    s.finish();
  }
  {
    Section s = root.sub("force");
    s.get("desired", hc.desired_force);
    std::string sign = "positive";
    s.get("sign", sign);
    hc.sign = parse_sign(sign);
    s.get("enabled", hc.force_enabled);
    s.get("saturation", hc.saturation);
    s.get("pid", hc.pid);
    s.get("q_hat_offset", sc.q_hat_offset);
    s.finish();
  }
  {
    Section s = root.sub("cancellation");
    std::string mode = "none";
    s.get("mode", mode);
    hc.cancellation = parse_cancellation(mode);
    s.get("fraction", hc.partial_fraction);
    s.finish();
  }
  {
    Section s = root.sub("limits");
    s.get("motion_windup", hc.limits.motion_windup);
    s.get("force_windup", hc.limits.force_windup);
    s.get("contact_threshold", hc.limits.contact_threshold);
    s.get("damping_trigger", hc.limits.damping_trigger);
    s.get("damping", hc.limits.damping);
    s.get("derivative_cutoff_hz", hc.limits.derivative_cutoff_hz);
    s.finish();
  }
  {
    Section s = root.sub("environment");
    s.get("k", sc.env.stiffness);
    s.get("noise", sc.env.noise_amplitude);
    if (s.has("surface")) sc.env.topography = parse_surface(s.sub("surface"));
    s.finish();
  }
  {
    Section s = root.sub("rig");
    auto& r = sc.rig;
    s.get("z_t0", r.z_t0);
    s.get("z_d0", r.z_d0);
    s.get("z_e_rate0", r.z_e_rate0);
    s.get("int_z_e0", r.int_z_e0);
    s.get("int_f_e0", r.int_f_e0);
    s.get("epsilon", r.epsilon);
    s.get("eta", r.eta);
    s.finish();
  }
  {
    Section s = root.sub("contour");
    auto& c = sc.contour;
    s.vec("orientation", c.orientation);
    s.vec("q_seed", c.q_seed);
    s.vec("center", c.center);
    s.get("start_gap", c.start_gap);
    s.get("approach_time", c.approach_time);
    s.get("ramp_time", c.ramp_time);
    s.vec("amplitude", c.amplitude);
    s.vec("omega", c.omega);
    s.finish();
  }
  {
    Section s = root.sub("dual_arm");
    auto& d = sc.dual;
    s.vec("base_a", d.base_a);
    s.get("yaw_a", d.yaw_a);
    s.vec("base_b", d.base_b);
    s.get("yaw_b", d.yaw_b);
    s.vec("q_seed_a", d.q_seed_a);
    s.vec("q_seed_b", d.q_seed_b);
    s.vec("orientation_a", d.orientation_a);
    s.vec("orientation_b", d.orientation_b);
    s.get("box_mass", d.box_mass);
    s.get("box_edge", d.box_edge);
    s.vec("box_center", d.box_center);
    s.vec("displacement", d.displacement);
    s.get("lift_start", d.lift_start);
    s.get("lift_end", d.lift_end);
    s.get("friction", d.friction);
    s.get("tangential_stiffness", d.tangential_stiffness);
    s.get("tangential_damping", d.tangential_damping);
    s.get("support_stiffness", d.support_stiffness);
    s.get("support_damping", d.support_damping);
    s.get("start_gap", d.start_gap);
    s.get("box_present", d.box_present);
    std::string src = "commanded";
    s.get("frame_source", src);
    if (src == "commanded") {
      d.frame_source = sim::FrameSource::commanded;
    } else if (src == "measured") {
      d.frame_source = sim::FrameSource::measured;
    } else {
      throw std::invalid_argument("dual_arm.frame_source must be commanded or measured");
    }
    s.finish();
  }
  root.finish();

  sc.metadata = flatten(tree);
  sc.validate();
  return sc;
}

sim::Scenario load_scenario(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides) {
  Json tree = load_json(path);
  for (const auto& o : overrides) apply_override(tree, o);
  return scenario_from_json(tree, path.parent_path());
}

}  // namespace hpfc::config
