#pragma once

#include "chaser/mission.hpp"
#include "chaser/voxel_grid.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace chaser {

/// Full run description. Absent JSON fields keep the defaults below.
struct ScenarioConfig {
  std::string map;                   // map file, relative to the config file
  double occupancy_threshold = 0.5;  // epsilon_occ
  double esdf_cap = 10.0;
  std::vector<Vec3> via_points;
  TargetScript script;
  KinematicState chaser_start;
  PlannerConfig planner;
  std::uint64_t seed = 0;  // reserved; candidate generation is deterministic
  int trajectory_stride = 1;  // ticks between trajectory.csv rows

  void validate() const {
    if (map.empty()) throw ConfigError("map: required");
    if (!(occupancy_threshold > 0 && occupancy_threshold <= 1)) {
      throw ConfigError("occupancy_threshold: must be in (0, 1]");
    }
    if (!(esdf_cap > 0)) throw ConfigError("esdf_cap: must be positive");
    if (via_points.empty()) throw ConfigError("via_points: at least one via-point is required");
    if (trajectory_stride < 1) throw ConfigError("output.trajectory_stride: must be >= 1");
    script.validate();
    planner.validate();
  }
};

namespace detail {

using nlohmann::json;

/// Walks one JSON object, reporting problems with the full field path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field(key) + ": required field missing");
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    out = v.get<double>();
  }
  void integer(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
    out = v.get<int>();
  }
  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    out = v.get<bool>();
  }
  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    out = v.get<std::string>();
  }
  void vec3(const std::string& key, Vec3& out) {
    if (!has(key)) return;
    out = to_vec3(j_.at(key), field(key));
  }

  static Vec3 to_vec3(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(path + ": expected [x, y, z]");
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      if (!v[k].is_number()) throw ConfigError(path + ": expected [x, y, z]");
      p[k] = v[k].get<double>();
    }
    return p;
  }

  /// Unknown keys are rejected so that typos do not silently fall back to defaults.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json vec3_json(const Vec3& p) { return json::array({p.x(), p.y(), p.z()}); }

}  // namespace detail

inline ScenarioConfig parse_config(std::string_view text) {
  using detail::json;
  using detail::ObjectReader;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: malformed JSON: ") + e.what());
  }
  ScenarioConfig c;
  ObjectReader r(root, "");
  r.string("map", c.map);
  if (c.map.empty()) throw ConfigError("map: required field missing");
  r.number("occupancy_threshold", c.occupancy_threshold);
  r.number("esdf_cap", c.esdf_cap);
  r.unsigned_integer("seed", c.seed);

  const json& via = r.at("via_points");
  if (!via.is_array()) throw ConfigError("via_points: expected an array of [x, y, z]");
  for (std::size_t i = 0; i < via.size(); ++i) {
    c.via_points.push_back(ObjectReader::to_vec3(via[i], "via_points[" + std::to_string(i) + "]"));
  }

  {
    ObjectReader t(r.at("target"), "target");
    t.vec3("start", c.script.start);
    if (!t.has("start")) throw ConfigError("target.start: required field missing");
    t.number("start_delay", c.script.start_delay);
    if (t.has("legs")) {
      const json& legs = t.at("legs");
      if (!legs.is_array()) throw ConfigError("target.legs: expected an array");
      for (std::size_t i = 0; i < legs.size(); ++i) {
        ObjectReader l(legs[i], "target.legs[" + std::to_string(i) + "]");
        ScriptLeg leg;
        leg.to = ObjectReader::to_vec3(l.at("to"), l.field("to"));
        l.number("speed", leg.speed);
        l.boolean("hide", leg.hide);
        l.finish();
        c.script.legs.push_back(leg);
      }
    }
    t.finish();
  }

  {
    ObjectReader s(r.at("chaser"), "chaser");
    if (!s.has("position")) throw ConfigError("chaser.position: required field missing");
    s.vec3("position", c.chaser_start.position);
    s.vec3("velocity", c.chaser_start.velocity);
    s.vec3("acceleration", c.chaser_start.acceleration);
    s.finish();
  }

  auto& p = c.planner;
  if (r.has("prediction")) {
    ObjectReader o(root.at("prediction"), "prediction");
    o.number("gamma", p.prediction.gamma);
    o.number("rho", p.prediction.rho);
    o.integer("n_obs", p.prediction.n_obs);
    o.integer("n_total", p.prediction.n_total);
    o.number("alpha", p.prediction.alpha);
    o.integer("max_iters", p.prediction.max_iters);
    o.number("eps_obstacle", p.prediction.eps_obstacle);
    o.number("converge_tol", p.prediction.converge_tol);
    o.number("goal_weight", p.prediction.goal_weight);
    o.finish();
  }
  if (r.has("preplan")) {
    ObjectReader o(root.at("preplan"), "preplan");
    o.integer("n_layers", p.preplan.n_layers);
    o.number("d_lower", p.preplan.d_lower);
    o.number("d_upper", p.preplan.d_upper);
    o.number("d_desired", p.preplan.d_desired);
    o.number("d_max", p.preplan.d_max);
    o.number("w_visibility", p.preplan.w_visibility);
    o.number("w_distance", p.preplan.w_distance);
    o.number("r_safe", p.preplan.r_safe);
    o.number("r_corridor", p.preplan.r_corridor);
    o.number("grid_stride", p.preplan.grid_stride);
    o.number("elev_min_deg", p.preplan.elev_min_deg);
    o.number("elev_max_deg", p.preplan.elev_max_deg);
    o.integer("edge_samples", p.preplan.edge_samples);
    o.finish();
  }
  if (r.has("smooth")) {
    ObjectReader o(root.at("smooth"), "smooth");
    o.integer("order", p.smooth.order);
    o.number("lambda", p.smooth.lambda);
    o.integer("samples_per_segment", p.smooth.samples_per_segment);
    o.number("kkt_tol", p.smooth.kkt_tol);
    o.number("shrink", p.smooth.shrink);
    o.finish();
  }
  if (r.has("mission")) {
    ObjectReader o(root.at("mission"), "mission");
    o.number("horizon", p.mission.horizon);
    o.number("tick_dt", p.mission.tick_dt);
    o.number("accum_err_tol", p.mission.accum_err_tol);
    o.number("via_tol", p.mission.via_tol);
    o.number("obs_period", p.mission.obs_period);
    o.number("replan_fraction", p.mission.replan_fraction);
    o.number("time_limit", p.mission.time_limit);
    o.number("yaw_stride", p.mission.yaw_stride);
    o.finish();
  }
  if (r.has("output")) {
    ObjectReader o(root.at("output"), "output");
    o.integer("trajectory_stride", c.trajectory_stride);
    o.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline nlohmann::json config_json(const ScenarioConfig& c) {
  using detail::json;
  using detail::vec3_json;
  json j;
  j["map"] = c.map;
  j["occupancy_threshold"] = c.occupancy_threshold;
  j["esdf_cap"] = c.esdf_cap;
  j["seed"] = c.seed;
  j["via_points"] = json::array();
  for (const auto& v : c.via_points) j["via_points"].push_back(vec3_json(v));
  json legs = json::array();
  for (const auto& l : c.script.legs) legs.push_back({{"to", vec3_json(l.to)}, {"speed", l.speed}, {"hide", l.hide}});
  j["target"] = {{"start", vec3_json(c.script.start)}, {"start_delay", c.script.start_delay}, {"legs", legs}};
  j["chaser"] = {{"position", vec3_json(c.chaser_start.position)},
                 {"velocity", vec3_json(c.chaser_start.velocity)},
                 {"acceleration", vec3_json(c.chaser_start.acceleration)}};
  const auto& p = c.planner;
  j["prediction"] = {{"gamma", p.prediction.gamma},         {"rho", p.prediction.rho},
                     {"n_obs", p.prediction.n_obs},         {"n_total", p.prediction.n_total},
                     {"alpha", p.prediction.alpha},         {"max_iters", p.prediction.max_iters},
                     {"eps_obstacle", p.prediction.eps_obstacle}, {"converge_tol", p.prediction.converge_tol},
                     {"goal_weight", p.prediction.goal_weight}};
  j["preplan"] = {{"n_layers", p.preplan.n_layers},         {"d_lower", p.preplan.d_lower},
                  {"d_upper", p.preplan.d_upper},           {"d_desired", p.preplan.d_desired},
                  {"d_max", p.preplan.d_max},               {"w_visibility", p.preplan.w_visibility},
                  {"w_distance", p.preplan.w_distance},     {"r_safe", p.preplan.r_safe},
                  {"r_corridor", p.preplan.r_corridor},     {"grid_stride", p.preplan.grid_stride},
                  {"elev_min_deg", p.preplan.elev_min_deg}, {"elev_max_deg", p.preplan.elev_max_deg},
                  {"edge_samples", p.preplan.edge_samples}};
  j["smooth"] = {{"order", p.smooth.order},
                 {"lambda", p.smooth.lambda},
                 {"samples_per_segment", p.smooth.samples_per_segment},
                 {"kkt_tol", p.smooth.kkt_tol},
                 {"shrink", p.smooth.shrink}};
  j["mission"] = {{"horizon", p.mission.horizon},           {"tick_dt", p.mission.tick_dt},
                  {"accum_err_tol", p.mission.accum_err_tol}, {"via_tol", p.mission.via_tol},
                  {"obs_period", p.mission.obs_period},     {"replan_fraction", p.mission.replan_fraction},
                  {"time_limit", p.mission.time_limit},     {"yaw_stride", p.mission.yaw_stride}};
  j["output"] = {{"trajectory_stride", c.trajectory_stride}};
  return j;
}

inline std::string serialize_config(const ScenarioConfig& c) { return config_json(c).dump(2) + "\n"; }

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A parsed config together with its map and distance field.
struct Scenario {
  ScenarioConfig config;
  std::filesystem::path map_path;
  EsdfGrid esdf;
};

inline Scenario load_scenario(const std::filesystem::path& config_path) {
  Scenario s;
  s.config = parse_config(read_text_file(config_path));
  s.map_path = std::filesystem::path(s.config.map);
  if (s.map_path.is_relative()) s.map_path = config_path.parent_path() / s.map_path;
  const VoxelGrid grid = load_map(read_text_file(s.map_path), s.config.occupancy_threshold);
  s.esdf = compute_esdf(grid, s.config.esdf_cap);
  return s;
}

inline MetricsLog run_mission(const Scenario& s) {
  return run_scripted(s.esdf, s.config.via_points, s.config.script, s.config.chaser_start, s.config.planner);
}

// ---- run artifacts -------------------------------------------------------

inline void write_metrics_csv(std::ostream& os, const std::vector<TickRecord>& records) {
  using detail::format_double;
  os << "t,target_x,target_y,target_z,chaser_x,chaser_y,chaser_z,yaw,phi_target,phi_chaser,psi,visible,"
        "step,via_index,replanned\n";
  for (const auto& r : records) {
    os << format_double(r.t);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(r.target[k]);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(r.chaser[k]);
    os << ',' << format_double(r.yaw) << ',' << format_double(r.phi_target) << ','
       << format_double(r.phi_chaser) << ',' << format_double(r.psi) << ',' << (r.visible ? 1 : 0) << ','
       << format_double(r.step) << ',' << r.via_index << ',' << (r.replanned ? 1 : 0) << '\n';
  }
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TickRecord>& records, int stride) {
  using detail::format_double;
  os << "t,x,y,z,vx,vy,vz,yaw\n";
  for (std::size_t i = 0; i < records.size(); i += static_cast<std::size_t>(stride)) {
    const auto& r = records[i];
    os << format_double(r.t);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(r.chaser[k]);
    for (int k = 0; k < 3; ++k) os << ',' << format_double(r.chaser_velocity[k]);
    os << ',' << format_double(r.yaw) << '\n';
  }
}

inline void write_events_log(std::ostream& os, const std::vector<MissionEvent>& events) {
  for (const auto& e : events) {
    os << detail::format_double(e.t) << ' ' << e.kind;
    if (!e.detail.empty()) os << ' ' << e.detail;
    os << '\n';
  }
}

inline nlohmann::json summary_json(const ScenarioConfig& c, const MetricsLog& log) {
  const auto& m = log.summary;
  nlohmann::json j;
  j["metrics"] = {{"avg_psi", m.avg_psi},
                  {"occlusion_duration", m.occlusion_duration},
                  {"flight_distance", m.flight_distance},
                  {"min_phi_chaser", m.min_phi_chaser},
                  {"duration", m.duration},
                  {"ticks", m.ticks},
                  {"replans", m.replans},
                  {"failed_replans", m.failed_replans},
                  {"completed", m.completed}};
  j["events"] = nlohmann::json::array();
  for (const auto& e : log.events) j["events"].push_back({{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
  j["config"] = config_json(c);
  return j;
}

/// Writes metrics.csv, summary.json, trajectory.csv and events.log into dir.
inline void write_run_artifacts(const std::filesystem::path& dir, const ScenarioConfig& c, const MetricsLog& log) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, log.records);
  }
  {
    auto f = open("trajectory.csv");
    write_trajectory_csv(f, log.records, c.trajectory_stride);
  }
  {
    auto f = open("events.log");
    write_events_log(f, log.events);
  }
  {
    auto f = open("summary.json");
    f << summary_json(c, log).dump(2) << '\n';
  }
}

}  // namespace chaser
