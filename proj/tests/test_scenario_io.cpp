#include "chaser/scenario.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace chaser;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({
  "map": "m.map",
  "via_points": [[1, 2, 0.6]],
  "target": {"start": [0, 0, 0.6]},
  "chaser": {"position": [0, 1, 1.5]}
})";

// Replaces the top-level `section` with `value` in the minimal config.
std::string with(const std::string& section, const std::string& value) {
  auto j = nlohmann::json::parse(kMinimal);
  j[section] = nlohmann::json::parse(value);
  return j.dump();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ParseConfig, MinimalUsesDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.map, "m.map");
  ASSERT_EQ(c.via_points.size(), 1u);
  EXPECT_EQ(c.via_points[0], Vec3(1, 2, 0.6));
  EXPECT_TRUE(c.script.legs.empty());
  EXPECT_EQ(c.chaser_start.velocity, Vec3::Zero());
  const PlannerConfig d;
  EXPECT_EQ(c.planner.preplan.n_layers, d.preplan.n_layers);
  EXPECT_EQ(c.planner.preplan.w_visibility, d.preplan.w_visibility);
  EXPECT_EQ(c.planner.preplan.r_corridor, d.preplan.r_corridor);
  EXPECT_EQ(c.planner.mission.horizon, 4.0);
  EXPECT_EQ(c.planner.mission.accum_err_tol, 1.0);
  EXPECT_EQ(c.planner.prediction.n_obs, d.prediction.n_obs);
  EXPECT_EQ(c.planner.smooth.order, d.smooth.order);
  EXPECT_EQ(c.occupancy_threshold, 0.5);
  EXPECT_EQ(c.trajectory_stride, 1);
}

TEST(ParseConfig, CorridorWiderThanSafetyNamesBothFields) {
  const auto msg = error_of(with("preplan", R"({"r_corridor": 0.5})"));
  EXPECT_NE(msg.find("r_corridor"), std::string::npos) << msg;
  EXPECT_NE(msg.find("r_safe"), std::string::npos) << msg;
}

TEST(ParseConfig, ErrorsCarryFieldPath) {
  EXPECT_NE(error_of(with("mission", R"({"horizon": "4"})")).find("mission.horizon"), std::string::npos);
  EXPECT_NE(error_of(with("mission", R"({"horizon": -1})")).find("mission.horizon"), std::string::npos);
  EXPECT_NE(error_of(with("preplan", R"({"n_layers": 2.5})")).find("preplan.n_layers"), std::string::npos);
  EXPECT_NE(error_of(with("preplan", R"({"w_visiblity": 5})")).find("preplan.w_visiblity: unknown field"),
            std::string::npos);
  EXPECT_NE(error_of(with("target", R"({"start": [0, 0]})")).find("target.start"), std::string::npos);
  EXPECT_NE(error_of(with("target", R"({"start": [0, 0, 0], "legs": [{"to": [1, 1, 1], "speed": 0}]})"))
                .find("legs[0].speed"),
            std::string::npos);
  EXPECT_NE(error_of(with("via_points", R"([[0, 0, 0], [1, "a", 0]])")).find("via_points[1]"), std::string::npos);
  EXPECT_NE(error_of(with("chaser", R"({"velocity": [0, 0, 0]})")).find("chaser.position"), std::string::npos);
  EXPECT_NE(error_of(with("bogus", "1")).find("bogus: unknown field"), std::string::npos);
  EXPECT_NE(error_of(with("output", R"({"trajectory_stride": 0})")).find("output.trajectory_stride"),
            std::string::npos);
}

TEST(ParseConfig, RequiredFields) {
  EXPECT_NE(error_of(R"({"via_points": [[0,0,0]], "target": {"start": [0,0,0]}, "chaser": {"position": [0,0,0]}})")
                .find("map"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"map": "m", "target": {"start": [0,0,0]}, "chaser": {"position": [0,0,0]}})")
                .find("via_points"),
            std::string::npos);
  EXPECT_NE(error_of(with("via_points", "[]")).find("via_points"), std::string::npos);
}

TEST(ParseConfig, MalformedJsonIsParseError) {
  EXPECT_THROW(parse_config("{\"map\": "), ParseError);
  EXPECT_THROW(parse_config(""), ParseError);
}

TEST(ParseConfig, RoundTrip) {
  auto c = parse_config(with("preplan", R"({"w_visibility": 5.0, "d_max": 1.7, "elev_min_deg": 15})"));
  c.script.legs.push_back({Vec3(3, 4, 0.6), 0.8, true});
  c.script.start_delay = 0.5;
  c.chaser_start.velocity = Vec3(0.1, -0.2, 0.0);
  c.planner.mission.time_limit = 42.0;
  c.trajectory_stride = 4;
  c.seed = 99;
  const std::string text = serialize_config(c);
  const auto back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.planner.preplan.w_visibility, 5.0);
  EXPECT_EQ(back.script.legs.at(0).hide, true);
  EXPECT_EQ(back.chaser_start.velocity, c.chaser_start.velocity);
}

TEST(LoadScenario, ShippedScenariosLoad) {
  for (const char* name : {"trivial.json", "city_hiding.json"}) {
    const auto s = load_scenario(chaser::testing::source_dir() + "/scenarios/" + name);
    EXPECT_FALSE(s.config.via_points.empty());
    EXPECT_GT(s.esdf.phi_at(s.config.script.start), 0.0);
  }
}

TEST(LoadScenario, CityHasFiveViaPoints) {
  const auto s = load_scenario(chaser::testing::source_dir() + "/scenarios/city_hiding.json");
  EXPECT_EQ(s.config.via_points.size(), 5u);
  bool hides = false;
  for (const auto& l : s.config.script.legs) hides = hides || l.hide;
  EXPECT_TRUE(hides);
}

TEST(LoadScenario, MissingMapNamesPath) {
  const fs::path dir = fs::temp_directory_path() / "chaser_io_missing";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "c.json");
    f << kMinimal;
  }
  try {
    load_scenario(dir / "c.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("m.map"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(RunArtifacts, FilesAndHeaders) {
  const auto s = load_scenario(chaser::testing::source_dir() + "/scenarios/trivial.json");
  auto cfg = s.config;
  cfg.trajectory_stride = 10;
  const auto log = run_mission(s);
  const fs::path dir = fs::temp_directory_path() / "chaser_io_artifacts";
  fs::remove_all(dir);
  write_run_artifacts(dir, cfg, log);
  const std::string metrics = read_text_file(dir / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "t,target_x,target_y,target_z,chaser_x,chaser_y,chaser_z,yaw,phi_target,phi_chaser,psi,visible,step,"
            "via_index,replanned");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), static_cast<long>(log.records.size()) + 1);
  const std::string traj = read_text_file(dir / "trajectory.csv");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), static_cast<long>((log.records.size() + 9) / 10) + 1);
  const auto summary = nlohmann::json::parse(read_text_file(dir / "summary.json"));
  EXPECT_EQ(summary["metrics"]["avg_psi"].get<double>(), log.summary.avg_psi);
  EXPECT_EQ(summary["metrics"]["occlusion_duration"].get<double>(), log.summary.occlusion_duration);
  EXPECT_EQ(summary["events"].size(), log.events.size());
  // the echoed config parses back to the same parameters
  EXPECT_EQ(serialize_config(parse_config(summary["config"].dump())), serialize_config(cfg));
  const std::string events = read_text_file(dir / "events.log");
  EXPECT_EQ(std::count(events.begin(), events.end(), '\n'), static_cast<long>(log.events.size()));
  fs::remove_all(dir);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.0, 0.1, -2.5, 1e-17, 123456.789, 1.0 / 3.0}) {
    EXPECT_EQ(std::stod(detail::format_double(v)), v);
  }
}
