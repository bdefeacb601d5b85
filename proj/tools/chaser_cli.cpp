// chaser: headless runs, weight sweeps, visibility-field slices and the
// interactive websocket server.
#include "chaser/server.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace chaser;

namespace {

int cmd_run(const std::string& config, const std::string& out) {
  const Scenario s = load_scenario(config);
  const MetricsLog log = run_mission(s);
  write_run_artifacts(out, s.config, log);
  const auto& m = log.summary;
  std::printf("avg_psi=%.4f occlusion=%.2fs flight=%.2fm replans=%d failed=%d completed=%s -> %s\n", m.avg_psi,
              m.occlusion_duration, m.flight_distance, m.replans, m.failed_replans, m.completed ? "yes" : "no",
              out.c_str());
  return 0;
}

int cmd_sweep(const std::string& config, const std::vector<double>& weights, const std::string& csv) {
  Scenario s = load_scenario(config);
  std::ofstream f;
  if (!csv.empty()) {
    f.open(csv);
    if (!f) throw ConfigError("cannot write " + csv);
    f << "w_v,avg_psi,occlusion_duration,flight_distance\n";
  }
  std::printf("%8s %10s %14s %12s\n", "w_v", "avg_psi", "occlusion[s]", "flight[m]");
  for (double w : weights) {
    s.config.planner.preplan.w_visibility = w;
    s.config.validate();
    const auto m = run_mission(s).summary;
    std::printf("%8.3g %10.4f %14.2f %12.2f\n", w, m.avg_psi, m.occlusion_duration, m.flight_distance);
    std::fflush(stdout);
    if (f) {
      f << detail::format_double(w) << ',' << detail::format_double(m.avg_psi) << ','
        << detail::format_double(m.occlusion_duration) << ',' << detail::format_double(m.flight_distance) << '\n';
    }
  }
  return 0;
}

// Horizontal slice of phi and psi(.; target) through the voxel centers at the
// slice height.
int cmd_field(const std::string& config, const std::vector<double>& target, std::optional<double> z,
              const std::string& out) {
  const Scenario s = load_scenario(config);
  const Vec3 tgt(target[0], target[1], target[2]);
  const auto& grid = s.esdf.grid();
  if (!grid.contains(tgt)) throw ConfigError("--target: outside the map");
  const Index3 slice = grid.world_to_index(Vec3(tgt.x(), tgt.y(), z.value_or(tgt.z())));
  if (!grid.contains(slice)) throw ConfigError("--z: outside the map");
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw ConfigError("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << "x,y,z,phi,psi,visible\n";
  for (int iy = 0; iy < grid.dims().y; ++iy) {
    for (int ix = 0; ix < grid.dims().x; ++ix) {
      const Vec3 p = grid.index_to_world({ix, iy, slice.z});
      os << detail::format_double(p.x()) << ',' << detail::format_double(p.y()) << ',' << detail::format_double(p.z())
         << ',' << detail::format_double(s.esdf.phi_at(p)) << ','
         << detail::format_double(visibility_score(s.esdf, p, tgt)) << ',' << (is_visible(grid, p, tgt) ? 1 : 0)
         << '\n';
    }
  }
  return 0;
}

int cmd_serve(const std::string& config, const std::string& host, unsigned short port) {
  const Scenario s = load_scenario(config);
  UiServer server(s, port, host);
  std::printf("listening on ws://%s:%u\n", host.c_str(), static_cast<unsigned>(server.port()));
  std::fflush(stdout);
  server.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visibility-aware target chasing planner"};
  app.require_subcommand(1);

  std::string config, out = "out", csv, field_out, host = "127.0.0.1";
  std::vector<double> weights = {1.0, 5.0}, target;
  std::optional<double> slice_z;
  unsigned short port = 8765;

  auto* run = app.add_subcommand("run", "Run a scripted mission and write metrics.csv, trajectory.csv, "
                                        "events.log and summary.json");
  run->add_option("config", config, "Scenario JSON")->required();
  run->add_option("--out", out, "Output directory")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Repeat a mission per visibility weight and compare the metrics");
  sweep->add_option("config", config, "Scenario JSON")->required();
  sweep->add_option("--wv", weights, "Comma-separated visibility weights")->delimiter(',')->capture_default_str();
  sweep->add_option("--csv", csv, "Also write the table as CSV");

  auto* field = app.add_subcommand("field", "Dump a horizontal slice of phi and the visibility score as CSV");
  field->add_option("config", config, "Scenario JSON")->required();
  field->add_option("--target", target, "Target position x,y,z")->delimiter(',')->expected(3)->required();
  field->add_option("--z", slice_z, "Slice height (default: target height)");
  field->add_option("--out", field_out, "Output file (default: stdout)");

  auto* serve = app.add_subcommand("serve", "Interactive websocket server for the operator UI");
  serve->add_option("config", config, "Scenario JSON")->required();
  serve->add_option("--port", port, "TCP port")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "chaser: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(config, out);
    if (sweep->parsed()) return cmd_sweep(config, weights, csv);
    if (field->parsed()) return cmd_field(config, target, slice_z, field_out);
    if (serve->parsed()) return cmd_serve(config, host, port);
  } catch (const std::exception& e) {
    std::cerr << "chaser: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
