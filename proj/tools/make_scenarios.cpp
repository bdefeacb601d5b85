// Writes the shipped scenarios (maps + configs) into the given directory.
#include "chaser/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace chaser;
using nlohmann::json;

namespace {

// centimeter rounding keeps the written configs readable
double cm(double v) { return std::round(v * 100.0) / 100.0; }

json v3(double x, double y, double z) { return json::array({cm(x), cm(y), cm(z)}); }

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << text;
}

void box(VoxelGrid& g, double x0, double y0, double x1, double y1, double h) {
  g.fill_box(Vec3(x0, y0, 0.0), Vec3(x1, y1, h));
}

// Block [x0, x1] x [y0, y1] of height h with the (qx, qy) corner quadrant of
// size s x s removed: an L-shaped footprint. qx, qy in {0, 1} select the corner.
void l_block(VoxelGrid& g, double x0, double y0, double x1, double y1, double h, int qx, int qy, double s) {
  box(g, x0, y0, x1, y1, h);
  const double cx = qx ? x1 - s : x0, cy = qy ? y1 - s : y0;
  g.fill_box(Vec3(cx, cy, 0.0), Vec3(cx + s, cy + s, h), false);
}

// Block with a courtyard notch of width w and depth d cut into one side
// (0: -y, 1: +x, 2: +y, 3: -x): a U-shaped footprint.
void u_block(VoxelGrid& g, double x0, double y0, double x1, double y1, double h, int side, double w, double d) {
  box(g, x0, y0, x1, y1, h);
  const double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
  Vec3 lo, hi;
  switch (side) {
    case 0: lo = {mx - w / 2, y0, 0}; hi = {mx + w / 2, y0 + d, h}; break;
    case 1: lo = {x1 - d, my - w / 2, 0}; hi = {x1, my + w / 2, h}; break;
    case 2: lo = {mx - w / 2, y1 - d, 0}; hi = {mx + w / 2, y1, h}; break;
    default: lo = {x0, my - w / 2, 0}; hi = {x0 + d, my + w / 2, h}; break;
  }
  g.fill_box(lo, hi, false);
}

json leg(double x, double y, double speed, bool hide = false) {
  return {{"to", v3(x, y, 0.6)}, {"speed", speed}, {"hide", hide}};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "scenarios";
  try {
    std::filesystem::create_directories(dir);

    // trivial: empty 20 x 20 x 6 m world, target walks a straight line
    VoxelGrid empty(Vec3::Zero(), 0.4, Index3{50, 50, 15});
    write(dir / "empty.map", save_map(empty));
    json trivial = {
        {"map", "empty.map"},
        {"via_points", json::array({v3(10, 10, 0.6), v3(16, 10, 0.6)})},
        {"target", {{"start", v3(4, 10, 0.6)}, {"start_delay", 1.0}, {"legs", json::array({leg(16, 10, 0.5)})}}},
        {"chaser", {{"position", v3(2, 10, 1.6)}}},
        {"mission", {{"time_limit", 60.0}}},
    };
    write(dir / "trivial.json", trivial.dump(2) + "\n");

    // city: 40 x 40 x 8 m. A colonnade of square pillars fills the south
    // half; the target runs along its lanes and cuts through the gaps between
    // pillars without warning (the hiding maneuver), then leaves east between
    // two buildings. L and U shaped buildings fill the north half.
    VoxelGrid city(Vec3::Zero(), 0.4, Index3{100, 100, 20});
    const double tall = 6.8, low = 3.2, pitch = 3.6, side = 1.6;
    for (double x = 4.0; x < 27.0; x += pitch) {
      for (double y = 2.0; y < 18.0; y += pitch) box(city, x, y, x + side, y + side, tall);
    }
    l_block(city, 2, 22, 10, 30, tall, 1, 0, 4);
    u_block(city, 13, 22, 21, 29, tall, 2, 3, 4);
    l_block(city, 24, 22, 31, 30, low, 0, 1, 3.5);
    u_block(city, 33, 21, 39, 29, tall, 3, 2.4, 3);
    l_block(city, 2, 32, 9, 39, low, 1, 1, 3);
    u_block(city, 12, 32, 20, 38, tall, 0, 3, 3);
    l_block(city, 23, 33, 30, 39, tall, 0, 0, 3.5);
    u_block(city, 32, 32, 39, 38, low, 1, 2.4, 3);
    l_block(city, 31, 2, 36, 7.5, tall, 0, 1, 2.5);
    u_block(city, 31, 15.5, 37, 19.5, tall, 0, 2, 2);
    write(dir / "city.map", save_map(city));

    // lane centers sit midway between pillar rows, gap centers between columns
    const double lane = 2.0 + 2 * pitch + side + 0.5 * (pitch - side);
    json legs = json::array();
    double x = 4.0 + side + 0.5 * (pitch - side);
    const double detour[4] = {0.0, pitch, 0.0, -pitch};
    for (int k = 0; x < 27.0; ++k) {
      const double y = lane + detour[k % 4];
      legs.push_back(leg(x, y, 1.0, k % 2 == 1));
      x += pitch;
      legs.push_back(leg(x, y, 1.0));
    }
    legs.push_back(leg(x, lane, 1.0));
    legs.push_back(leg(37, lane, 0.8));
    json hiding = {
        {"map", "city.map"},
        {"via_points", json::array({v3(10.2, lane, 0.6), v3(17.4, lane, 0.6), v3(24.6, lane, 0.6), v3(x, lane, 0.6),
                                      v3(37, lane, 0.6)})},
        {"target", {{"start", v3(1.0, lane, 0.6)}, {"start_delay", 1.0}, {"legs", legs}}},
        {"chaser", {{"position", v3(1.0, lane - 1.5, 1.8)}}},
        {"mission", {{"time_limit", 120.0}}},
    };
    write(dir / "city_hiding.json", hiding.dump(2) + "\n");

    // validate what was written
    for (const char* name : {"trivial.json", "city_hiding.json"}) load_scenario(dir / name);
  } catch (const std::exception& e) {
    std::cerr << "make_scenarios: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
