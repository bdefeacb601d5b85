// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned here.
// Usage: acceptance <source dir>. Exit status is the number of failures.
#include "chaser/scenario.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <sstream>

using namespace chaser;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---- 1. distance field -----------------------------------------------------

void esdf_oracle() {
  constexpr double kTol = 1e-9, kBudget = 1.0;
  std::mt19937 rng(2024);
  double worst = 0.0, elapsed = 0.0;
  for (int n = 0; n < 50; ++n) {
    const auto g = chaser::testing::random_grid(rng, 16, n % 5 == 0 ? 0.0 : 0.02 + 0.01 * (n % 30), 0.5);
    const double cap = 1e9;
    const auto t0 = Clock::now();
    const auto e = compute_esdf(g, cap);
    elapsed += seconds_since(t0);
    const auto oracle = chaser::testing::brute_force_esdf(g, cap);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(e.voxel(g.unlinear(i)) - oracle[i]));
  }
  report(worst <= kTol && elapsed < kBudget, "esdf_oracle",
         fmt("50 grids <= 16^3: max |err| %.3g (tol %.0e), compute time %.3f s (limit %.1f s)", worst, kTol, elapsed,
             kBudget));
}

// ---- 2. prediction ---------------------------------------------------------

void prediction() {
  PredictionParams p;
  // constant velocity in an empty map over the full horizon
  const auto empty = compute_esdf(VoxelGrid(Vec3(-10, -10, -2), 0.5, {40, 40, 8}));
  const Vec3 v(0.5, 0.0, 0.0), x0(-4, 1, 0.6);
  const double horizon = 4.0;
  ObservationBuffer obs(p.n_obs);
  for (int i = 0; i < p.n_obs; ++i) obs.push(i, x0 + v * i);
  const Vec3 last = obs.back().position;
  const auto pred = predict_target(obs, last + v * horizon, empty, p);
  double worst = 0.0;
  for (double s = 0.0; s <= horizon + 1e-9; s += 0.05) {
    worst = std::max(worst, (pred.sample(obs.back().t + s) - (last + v * s)).norm());
  }
  const double rel = worst / (v.norm() * horizon);

  // objective never increases across iterations
  std::mt19937 rng(44);
  int increases = 0, runs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = chaser::testing::random_grid(rng, 20, 0.08, 0.4);
    const auto e = compute_esdf(g);
    ObservationBuffer o(p.n_obs);
    for (int i = 0; i < p.n_obs; ++i) o.push(i, chaser::testing::random_point_in(rng, g));
    const auto path = predict_path(o, chaser::testing::random_point_in(rng, g), e, p);
    for (std::size_t i = 1; i < path.objective.size(); ++i) increases += path.objective[i] > path.objective[i - 1];
    ++runs;
  }

  // obstacle gradient against central differences away from interpolation kinks
  VoxelGrid g(Vec3::Zero(), 0.4, {12, 12, 6});
  g.fill_box(Vec3(1.6, 1.6, 0.0), Vec3(3.2, 3.2, 1.6));
  g.set_occupied({9, 3, 2});
  const auto e = compute_esdf(g);
  std::uniform_real_distribution<double> u(0.3, 4.4), uz(0.3, 2.1);
  auto near_kink = [&](const Vec3& q) {
    for (int k = 0; k < 3; ++k) {
      const double f = (q[k] - g.origin()[k]) / g.resolution() - 0.5;
      if (std::abs(f - std::round(f)) * g.resolution() < 1e-4) return true;
    }
    return false;
  };
  double worst_grad = 0.0;
  for (int checked = 0; checked < 100;) {
    const Vec3 q(u(rng), u(rng), uz(rng));
    const double phi = e.phi_at(q);
    if (near_kink(q) || std::abs(phi) < 1e-4 || std::abs(phi - p.eps_obstacle) < 1e-4) continue;
    const Vec3 grad = obstacle_cost(e, q, p.eps_obstacle).gradient;
    for (int k = 0; k < 3; ++k) {
      Vec3 h = Vec3::Zero();
      h[k] = 1e-7;
      const double fd =
          (obstacle_cost(e, q + h, p.eps_obstacle).cost - obstacle_cost(e, q - h, p.eps_obstacle).cost) / 2e-7;
      worst_grad = std::max(worst_grad, std::abs(grad[k] - fd) / std::max(1.0, std::abs(fd)));
    }
    ++checked;
  }
  report(rel <= 0.05 && increases == 0 && worst_grad <= 1e-4, "prediction",
         fmt("constant velocity max err %.2f%% of path over 4 s (limit 5%%); objective increases %d in %d runs; "
             "gradient rel err %.2g on 100 points (limit 1e-4)",
             100 * rel, increases, runs, worst_grad));
}

// ---- 3. layered graph search -----------------------------------------------

void preplanner_optimality() {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0, infeasible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int layers = 1 + trial % 5;
    LayeredGraph g;
    g.nodes.push_back({Vec3::Zero()});
    g.targets.push_back(Vec3::Zero());
    g.times.push_back(0.0);
    g.edges.emplace_back();
    for (int k = 1; k <= layers; ++k) {
      const int n = 1 + static_cast<int>(u(rng) * 10) % 10;
      std::vector<Vec3> nodes;
      for (int i = 0; i < n; ++i) nodes.push_back(Vec3(k, i, 0));
      std::vector<GraphEdge> edges;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < static_cast<int>(g.nodes.back().size()); ++i)
          if (u(rng) < 0.6) edges.push_back({i, j, std::round(100 * u(rng)) / 10, {}});
      g.nodes.push_back(nodes);
      g.targets.push_back(Vec3::Zero());
      g.times.push_back(k);
      g.edges.push_back(edges);
    }
    double best = std::numeric_limits<double>::infinity();
    std::function<void(int, int, double)> rec = [&](int k, int node, double acc) {
      if (k + 1 == g.layer_count()) {
        best = std::min(best, acc);
        return;
      }
      for (const auto& e : g.edges[k + 1])
        if (e.from == node) rec(k + 1, e.to, acc + e.weight);
    };
    rec(0, 0, 0.0);
    try {
      const auto sk = solve_viewpoint_sequence(g);
      if (sk.total_cost != best) ++mismatches;
    } catch (const UnreachableLayerError&) {
      if (std::isfinite(best)) ++mismatches;
      ++infeasible;
    }
  }
  report(mismatches == 0, "preplanner_optimality",
         fmt("100 random graphs (<= 5 layers x <= 10 nodes, %d without a path): %d cost mismatches vs exhaustive "
             "enumeration (exact equality)",
             infeasible, mismatches));
}

// ---- scenario runs ---------------------------------------------------------

struct RunStats {
  MetricsLog log;
  std::string metrics_csv;
  int plans = 0;
  double worst_kkt = 0.0;
  double worst_sample = 0.0;  // largest violation at the QP's corridor samples
  std::vector<double> cycle_ms;
};

// Largest violation of the sampled corridor constraints, re-evaluated on the
// returned polynomial at the sample instants of the QP that was solved.
double sample_violation(const PlanBundle& plan, int samples) {
  const auto& tr = plan.trajectory;
  const auto& corridors = plan.preplan->corridors;
  double worst = 0.0;
  for (int k = 0; k < tr.segments(); ++k) {
    const double T = tr.knots[k + 1] - tr.knots[k];
    for (int j = 0; j < samples; ++j) {
      if (k == 0 && j == 0) continue;
      const Vec3 x = tr.evaluate(tr.knots[k] + T * j / (samples - 1));
      const bool interior = j > 0 && j < samples - 1;
      for (int h = interior ? 0 : 2; h < 6; ++h) worst = std::max(worst, -corridors[k].half_spaces[h].slack(x));
    }
  }
  return worst;
}

RunStats instrumented_run(const Scenario& s) {
  const auto& c = s.config;
  RunStats out;
  Mission m(s.esdf, c.via_points, c.script.position(0.0), c.chaser_start, c.planner);
  while (!m.finished()) {
    const auto t0 = Clock::now();
    m.tick(c.script.position(m.state().t + c.planner.mission.tick_dt));
    const double ms = 1e3 * seconds_since(t0);
    const auto& rec = m.log().records.back();
    if (!rec.replanned) continue;
    const auto& plan = *m.last_plan();
    if (plan.hold) continue;
    out.cycle_ms.push_back(ms);
    ++out.plans;
    out.worst_kkt = std::max(out.worst_kkt, plan.residuals.max());
    out.worst_sample = std::max(out.worst_sample, sample_violation(plan, plan.samples_per_segment));
  }
  out.log = m.finalize();
  std::ostringstream os;
  write_metrics_csv(os, out.log.records);
  out.metrics_csv = os.str();
  return out;
}

// Connected obstacles (6-neighborhood) whose voxel count is below that of
// their bounding box, i.e. footprints that are not boxes.
int non_convex_obstacles(const VoxelGrid& g) {
  std::vector<int> label(g.size(), -1);
  int non_convex = 0, next = 0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (!g.occupied(n) || label[n] >= 0) continue;
    std::queue<Index3> q;
    q.push(g.unlinear(n));
    label[n] = next;
    long count = 0;
    Index3 lo = g.unlinear(n), hi = lo;
    while (!q.empty()) {
      const Index3 i = q.front();
      q.pop();
      ++count;
      lo = {std::min(lo.x, i.x), std::min(lo.y, i.y), std::min(lo.z, i.z)};
      hi = {std::max(hi.x, i.x), std::max(hi.y, i.y), std::max(hi.z, i.z)};
      const Index3 nb[6] = {{i.x + 1, i.y, i.z}, {i.x - 1, i.y, i.z}, {i.x, i.y + 1, i.z},
                            {i.x, i.y - 1, i.z}, {i.x, i.y, i.z + 1}, {i.x, i.y, i.z - 1}};
      for (const Index3& j : nb) {
        if (!g.contains(j) || !g.occupied(j)) continue;
        const std::size_t lj = g.linear(j);
        if (label[lj] >= 0) continue;
        label[lj] = next;
        q.push(j);
      }
    }
    const long box = long(hi.x - lo.x + 1) * (hi.y - lo.y + 1) * (hi.z - lo.z + 1);
    non_convex += count < box ? 1 : 0;
    ++next;
  }
  return non_convex;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string root = argc > 1 ? argv[1] : ".";
  esdf_oracle();
  prediction();
  preplanner_optimality();

  const Scenario trivial = load_scenario(root + "/scenarios/trivial.json");
  Scenario city = load_scenario(root + "/scenarios/city_hiding.json");
  const double w_low = 1.0, w_high = 5.0;
  city.config.planner.preplan.w_visibility = w_low;
  const auto trivial_run = instrumented_run(trivial);
  const auto city_low = instrumented_run(city);
  city.config.planner.preplan.w_visibility = w_high;
  const auto city_high = instrumented_run(city);

  // ---- 4. smoothing QP -----------------------------------------------------
  {
    constexpr double kQuinticTol = 1e-5, kKktTol = 1e-6, kSampleTol = 1e-6;
    double worst_quintic = 0.0;
    for (int K : {5, 6}) {
      const Vec3 v1(1.0, -0.5, 0.4);
      const double T = 1.5;
      ViewpointSkeleton sk;
      sk.points = {Vec3::Zero(), v1};
      sk.times = {0.0, T};
      sk.targets = {Vec3::Zero(), Vec3::Zero()};
      sk.node_index = {0, 0};
      SmoothParams p;
      p.order = K;
      p.lambda = 1e6;
      KinematicState init;
      init.velocity = Vec3(0.3, 0.1, 0.0);
      init.acceleration = Vec3(0.0, 0.2, -0.1);
      const auto res = plan_smooth({make_corridor(Vec3::Zero(), v1, 1.0)}, sk, init, p);
      // minimum of int x'''^2 + lambda (x(T) - v)^2 with x, x', x'' fixed at 0:
      // x''' and x'''' vanish at T and x^(5)(T) + lambda x(T) = lambda v
      for (int a = 0; a < 3; ++a) {
        Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> b;
        A(0, 0) = 1;
        A(1, 1) = 1;
        A(2, 2) = 2;
        A(3, 3) = 6;
        A(3, 4) = 24 * T;
        A(3, 5) = 60 * T * T;
        A(4, 4) = 24;
        A(4, 5) = 120 * T;
        for (int i = 0; i < 6; ++i) A(5, i) = p.lambda * std::pow(T, i);
        A(5, 5) += 120;
        b << 0.0, init.velocity[a], init.acceleration[a], 0.0, 0.0, p.lambda * v1[a];
        const Eigen::Matrix<double, 6, 1> c = A.fullPivLu().solve(b);
        for (double s = 0.0; s <= T + 1e-12; s += 0.01) {
          double x = 0.0;
          for (int i = 5; i >= 0; --i) x = x * s + c[i];
          worst_quintic = std::max(worst_quintic, std::abs(res.trajectory.evaluate(s)[a] - x));
        }
      }
    }
    const double kkt = std::max({trivial_run.worst_kkt, city_low.worst_kkt, city_high.worst_kkt});
    const double sample = std::max({trivial_run.worst_sample, city_low.worst_sample, city_high.worst_sample});
    const int plans = trivial_run.plans + city_low.plans + city_high.plans;
    report(worst_quintic <= kQuinticTol && kkt <= kKktTol && sample <= kSampleTol, "qp_correctness",
           fmt("quintic max err %.2g (tol %.0e); over %d scenario plans: KKT residual %.2g (tol %.0e), corridor "
               "sample violation %.2g (tol %.0e)",
               worst_quintic, kQuinticTol, plans, kkt, kKktTol, sample, kSampleTol));
  }

  // ---- 5. safety -------------------------------------------------------------
  {
    constexpr double kInterpTol = 0.1;  // a quarter voxel at 0.4 m
    const double r_c = city.config.planner.preplan.r_corridor;
    const double min_phi = std::min({trivial_run.log.summary.min_phi_chaser, city_low.log.summary.min_phi_chaser,
                                     city_high.log.summary.min_phi_chaser});
    const int obstacles = non_convex_obstacles(city.esdf.grid());
    const std::size_t via = city.config.via_points.size();
    report(min_phi >= r_c - kInterpTol && obstacles >= 10 && via == 5, "safety",
           fmt("min phi(chaser) %.3f m over %d ticks (bound r_c - tol = %.2f - %.2f); city map: %d non-convex "
               "obstacles (need >= 10), %zu via-points (need 5)",
               min_phi, trivial_run.log.summary.ticks + city_low.log.summary.ticks + city_high.log.summary.ticks,
               r_c, kInterpTol, obstacles, via));
  }

  // ---- 6. visibility weight trend -------------------------------------------
  {
    const auto& lo = city_low.log.summary;
    const auto& hi = city_high.log.summary;
    const bool psi_up = hi.avg_psi > lo.avg_psi;
    const bool occ_down = lo.occlusion_duration > 0.0 && hi.occlusion_duration <= 0.8 * lo.occlusion_duration;
    const bool dist_up = hi.flight_distance > lo.flight_distance;
    report(psi_up && occ_down && dist_up, "visibility_weight",
           fmt("w_v %.0f -> %.0f: avg psi %.3f -> %.3f (must rise); occlusion %.2f -> %.2f s (must fall >= 20%%); "
               "flight %.1f -> %.1f m (must rise)",
               w_low, w_high, lo.avg_psi, hi.avg_psi, lo.occlusion_duration, hi.occlusion_duration,
               lo.flight_distance, hi.flight_distance));
  }

  // ---- 7. throughput ---------------------------------------------------------
  {
    constexpr double kLimitMs = 200.0;
    std::vector<double> ms = city_low.cycle_ms;
    ms.insert(ms.end(), city_high.cycle_ms.begin(), city_high.cycle_ms.end());
    std::sort(ms.begin(), ms.end());
    const double median = ms.empty() ? 1e9 : ms[ms.size() / 2];
    const double p90 = ms.empty() ? 1e9 : ms[ms.size() * 9 / 10];
    const auto& dims = city.esdf.grid().dims();
    report(median < kLimitMs, "throughput",
           fmt("%dx%dx%d map, N=%d: median replan cycle %.1f ms over %zu cycles (limit %.0f ms), p90 %.1f ms",
               dims.x, dims.y, dims.z, city.config.planner.preplan.n_layers, median, ms.size(), kLimitMs, p90));
  }

  // ---- 8. determinism --------------------------------------------------------
  {
    const auto again_trivial = instrumented_run(trivial);
    city.config.planner.preplan.w_visibility = w_low;
    const auto again_city = instrumented_run(city);
    const bool same_trivial = again_trivial.metrics_csv == trivial_run.metrics_csv;
    const bool same_city = again_city.metrics_csv == city_low.metrics_csv;
    report(same_trivial && same_city, "determinism",
           fmt("metrics.csv bit-identical on rerun: trivial %s (%zu bytes), city %s (%zu bytes)",
               same_trivial ? "yes" : "no", trivial_run.metrics_csv.size(), same_city ? "yes" : "no",
               city_low.metrics_csv.size()));
  }

  std::printf("%d failure(s)\n", failures);
  return failures;
}
