#pragma once

#include "chaser/predictor.hpp"
#include "chaser/preplanner.hpp"
#include "chaser/smooth_planner.hpp"
#include "chaser/visibility.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace chaser {

struct MissionParams {
  double horizon = 4.0;        // H
  double tick_dt = 0.05;
  double accum_err_tol = 1.0;  // epsilon, compared against the sum of squared errors [m^2]
  double via_tol = 0.5;        // delta
  double obs_period = 1.0;     // seconds between stored observations (H / N_o)
  double replan_fraction = 0.75;
  double time_limit = 180.0;
  double yaw_stride = 0.1;

  void validate() const {
    if (!(horizon > 0)) throw ConfigError("mission.horizon: must be positive");
    if (!(tick_dt > 0 && tick_dt <= horizon)) throw ConfigError("mission.tick_dt: must be in (0, horizon]");
    if (!(accum_err_tol > 0)) throw ConfigError("mission.accum_err_tol: must be positive");
    if (!(via_tol > 0)) throw ConfigError("mission.via_tol: must be positive");
    if (!(obs_period >= tick_dt)) throw ConfigError("mission.obs_period: must be >= tick_dt");
    if (!(replan_fraction > 0 && replan_fraction <= 1)) {
      throw ConfigError("mission.replan_fraction: must be in (0, 1]");
    }
    if (!(time_limit > 0)) throw ConfigError("mission.time_limit: must be positive");
    if (!(yaw_stride > 0)) throw ConfigError("mission.yaw_stride: must be positive");
  }
};

struct PlannerConfig {
  PredictionParams prediction;
  PreplanParams preplan;
  SmoothParams smooth;
  MissionParams mission;

  void validate() const {
    prediction.validate();
    preplan.validate();
    smooth.validate();
    mission.validate();
  }
};

/// Scripted target: straight legs at constant speed from `start`. A leg marked
/// `hide` is an abrupt maneuver behind an obstacle; it only affects logging.
struct ScriptLeg {
  Vec3 to = Vec3::Zero();
  double speed = 0.5;
  bool hide = false;
};

struct TargetScript {
  Vec3 start = Vec3::Zero();
  std::vector<ScriptLeg> legs;
  double start_delay = 0.0;  // target waits at `start` this long

  void validate() const {
    for (std::size_t i = 0; i < legs.size(); ++i) {
      if (!(legs[i].speed > 0)) {
        throw ConfigError("script.legs[" + std::to_string(i) + "].speed: must be positive");
      }
    }
  }

  double duration() const {
    double t = start_delay;
    Vec3 from = start;
    for (const auto& l : legs) {
      t += (l.to - from).norm() / l.speed;
      from = l.to;
    }
    return t;
  }

  /// Index of the leg active at time t (legs.size() once the script is over).
  std::size_t leg_at(double t) const {
    double t0 = start_delay;
    Vec3 from = start;
    for (std::size_t i = 0; i < legs.size(); ++i) {
      const double t1 = t0 + (legs[i].to - from).norm() / legs[i].speed;
      if (t >= t0 && t < t1) return i;
      t0 = t1;
      from = legs[i].to;
    }
    return legs.size();
  }

  Vec3 position(double t) const {
    double t0 = start_delay;
    Vec3 from = start;
    if (t <= t0) return start;
    for (const auto& l : legs) {
      const double len = (l.to - from).norm();
      const double t1 = t0 + len / l.speed;
      if (t < t1) return from + (l.to - from) * ((t - t0) / (t1 - t0));
      t0 = t1;
      from = l.to;
    }
    return from;
  }
};

struct TickRecord {
  double t = 0.0;
  Vec3 target = Vec3::Zero();
  Vec3 chaser = Vec3::Zero();
  Vec3 chaser_velocity = Vec3::Zero();
  double yaw = 0.0;
  double phi_target = 0.0;
  double phi_chaser = 0.0;
  double psi = 0.0;
  bool visible = true;
  double step = 0.0;  // chaser displacement since the previous tick
  int via_index = 0;
  bool replanned = false;
};

struct MissionEvent {
  double t = 0.0;
  std::string kind;
  std::string detail;
};

/// Aggregates over all ticks: mean psi, occluded time, flight distance.
struct MetricsSummary {
  double avg_psi = 0.0;
  double occlusion_duration = 0.0;
  double flight_distance = 0.0;
  double min_phi_chaser = 0.0;
  double duration = 0.0;
  int ticks = 0;
  int replans = 0;
  int failed_replans = 0;
  bool completed = false;
};

inline MetricsSummary compute_metrics(const std::vector<TickRecord>& records, double tick_dt) {
  if (records.empty()) throw ConfigError("metrics: no records");
  MetricsSummary m;
  double psi_sum = 0.0;
  int occluded = 0;
  m.min_phi_chaser = records.front().phi_chaser;
  for (const auto& r : records) {
    psi_sum += r.psi;
    occluded += r.visible ? 0 : 1;
    m.flight_distance += r.step;
    m.min_phi_chaser = std::min(m.min_phi_chaser, r.phi_chaser);
    m.replans += r.replanned ? 1 : 0;
  }
  m.ticks = static_cast<int>(records.size());
  m.avg_psi = psi_sum / m.ticks;
  m.occlusion_duration = tick_dt * occluded;
  m.duration = records.back().t - records.front().t;
  return m;
}

struct MetricsLog {
  std::vector<TickRecord> records;
  std::vector<MissionEvent> events;
  MetricsSummary summary;
};

/// Output of one predict -> preplan -> smooth cycle.
struct PlanBundle {
  double t = 0.0;
  TargetPrediction prediction;
  std::vector<double> layer_times;
  std::vector<Vec3> layer_targets;
  std::optional<Preplan> preplan;  // empty when the chaser simply holds
  ChaseTrajectory trajectory;
  KktResiduals residuals;
  double excursion = 0.0;
  int samples_per_segment = 0;  // corridor samples of the solved QP (M, or 2M after refinement)
  std::vector<double> corridor_occlusion;  // per corridor, see corridor_occlusion_rates
  bool hold = false;
};

/// Fraction of (corridor point, prediction time) pairs without line of sight,
/// per corridor. Points form a 3x3x3 lattice over each box; times are 5
/// samples over the corridor's interval [times[k], times[k+1]].
template <typename Target>
std::vector<double> corridor_occlusion_rates(const VoxelGrid& grid, const std::vector<Corridor>& corridors,
                                             const std::vector<double>& times, Target&& target_at) {
  std::vector<double> rates;
  for (std::size_t k = 0; k < corridors.size() && k + 1 < times.size(); ++k) {
    const Corridor& c = corridors[k];
    int pairs = 0, blocked = 0;
    for (int ti = 0; ti < 5; ++ti) {
      const Vec3 x_p = target_at(times[k] + (times[k + 1] - times[k]) * ti / 4.0);
      if (!grid.contains(x_p)) continue;
      for (int a = 0; a < 3; ++a) {
        for (int i = -1; i <= 1; ++i) {
          for (int j = -1; j <= 1; ++j) {
            const Vec3 x = c.from + 0.5 * a * (c.to - c.from) + c.half_width * (i * c.side_u + j * c.side_v);
            if (!grid.contains(x)) continue;
            ++pairs;
            blocked += is_visible(grid, x, x_p) ? 0 : 1;
          }
        }
      }
    }
    rates.push_back(pairs ? static_cast<double>(blocked) / pairs : 0.0);
  }
  return rates;
}

/// Constant trajectory at p over [t0, t1].
inline ChaseTrajectory hold_trajectory(const Vec3& p, double t0, double t1, int order, double yaw) {
  ChaseTrajectory tr;
  tr.order = order;
  tr.knots = {t0, t1};
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, order + 1);
  c.col(0) = p;
  tr.coefficients = {c};
  tr.yaw_times = {t0, t1};
  tr.yaw = {yaw, yaw};
  return tr;
}

/// One receding-horizon planning cycle at time t. A stationary target with the
/// chaser at rest on a valid viewpoint yields a hold plan: the literal edge
/// visibility cost rejects zero-length edges, so the layered graph can never
/// keep the chaser still. Throws InfeasibleError (or OutOfBoundsError when the
/// prediction leaves the map) on failure.
inline PlanBundle plan_cycle(const EsdfGrid& esdf, const ObservationBuffer& obs, const Vec3& goal,
                             double t, const Vec3& target_now, const KinematicState& chaser,
                             double yaw, const PlannerConfig& cfg) {
  PlanBundle out;
  out.t = t;
  out.prediction = predict_target(obs, goal, esdf, cfg.prediction);
  const int N = cfg.preplan.n_layers;
  const double H = cfg.mission.horizon;
  for (int k = 0; k <= N; ++k) {
    const double tk = t + H * k / N;
    out.layer_times.push_back(tk);
    out.layer_targets.push_back(k == 0 ? target_now : out.prediction.sample(tk));
  }
  const bool at_rest = chaser.velocity.norm() < 1e-3 && chaser.acceleration.norm() < 1e-3;
  if (out.prediction.stationary && at_rest &&
      is_candidate_viewpoint(esdf, chaser.position, target_now, cfg.preplan, cfg.preplan.d_upper)) {
    out.hold = true;
    out.trajectory = hold_trajectory(chaser.position, t, t + H, cfg.smooth.order, yaw);
    plan_yaw(out.trajectory, out.prediction, cfg.mission.yaw_stride, yaw);
    return out;
  }
  out.preplan = preplan(esdf, chaser.position, out.layer_times, out.layer_targets, cfg.preplan);
  auto smooth = plan_smooth(out.preplan->corridors, out.preplan->skeleton, chaser, cfg.smooth);
  out.residuals = smooth.residuals;
  out.excursion = smooth.excursion;
  out.samples_per_segment = smooth.problem.samples_per_segment;
  out.trajectory = std::move(smooth.trajectory);
  out.corridor_occlusion = corridor_occlusion_rates(esdf.grid(), out.preplan->corridors, out.layer_times,
                                                    [&](double tau) { return out.prediction.sample(tau); });
  plan_yaw(out.trajectory, out.prediction, cfg.mission.yaw_stride, yaw);
  return out;
}

struct WorldState {
  double t = 0.0;
  Vec3 target_pos = Vec3::Zero();
  KinematicState chaser;
  double yaw = 0.0;
  int active_via_index = 0;
  std::optional<TargetPrediction> current_prediction;
  std::optional<ChaseTrajectory> current_trajectory;
  double accum_err = 0.0;
  double plan_start = 0.0;
  bool plan_failed = false;
  bool completed = false;
};

/// Receding-horizon chasing loop. The caller supplies the target position for
/// each tick (from a script or an operator command); everything else is
/// deterministic.
class Mission {
 public:
  Mission(const EsdfGrid& esdf, std::vector<Vec3> via_points, const Vec3& target_start,
          const KinematicState& chaser_start, const PlannerConfig& cfg, double t0 = 0.0)
      : esdf_(esdf), via_(std::move(via_points)), cfg_(cfg), obs_(cfg.prediction.n_obs) {
    cfg_.validate();
    if (via_.empty()) throw ConfigError("mission: at least one via-point is required");
    const auto& grid = esdf_.grid();
    for (std::size_t i = 0; i < via_.size(); ++i) {
      if (!grid.contains(via_[i]) || esdf_.phi_at(via_[i]) <= 0.0) {
        throw ConfigError("via_points[" + std::to_string(i) + "]: not in free space");
      }
    }
    if (!grid.contains(target_start) || esdf_.phi_at(target_start) <= 0.0) {
      throw ConfigError("target start: not in free space");
    }
    if (!grid.contains(chaser_start.position) ||
        esdf_.phi_at(chaser_start.position) < cfg_.preplan.r_corridor) {
      throw ConfigError("chaser start: in collision (phi below preplan.r_corridor)");
    }
    if (!is_visible(grid, chaser_start.position, target_start)) {
      throw ConfigError("chaser start: target occluded at mission start");
    }
    state_.t = t0;
    state_.target_pos = target_start;
    state_.chaser = chaser_start;
    const Eigen::Vector2d d = (target_start - chaser_start.position).head<2>();
    state_.yaw = d.norm() > 1e-9 ? std::atan2(d.y(), d.x()) : 0.0;
    // the target is assumed to have been standing at its start point
    for (int i = cfg_.prediction.n_obs - 1; i >= 0; --i) {
      obs_.push(t0 - i * cfg_.mission.obs_period, target_start);
    }
    last_obs_t_ = t0;
    log_start_ = t0;
  }

  const WorldState& state() const { return state_; }
  const MetricsLog& log() const { return log_; }
  const std::optional<PlanBundle>& last_plan() const { return plan_; }
  const std::vector<Vec3>& via_points() const { return via_; }
  const PlannerConfig& config() const { return cfg_; }
  const ObservationBuffer& observations() const { return obs_; }
  bool finished() const {
    return state_.completed || state_.t >= log_start_ + cfg_.mission.time_limit - 1e-9;
  }

  void tick(const Vec3& target_next) {
    const auto& mp = cfg_.mission;
    WorldState& s = state_;
    const Vec3 chaser_prev = s.chaser.position;
    s.t += mp.tick_dt;
    s.target_pos = target_next;

    // ideal tracking of the current plan; hold once it runs out
    if (s.current_trajectory) {
      const auto& tr = *s.current_trajectory;
      if (s.t <= tr.end_time()) {
        s.chaser = tr.state_at(s.t);
      } else {
        s.chaser = {tr.evaluate(tr.end_time()), Vec3::Zero(), Vec3::Zero()};
      }
      s.yaw = tr.yaw_at(s.t);
    }

    if (s.t - last_obs_t_ >= mp.obs_period - 1e-9) {
      obs_.push(s.t, s.target_pos);
      last_obs_t_ = s.t;
    }
    if (s.current_prediction) {
      s.accum_err += (s.current_prediction->sample(s.t) - s.target_pos).squaredNorm();
    }

    // via-point progression (target observed to reach g)
    if ((s.target_pos - via_[s.active_via_index]).norm() < mp.via_tol) {
      event("via_reached", "index=" + std::to_string(s.active_via_index));
      if (s.active_via_index + 1 < static_cast<int>(via_.size())) {
        ++s.active_via_index;
      } else {
        s.completed = true;
      }
    }

    const char* reason = nullptr;
    if (!s.current_trajectory || s.plan_failed) {
      reason = "no_plan";
    } else if (s.accum_err > mp.accum_err_tol) {
      reason = "prediction_error";
    } else if (s.t >= s.plan_start + mp.replan_fraction * mp.horizon - 1e-9) {
      reason = "horizon";
    }
    bool replanned = false;
    if (reason && !s.completed) replanned = replan(reason);

    TickRecord r;
    r.t = s.t;
    r.target = s.target_pos;
    r.chaser = s.chaser.position;
    r.chaser_velocity = s.chaser.velocity;
    r.yaw = s.yaw;
    r.phi_target = esdf_.phi_at(s.target_pos);
    r.phi_chaser = esdf_.phi_at(s.chaser.position);
    r.psi = visibility_score(esdf_, s.chaser.position, s.target_pos);
    r.visible = is_visible(esdf_.grid(), s.chaser.position, s.target_pos);
    r.step = (s.chaser.position - chaser_prev).norm();
    r.via_index = s.active_via_index;
    r.replanned = replanned;
    log_.records.push_back(r);
  }

  /// Recomputes the aggregates over all records so far.
  const MetricsLog& finalize() {
    if (!log_.records.empty()) {
      log_.summary = compute_metrics(log_.records, cfg_.mission.tick_dt);
      log_.summary.failed_replans = failed_replans_;
      log_.summary.completed = state_.completed;
    }
    return log_;
  }

  void event(const std::string& kind, const std::string& detail) {
    log_.events.push_back({state_.t, kind, detail});
  }

 private:
  bool replan(const char* reason) {
    WorldState& s = state_;
    try {
      PlanBundle plan = plan_cycle(esdf_, obs_, via_[s.active_via_index], s.t, s.target_pos, s.chaser,
                                   s.yaw, cfg_);
      s.current_prediction = plan.prediction;
      s.current_trajectory = plan.trajectory;
      s.plan_start = s.t;
      s.accum_err = 0.0;
      s.plan_failed = false;
      std::string detail = std::string("reason=") + reason + (plan.hold ? " hold" : "");
      if (!plan.corridor_occlusion.empty()) {
        detail += " corridor_occlusion=";
        for (std::size_t k = 0; k < plan.corridor_occlusion.size(); ++k) {
          char buf[16];
          std::snprintf(buf, sizeof buf, "%s%.2f", k ? "," : "", plan.corridor_occlusion[k]);
          detail += buf;
        }
      }
      event("replan", detail);
      plan_ = std::move(plan);
      return true;
    } catch (const Error& e) {
      // hold position and retry on the next tick
      ++failed_replans_;
      event("replan_failed", std::string("reason=") + reason + " error=" + e.what());
      s.chaser.velocity.setZero();
      s.chaser.acceleration.setZero();
      s.current_trajectory =
          hold_trajectory(s.chaser.position, s.t, s.t + cfg_.mission.horizon, cfg_.smooth.order, s.yaw);
      s.plan_start = s.t;
      s.plan_failed = true;
      return false;
    }
  }

  const EsdfGrid& esdf_;
  std::vector<Vec3> via_;
  PlannerConfig cfg_;
  ObservationBuffer obs_;
  WorldState state_;
  MetricsLog log_;
  std::optional<PlanBundle> plan_;
  double last_obs_t_ = 0.0;
  double log_start_ = 0.0;
  int failed_replans_ = 0;
};

/// Runs a scripted mission until the last via-point is reached or the time
/// limit expires.
inline MetricsLog run_scripted(const EsdfGrid& esdf, const std::vector<Vec3>& via_points,
                               const TargetScript& script, const KinematicState& chaser_start,
                               const PlannerConfig& cfg) {
  script.validate();
  Mission m(esdf, via_points, script.position(0.0), chaser_start, cfg);
  std::size_t leg = script.legs.size() + 1;
  while (!m.finished()) {
    const double t_next = m.state().t + cfg.mission.tick_dt;
    m.tick(script.position(t_next));
    const std::size_t now = script.leg_at(m.state().t);
    if (now != leg && now < script.legs.size() && script.legs[now].hide) {
      m.event("hide", "leg=" + std::to_string(now));
    }
    leg = now;
  }
  return m.finalize();
}

}  // namespace chaser
