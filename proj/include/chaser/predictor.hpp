#pragma once

#include "chaser/esdf.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <deque>
#include <optional>
#include <vector>

namespace chaser {

struct Observation {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Fixed-capacity window of the most recent target observations.
class ObservationBuffer {
 public:
  explicit ObservationBuffer(int capacity = 4) : capacity_(capacity) {
    if (capacity < 2) throw ConfigError("observation buffer: capacity must be >= 2");
  }

  /// Appends a sample; the oldest one is dropped once the buffer is full.
  void push(double t, const Vec3& x) {
    if (!samples_.empty() && !(t > samples_.back().t)) {
      throw ConfigError("observation buffer: timestamps must be strictly increasing");
    }
    samples_.push_back({t, x});
    if (static_cast<int>(samples_.size()) > capacity_) samples_.pop_front();
  }

  void clear() { samples_.clear(); }
  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(samples_.size()); }
  bool full() const { return size() == capacity_; }
  const Observation& operator[](int i) const { return samples_[i]; }
  const Observation& back() const { return samples_.back(); }

  /// Mean speed over the window (path length / elapsed time).
  double average_speed() const {
    if (size() < 2) return 0.0;
    double len = 0.0;
    for (int n = 0; n + 1 < size(); ++n) len += (samples_[n + 1].position - samples_[n].position).norm();
    return len / (samples_.back().t - samples_.front().t);
  }

 private:
  int capacity_;
  std::deque<Observation> samples_;
};

struct PredictionParams {
  double gamma = 0.1;       // recency weight on observations
  double rho = 0.2;         // prior weight
  int n_obs = 4;            // N_o
  int n_total = 7;          // N_T
  double alpha = 2.5;       // covariant step size
  int max_iters = 200;
  double eps_obstacle = 0.8;  // obstacle cost influence distance [m]
  double converge_tol = 1e-12;
  double goal_weight = 1e3;  // row weight pinning the last path point to the goal

  void validate() const {
    if (!(gamma > 0 && rho > 0 && alpha > 0 && eps_obstacle > 0)) {
      throw ConfigError("prediction: gamma, rho, alpha and eps_obstacle must be positive");
    }
    if (n_obs < 2) throw ConfigError("prediction: n_obs must be >= 2");
    if (n_total <= n_obs) throw ConfigError("prediction: n_total must exceed n_obs");
    if (max_iters < 1) throw ConfigError("prediction: max_iters must be >= 1");
    if (!(goal_weight > 0)) throw ConfigError("prediction: goal_weight must be positive");
  }
};

/// Stacked least-squares prior: the quadratic part of the prediction objective
/// equals 0.5 * |A xi - b|^2 with xi = [z_1; ...; z_NT].
struct PriorSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  int observation_blocks = 0;
  int smoothness_blocks = 0;
  int goal_blocks = 0;

  int block_rows() const { return observation_blocks + smoothness_blocks + goal_blocks; }
};

inline PriorSystem assemble_prior(const ObservationBuffer& obs, const Vec3& goal,
                                  const PredictionParams& params) {
  params.validate();
  if (obs.size() != params.n_obs) throw ConfigError("prediction: observation buffer not full");
  const int n_total = params.n_total;
  const int n_obs = params.n_obs;
  PriorSystem sys;
  sys.observation_blocks = n_obs;
  sys.smoothness_blocks = n_total - 2;
  sys.goal_blocks = 1;
  const int rows = 3 * sys.block_rows();
  sys.A = Eigen::MatrixXd::Zero(rows, 3 * n_total);
  sys.b = Eigen::VectorXd::Zero(rows);
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  int r = 0;
  for (int n = 1; n <= n_obs; ++n, r += 3) {
    const double w = std::sqrt(std::exp(params.gamma * n));
    sys.A.block<3, 3>(r, 3 * (n - 1)) = w * I;
    sys.b.segment<3>(r) = w * obs[n - 1].position;
  }
  for (int n = 0; n + 2 < n_total; ++n, r += 3) {
    sys.A.block<3, 3>(r, 3 * n) = I;
    sys.A.block<3, 3>(r, 3 * (n + 1)) = -2.0 * I;
    sys.A.block<3, 3>(r, 3 * (n + 2)) = I;
  }
  sys.A.block<3, 3>(r, 3 * (n_total - 1)) = params.goal_weight * I;
  sys.b.segment<3>(r) = params.goal_weight * goal;
  return sys;
}

struct ObstacleCost {
  double cost = 0.0;
  Vec3 gradient = Vec3::Zero();
};

/// Piecewise obstacle penalty on the signed distance:
///   -phi + eps/2              phi < 0
///   (phi - eps)^2 / (2 eps)   0 <= phi <= eps
///   0                         phi > eps
inline ObstacleCost obstacle_cost(const EsdfGrid& esdf, const Vec3& p, double eps) {
  const double phi = esdf.phi_at(p);
  ObstacleCost out;
  double slope = 0.0;
  if (phi < 0.0) {
    out.cost = -phi + 0.5 * eps;
    slope = -1.0;
  } else if (phi <= eps) {
    out.cost = (phi - eps) * (phi - eps) / (2.0 * eps);
    slope = (phi - eps) / eps;
  } else {
    return out;
  }
  out.gradient = slope * esdf.gradient_at(p);
  return out;
}

inline Eigen::VectorXd stack_path(const std::vector<Vec3>& xi) {
  Eigen::VectorXd v(3 * xi.size());
  for (std::size_t n = 0; n < xi.size(); ++n) v.segment<3>(3 * n) = xi[n];
  return v;
}

inline std::vector<Vec3> unstack_path(const Eigen::VectorXd& v) {
  std::vector<Vec3> xi(v.size() / 3);
  for (std::size_t n = 0; n < xi.size(); ++n) xi[n] = v.segment<3>(3 * n);
  return xi;
}

/// Sum of obstacle costs over all path points and its stacked gradient.
inline double path_obstacle_cost(const EsdfGrid& esdf, const Eigen::VectorXd& xi, double eps,
                                 Eigen::VectorXd* gradient = nullptr) {
  double total = 0.0;
  if (gradient) gradient->setZero(xi.size());
  for (Eigen::Index n = 0; n < xi.size() / 3; ++n) {
    const auto c = obstacle_cost(esdf, xi.segment<3>(3 * n), eps);
    total += c.cost;
    if (gradient) gradient->segment<3>(3 * n) = c.gradient;
  }
  return total;
}

/// 0.5 rho |A xi - b|^2 + f_obs(xi)
inline double prediction_objective(const PriorSystem& sys, const EsdfGrid& esdf,
                                   const Eigen::VectorXd& xi, const PredictionParams& params) {
  return 0.5 * params.rho * (sys.A * xi - sys.b).squaredNorm() +
         path_obstacle_cost(esdf, xi, params.eps_obstacle);
}

struct PathPrediction {
  std::vector<Vec3> xi;
  std::vector<Vec3> initial;
  std::vector<double> objective;  // per accepted iterate, starting with the initial guess
  int iterations = 0;
};

/// Covariant gradient descent on the prediction objective. Observed points
/// start at the observations, future points on the straight line to the goal.
/// A step that increases the objective is retried with half the step size.
inline PathPrediction predict_path(const ObservationBuffer& obs, const Vec3& goal,
                                   const EsdfGrid& esdf, const PredictionParams& params) {
  const PriorSystem sys = assemble_prior(obs, goal, params);
  const Eigen::MatrixXd M = sys.A.transpose() * sys.A;
  const Eigen::VectorXd Atb = sys.A.transpose() * sys.b;
  const Eigen::LLT<Eigen::MatrixXd> metric(M);
  if (metric.info() != Eigen::Success) {
    throw NumericalError("prediction: singular prior metric");
  }

  const int n_obs = params.n_obs;
  const int n_total = params.n_total;
  std::vector<Vec3> init(n_total);
  for (int n = 0; n < n_obs; ++n) init[n] = obs[n].position;
  const Vec3 last = obs[n_obs - 1].position;
  const int n_future = n_total - n_obs;
  for (int j = 1; j <= n_future; ++j) {
    init[n_obs - 1 + j] = last + (goal - last) * (static_cast<double>(j) / n_future);
  }

  PathPrediction out;
  out.initial = init;
  Eigen::VectorXd xi = stack_path(init);
  double f = prediction_objective(sys, esdf, xi, params);
  if (!std::isfinite(f)) throw NumericalError("prediction: non-finite objective");
  out.objective.push_back(f);

  Eigen::VectorXd grad_obs;
  for (int it = 0; it < params.max_iters; ++it) {
    path_obstacle_cost(esdf, xi, params.eps_obstacle, &grad_obs);
    const Eigen::VectorXd g = params.rho * (M * xi - Atb) + grad_obs;
    const Eigen::VectorXd dir = metric.solve(g);
    double step = params.alpha;
    bool accepted = false;
    double f_new = f;
    Eigen::VectorXd candidate;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      candidate = xi - step * dir;
      f_new = prediction_objective(sys, esdf, candidate, params);
      if (!std::isfinite(f_new)) throw NumericalError("prediction: non-finite objective");
      if (f_new <= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double decrease = f - f_new;
    xi = candidate;
    f = f_new;
    out.objective.push_back(f);
    out.iterations = it + 1;
    if (decrease < params.converge_tol) break;
  }
  out.xi = unstack_path(xi);
  return out;
}

/// Knot times: observation stamps, then constant-speed arc-length allocation.
/// Returns nullopt when the target did not move during the observation window.
inline std::optional<std::vector<double>> allocate_times(const std::vector<Vec3>& xi,
                                                         const ObservationBuffer& obs) {
  const double v_avg = obs.average_speed();
  if (!(v_avg > 0.0)) return std::nullopt;
  std::vector<double> t(xi.size());
  for (int n = 0; n < obs.size(); ++n) t[n] = obs[n].t;
  for (std::size_t n = obs.size(); n < xi.size(); ++n) {
    t[n] = t[n - 1] + (xi[n] - xi[n - 1]).norm() / v_avg;
  }
  return t;
}

/// Time-parameterized target prediction; a stationary prediction holds the last
/// observed position.
struct TargetPrediction {
  std::vector<Vec3> xi;
  std::vector<double> knot_times;
  Vec3 goal = Vec3::Zero();
  double v_avg = 0.0;
  bool stationary = false;

  double start_time() const { return knot_times.front(); }

  Vec3 sample(double tau) const {
    if (tau < knot_times.front()) throw ConfigError("prediction: query before first knot");
    if (stationary) return xi.back();
    for (std::size_t n = 0; n + 1 < knot_times.size(); ++n) {
      const double t0 = knot_times[n];
      const double t1 = knot_times[n + 1];
      if (tau <= t1 && t1 > t0) {
        if (tau <= t0) return xi[n];
        return ((t1 - tau) * xi[n] + (tau - t0) * xi[n + 1]) / (t1 - t0);
      }
    }
    return xi.back();
  }
};

inline Vec3 sample_prediction(const TargetPrediction& pred, double tau) { return pred.sample(tau); }

inline TargetPrediction predict_target(const ObservationBuffer& obs, const Vec3& goal,
                                       const EsdfGrid& esdf, const PredictionParams& params) {
  TargetPrediction pred;
  pred.goal = goal;
  pred.v_avg = obs.average_speed();
  if (!(pred.v_avg > 0.0)) {
    pred.stationary = true;
    pred.xi = {obs.back().position};
    pred.knot_times = {obs[0].t};
    return pred;
  }
  pred.xi = predict_path(obs, goal, esdf, params).xi;
  pred.knot_times = *allocate_times(pred.xi, obs);
  return pred;
}

}  // namespace chaser
