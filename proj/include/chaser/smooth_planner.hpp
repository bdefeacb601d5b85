#pragma once

#include "chaser/predictor.hpp"
#include "chaser/preplanner.hpp"
#include "chaser/qp.hpp"

#include <cmath>
#include <vector>

namespace chaser {

struct SmoothParams {
  int order = 6;  // K
  double lambda = 0.5;
  int samples_per_segment = 8;  // M
  double kkt_tol = 1e-6;
  double shrink = 1e-3;  // tightening of sampled corridor constraints [m]

  void validate() const {
    if (order < 5) throw ConfigError("smooth.order: must be >= 5");
    if (!(lambda > 0)) throw ConfigError("smooth.lambda: must be positive");
    if (samples_per_segment < 2) throw ConfigError("smooth.samples_per_segment: must be >= 2");
    if (!(kkt_tol > 0)) throw ConfigError("smooth.kkt_tol: must be positive");
    if (shrink < 0) throw ConfigError("smooth.shrink: must be >= 0");
  }
};

struct KinematicState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

/// d^order/ds^order of the monomials 1, s, ..., s^K.
inline Eigen::RowVectorXd monomial_row(int K, double s, int order) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K + 1);
  for (int i = order; i <= K; ++i) {
    double c = 1.0;
    for (int m = 0; m < order; ++m) c *= (i - m);
    row[i] = c * std::pow(s, i - order);
  }
  return row;
}

/// Gram matrix of the third derivatives of the monomial basis on [0, T]:
/// G(i, j) = integral of (s^i)''' (s^j)''' ds.
inline Eigen::MatrixXd jerk_gram(int K, double T) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K + 1, K + 1);
  for (int i = 3; i <= K; ++i)
    for (int j = 3; j <= K; ++j) {
      const double ci = i * (i - 1.0) * (i - 2.0);
      const double cj = j * (j - 1.0) * (j - 2.0);
      const int p = i + j - 5;
      G(i, j) = ci * cj * std::pow(T, p) / p;
    }
  return G;
}

/// Piecewise polynomial position trajectory. Segment k is expressed in the
/// local time s = tau - knots[k] on [knots[k], knots[k+1]].
struct ChaseTrajectory {
  int order = 6;
  std::vector<Eigen::MatrixXd> coefficients;  // one 3 x (K+1) matrix per segment
  std::vector<double> knots;
  std::vector<double> yaw_times;
  std::vector<double> yaw;

  int segments() const { return static_cast<int>(coefficients.size()); }
  double start_time() const { return knots.front(); }
  double end_time() const { return knots.back(); }

  /// Segment owning tau: knots belong to the segment on their left, except t_0.
  int segment_at(double tau) const {
    for (int k = 0; k < segments(); ++k)
      if (tau <= knots[k + 1]) return k;
    return segments() - 1;
  }

  Vec3 evaluate(double tau, int derivative = 0) const {
    constexpr double kTol = 1e-9;
    if (tau < knots.front() - kTol || tau > knots.back() + kTol) {
      throw OutOfBoundsError("trajectory: time outside [t_0, t_N]");
    }
    if (derivative < 0 || derivative > 3) throw ConfigError("trajectory: derivative order 0..3");
    const int k = segment_at(tau);
    const double s = tau - knots[k];
    return coefficients[k] * monomial_row(order, s, derivative).transpose();
  }

  /// Linear interpolation of the planned yaw profile.
  double yaw_at(double tau) const {
    if (yaw.empty()) return 0.0;
    if (tau <= yaw_times.front()) return yaw.front();
    for (std::size_t i = 0; i + 1 < yaw_times.size(); ++i) {
      if (tau <= yaw_times[i + 1]) {
        const double w = (tau - yaw_times[i]) / (yaw_times[i + 1] - yaw_times[i]);
        return (1 - w) * yaw[i] + w * yaw[i + 1];
      }
    }
    return yaw.back();
  }

  KinematicState state_at(double tau) const {
    return {evaluate(tau, 0), evaluate(tau, 1), evaluate(tau, 2)};
  }
};

inline Vec3 evaluate_trajectory(const ChaseTrajectory& traj, double tau, int derivative) {
  return traj.evaluate(tau, derivative);
}

/// Assembled smoothing QP together with the bookkeeping needed to decode it.
struct SmoothQp {
  QpProblem qp;
  int order = 6;
  std::vector<double> knots;
  int samples_per_segment = 0;

  int segments() const { return static_cast<int>(knots.size()) - 1; }
  Eigen::Index index(int segment, int axis, int coef) const {
    return (static_cast<Eigen::Index>(segment) * 3 + axis) * (order + 1) + coef;
  }

  ChaseTrajectory decode(const Eigen::VectorXd& x) const {
    ChaseTrajectory traj;
    traj.order = order;
    traj.knots = knots;
    for (int k = 0; k < segments(); ++k) {
      Eigen::MatrixXd c(3, order + 1);
      for (int a = 0; a < 3; ++a)
        for (int i = 0; i <= order; ++i) c(a, i) = x[index(k, a, i)];
      traj.coefficients.push_back(c);
    }
    return traj;
  }
};

/// Minimum-jerk objective with viewpoint attraction, initial state and C2
/// continuity equalities, and corridor half-spaces sampled along each segment.
/// Side faces are sampled at all M sample times (the plan start excluded), end
/// faces at interior samples only: at a knot the end faces of consecutive boxes
/// coincide when the skeleton runs straight.
inline SmoothQp build_qp(const std::vector<Corridor>& corridors, const ViewpointSkeleton& skeleton,
                         const KinematicState& init, const SmoothParams& params) {
  params.validate();
  const int N = static_cast<int>(skeleton.points.size()) - 1;
  if (N < 1) throw ConfigError("smooth: skeleton needs at least one segment");
  if (static_cast<int>(corridors.size()) != N) throw ConfigError("smooth: corridor count mismatch");
  for (int k = 0; k < N; ++k) {
    if (!(skeleton.times[k + 1] - skeleton.times[k] > 1e-9)) {
      throw ConfigError("smooth: knots must be strictly increasing");
    }
  }
  const int K = params.order;
  const int nc = K + 1;
  SmoothQp sq;
  sq.order = K;
  sq.knots = skeleton.times;
  sq.samples_per_segment = params.samples_per_segment;
  const Eigen::Index n = static_cast<Eigen::Index>(N) * 3 * nc;

  QpProblem& qp = sq.qp;
  qp.hessian = Eigen::MatrixXd::Zero(n, n);
  qp.linear = Eigen::VectorXd::Zero(n);
  qp.constant = 0.0;
  for (int k = 0; k < N; ++k) {
    const double T = sq.knots[k + 1] - sq.knots[k];
    const Eigen::MatrixXd G = jerk_gram(K, T);
    const Eigen::RowVectorXd end = monomial_row(K, T, 0);
    const Vec3& v = skeleton.points[k + 1];
    for (int a = 0; a < 3; ++a) {
      const Eigen::Index base = sq.index(k, a, 0);
      qp.hessian.block(base, base, nc, nc) += 2.0 * G + 2.0 * params.lambda * end.transpose() * end;
      qp.linear.segment(base, nc) += -2.0 * params.lambda * v[a] * end.transpose();
    }
    qp.constant += params.lambda * v.squaredNorm();
  }

  // equalities: initial state, then C2 continuity at interior knots
  const int n_eq = 9 + 9 * (N - 1);
  qp.eq_matrix = Eigen::MatrixXd::Zero(n_eq, n);
  qp.eq_vector = Eigen::VectorXd::Zero(n_eq);
  int row = 0;
  const Vec3 init_vals[3] = {init.position, init.velocity, init.acceleration};
  for (int d = 0; d < 3; ++d) {
    const Eigen::RowVectorXd r0 = monomial_row(K, 0.0, d);
    for (int a = 0; a < 3; ++a, ++row) {
      qp.eq_matrix.block(row, sq.index(0, a, 0), 1, nc) = r0;
      qp.eq_vector[row] = init_vals[d][a];
    }
  }
  for (int k = 0; k + 1 < N; ++k) {
    const double T = sq.knots[k + 1] - sq.knots[k];
    for (int d = 0; d < 3; ++d) {
      const Eigen::RowVectorXd left = monomial_row(K, T, d);
      const Eigen::RowVectorXd right = monomial_row(K, 0.0, d);
      for (int a = 0; a < 3; ++a, ++row) {
        qp.eq_matrix.block(row, sq.index(k, a, 0), 1, nc) = left;
        qp.eq_matrix.block(row, sq.index(k + 1, a, 0), 1, nc) -= right;
      }
    }
  }

  // sampled corridor inequalities
  const int M = params.samples_per_segment;
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (int k = 0; k < N; ++k) {
    const double T = sq.knots[k + 1] - sq.knots[k];
    for (int j = 0; j < M; ++j) {
      if (k == 0 && j == 0) continue;
      const double s = T * j / (M - 1);
      const Eigen::RowVectorXd basis = monomial_row(K, s, 0);
      const bool interior = j > 0 && j < M - 1;
      for (int h = 0; h < 6; ++h) {
        const bool face = h < 2;
        if (face && !interior) continue;
        const HalfSpace& hs = corridors[k].half_spaces[h];
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        for (int a = 0; a < 3; ++a) r.segment(sq.index(k, a, 0), nc) = hs.normal[a] * basis;
        rows.push_back(r);
        rhs.push_back(hs.offset - params.shrink);
      }
    }
  }
  qp.ineq_matrix.resize(static_cast<Eigen::Index>(rows.size()), n);
  qp.ineq_vector.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    qp.ineq_matrix.row(static_cast<Eigen::Index>(i)) = rows[i];
    qp.ineq_vector[static_cast<Eigen::Index>(i)] = rhs[i];
  }
  return sq;
}

/// Largest distance by which dense samples of the trajectory leave the union of
/// the corridors adjacent to their segment.
inline double corridor_excursion(const ChaseTrajectory& traj, const std::vector<Corridor>& corridors,
                                 int samples_per_segment) {
  double worst = 0.0;
  for (int k = 0; k < traj.segments(); ++k) {
    for (int j = 0; j <= samples_per_segment; ++j) {
      const double tau = traj.knots[k] + (traj.knots[k + 1] - traj.knots[k]) * j / samples_per_segment;
      const Vec3 p = traj.evaluate(tau);
      double best = std::numeric_limits<double>::infinity();
      for (int c = std::max(0, k - 1); c <= std::min(traj.segments() - 1, k + 1); ++c) {
        double viol = 0.0;
        for (const auto& h : corridors[c].half_spaces) viol = std::max(viol, -h.slack(p));
        best = std::min(best, viol);
      }
      worst = std::max(worst, best);
    }
  }
  return worst;
}

struct SmoothResult {
  ChaseTrajectory trajectory;
  QpResult solution;
  KktResiduals residuals;
  SmoothQp problem;
  double excursion = 0.0;
  bool refined = false;  // sample count was doubled after a post-hoc violation
};

/// Builds and solves the smoothing QP. Throws InfeasibleError when the QP has
/// no solution.
inline SmoothResult plan_smooth(const std::vector<Corridor>& corridors,
                                const ViewpointSkeleton& skeleton, const KinematicState& init,
                                const SmoothParams& params) {
  SmoothParams p = params;
  SmoothResult out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    out.problem = build_qp(corridors, skeleton, init, p);
    out.solution = solve_qp(out.problem.qp);
    if (!out.solution.ok()) {
      throw InfeasibleError(std::string("smooth: qp ") + to_string(out.solution.status));
    }
    out.residuals = kkt_residuals(out.problem.qp, out.solution);
    out.trajectory = out.problem.decode(out.solution.x);
    out.excursion = corridor_excursion(out.trajectory, corridors, 8 * p.samples_per_segment);
    if (out.excursion <= 1e-6 || attempt == 1) break;
    p.samples_per_segment *= 2;
    out.refined = true;
  }
  return out;
}

/// Yaw samples pointing the chaser at the predicted target, unwrapped so that
/// consecutive samples never jump by more than pi.
inline void plan_yaw(ChaseTrajectory& traj, const TargetPrediction& pred, double stride,
                     double initial_yaw = 0.0) {
  if (!(stride > 0)) throw ConfigError("plan_yaw: stride must be positive");
  traj.yaw_times.clear();
  traj.yaw.clear();
  const double t0 = traj.start_time();
  const double t1 = traj.end_time();
  const int n = static_cast<int>(std::ceil((t1 - t0) / stride - 1e-9));
  double prev = initial_yaw;
  for (int i = 0; i <= n; ++i) {
    const double tau = std::min(t1, t0 + i * stride);
    const Vec3 c = traj.evaluate(tau);
    const Vec3 p = pred.sample(std::max(tau, pred.start_time()));
    const Eigen::Vector2d d = (p - c).head<2>();
    double yaw = prev;
    if (d.norm() > 1e-9) {
      yaw = std::atan2(d.y(), d.x());
      yaw += 2.0 * kPi * std::round((prev - yaw) / (2.0 * kPi));
    }
    traj.yaw_times.push_back(tau);
    traj.yaw.push_back(yaw);
    prev = yaw;
  }
}

}  // namespace chaser
