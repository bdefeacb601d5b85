#pragma once

#include "chaser/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace chaser {

/// min 0.5 x'Hx + c'x + constant  s.t.  A_eq x = b_eq,  A_in x <= b_in
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  double constant = 0.0;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_vector;
  Eigen::MatrixXd ineq_matrix;
  Eigen::VectorXd ineq_vector;

  Eigen::Index variables() const { return hessian.rows(); }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(hessian * x) + linear.dot(x) + constant;
  }

  void check_dimensions() const {
    const auto n = hessian.rows();
    if (hessian.cols() != n || linear.size() != n) throw ConfigError("qp: hessian/linear size mismatch");
    if (eq_matrix.rows() != eq_vector.size() || (eq_matrix.rows() > 0 && eq_matrix.cols() != n)) {
      throw ConfigError("qp: equality size mismatch");
    }
    if (ineq_matrix.rows() != ineq_vector.size() ||
        (ineq_matrix.rows() > 0 && ineq_matrix.cols() != n)) {
      throw ConfigError("qp: inequality size mismatch");
    }
  }
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct KktResiduals {
  double stationarity = 0.0;
  double equality = 0.0;
  double inequality = 0.0;       // largest violation of A_in x <= b_in
  double dual_feasibility = 0.0;  // largest negative multiplier
  double complementarity = 0.0;

  double max() const {
    return std::max({stationarity, equality, inequality, dual_feasibility, complementarity});
  }
};

struct QpResult {
  QpStatus status = QpStatus::kInfeasible;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
  int iterations = 0;
  int active_constraints = 0;

  bool ok() const { return status == QpStatus::kOptimal; }
};

inline KktResiduals kkt_residuals(const QpProblem& qp, const QpResult& r) {
  KktResiduals k;
  Eigen::VectorXd grad = qp.hessian * r.x + qp.linear;
  if (qp.eq_matrix.rows() > 0) {
    grad += qp.eq_matrix.transpose() * r.eq_multipliers;
    k.equality = (qp.eq_matrix * r.x - qp.eq_vector).cwiseAbs().maxCoeff();
  }
  if (qp.ineq_matrix.rows() > 0) {
    grad += qp.ineq_matrix.transpose() * r.ineq_multipliers;
    const Eigen::VectorXd slack = qp.ineq_vector - qp.ineq_matrix * r.x;
    k.inequality = std::max(0.0, -slack.minCoeff());
    k.dual_feasibility = std::max(0.0, -r.ineq_multipliers.minCoeff());
    k.complementarity = r.ineq_multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  k.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return k;
}

namespace detail {

/// Goldfarb-Idnani dual active-set method for
///   min 0.5 y'Hy + g'y  s.t.  N' y >= e   (columns of N are constraint normals)
/// with H positive definite.
class DualActiveSet {
 public:
  DualActiveSet(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::MatrixXd& N,
                const Eigen::VectorXd& e, const Eigen::LLT<Eigen::MatrixXd>& chol)
      : H_(H), g_(g), N_(N), e_(e), n_(H.rows()), m_(N.cols()) {
    // J = L^{-T}, so J J' = H^{-1}
    J_ = chol.matrixU().solve(Eigen::MatrixXd::Identity(n_, n_));
    R_ = Eigen::MatrixXd::Zero(n_, n_);
    y_ = -chol.solve(g_);
    active_.clear();
    u_.clear();
  }

  QpStatus solve(int max_iterations) {
    std::vector<char> is_active(m_, 0);
    Eigen::VectorXd norms(m_);
    for (Eigen::Index i = 0; i < m_; ++i) norms[i] = std::max(N_.col(i).norm(), 1e-300);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const double viol_tol = 1e-11;

    while (true) {
      // most violated (scaled) constraint
      Eigen::Index p = -1;
      double worst = -viol_tol;
      for (Eigen::Index i = 0; i < m_; ++i) {
        if (is_active[i]) continue;
        const double s = (N_.col(i).dot(y_) - e_[i]) / std::max(norms[i], 1.0);
        if (s < worst) {
          worst = s;
          p = i;
        }
      }
      if (p < 0) return QpStatus::kOptimal;

      const Eigen::VectorXd np = N_.col(p);
      double up = 0.0;  // multiplier of the constraint being added
      while (true) {
        if (++iterations_ > max_iterations) return QpStatus::kMaxIterations;
        const int q = static_cast<int>(active_.size());
        const Eigen::VectorXd d = J_.transpose() * np;
        const Eigen::VectorXd z = J_.rightCols(n_ - q) * d.tail(n_ - q);
        Eigen::VectorXd r(q);
        if (q > 0) {
          r = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
        }
        double t1 = kInf;
        int drop = -1;
        for (int j = 0; j < q; ++j) {
          if (r[j] > 0.0) {
            const double ratio = u_[j] / r[j];
            if (ratio < t1) {
              t1 = ratio;
              drop = j;
            }
          }
        }
        const double s_p = np.dot(y_) - e_[p];
        const double znp = z.dot(np);
        double t2 = kInf;
        if (z.norm() > 1e-12 * std::max(1.0, d.norm()) && znp > 0.0) t2 = -s_p / znp;
        const double t = std::min(t1, t2);
        if (t == kInf) return QpStatus::kInfeasible;

        if (t2 == kInf) {
          for (int j = 0; j < q; ++j) u_[j] -= t * r[j];
          up += t;
          is_active[active_[drop]] = 0;
          drop_constraint(drop);
          continue;
        }
        y_ += t * z;
        for (int j = 0; j < q; ++j) u_[j] -= t * r[j];
        up += t;
        if (t == t2) {
          if (!add_constraint(d)) return QpStatus::kInfeasible;
          active_.push_back(static_cast<int>(p));
          u_.push_back(up);
          is_active[p] = 1;
          break;
        }
        is_active[active_[drop]] = 0;
        drop_constraint(drop);
      }
    }
  }

  const Eigen::VectorXd& y() const { return y_; }

  Eigen::VectorXd multipliers() const {
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(m_);
    for (std::size_t j = 0; j < active_.size(); ++j) lam[active_[j]] = u_[j];
    return lam;
  }

  int iterations() const { return iterations_; }
  int active_count() const { return static_cast<int>(active_.size()); }

 private:
  bool add_constraint(Eigen::VectorXd d) {
    const int q = static_cast<int>(active_.size());
    for (Eigen::Index j = n_ - 1; j > q; --j) {
      const double a = d[j - 1], b = d[j];
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double c = a / h, s = b / h;
      d[j - 1] = h;
      d[j] = 0.0;
      const Eigen::VectorXd cj1 = J_.col(j - 1);
      J_.col(j - 1) = c * cj1 + s * J_.col(j);
      J_.col(j) = -s * cj1 + c * J_.col(j);
    }
    if (std::abs(d[q]) <= 1e-14 * std::max(1.0, d.norm())) return false;
    R_.col(q).head(q + 1) = d.head(q + 1);
    return true;
  }

  void drop_constraint(int l) {
    const int q = static_cast<int>(active_.size());
    for (int k = l; k + 1 < q; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(q - 1).setZero();
    for (int j = l; j + 1 < q; ++j) {
      const double a = R_(j, j), b = R_(j + 1, j);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double c = a / h, s = b / h;
      for (int k = j; k + 1 < q; ++k) {
        const double rj = R_(j, k), rj1 = R_(j + 1, k);
        R_(j, k) = c * rj + s * rj1;
        R_(j + 1, k) = -s * rj + c * rj1;
      }
      const Eigen::VectorXd cj = J_.col(j);
      J_.col(j) = c * cj + s * J_.col(j + 1);
      J_.col(j + 1) = -s * cj + c * J_.col(j + 1);
    }
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
  }

  const Eigen::MatrixXd& H_;
  const Eigen::VectorXd& g_;
  const Eigen::MatrixXd& N_;
  const Eigen::VectorXd& e_;
  Eigen::Index n_;
  Eigen::Index m_;
  Eigen::MatrixXd J_;
  Eigen::MatrixXd R_;
  Eigen::VectorXd y_;
  std::vector<int> active_;
  std::vector<double> u_;
  int iterations_ = 0;
};

}  // namespace detail

struct QpSettings {
  int max_iterations = 2000;
  double equality_tol = 1e-9;
};

/// Dense convex QP. Equalities are eliminated through a null-space basis; the
/// reduced problem is solved by a dual active-set method, which yields exact
/// multipliers and detects infeasibility.
inline QpResult solve_qp(const QpProblem& qp, const QpSettings& settings = {}) {
  qp.check_dimensions();
  const Eigen::Index n = qp.variables();
  QpResult out;
  out.x = Eigen::VectorXd::Zero(n);
  out.eq_multipliers = Eigen::VectorXd::Zero(qp.eq_matrix.rows());
  out.ineq_multipliers = Eigen::VectorXd::Zero(qp.ineq_matrix.rows());

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(n, n);
  if (qp.eq_matrix.rows() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(qp.eq_matrix.transpose());
    const Eigen::Index rank = qr.rank();
    const Eigen::MatrixXd Q = qr.householderQ();
    Z = Q.rightCols(n - rank);
    x0 = qp.eq_matrix.completeOrthogonalDecomposition().solve(qp.eq_vector);
    const double scale = std::max(1.0, qp.eq_vector.cwiseAbs().maxCoeff());
    if ((qp.eq_matrix * x0 - qp.eq_vector).cwiseAbs().maxCoeff() > settings.equality_tol * scale) {
      out.status = QpStatus::kInfeasible;
      return out;
    }
  }

  const Eigen::Index nz = Z.cols();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(nz);
  if (nz > 0) {
    Eigen::MatrixXd H = Z.transpose() * qp.hessian * Z;
    H = 0.5 * (H + H.transpose());
    const Eigen::VectorXd g = Z.transpose() * (qp.hessian * x0 + qp.linear);
    // inequalities in the form N' y >= e
    Eigen::MatrixXd N(nz, qp.ineq_matrix.rows());
    Eigen::VectorXd e(qp.ineq_matrix.rows());
    if (qp.ineq_matrix.rows() > 0) {
      N = -(qp.ineq_matrix * Z).transpose();
      e = -(qp.ineq_vector - qp.ineq_matrix * x0);
    }
    Eigen::LLT<Eigen::MatrixXd> chol(H);
    if (chol.info() != Eigen::Success) {
      // positive semidefinite reduced hessian: small proximal regularization
      const double reg = 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
      H.diagonal().array() += reg;
      chol.compute(H);
      if (chol.info() != Eigen::Success) throw NumericalError("qp: reduced hessian not positive definite");
    }
    detail::DualActiveSet solver(H, g, N, e, chol);
    out.status = solver.solve(settings.max_iterations);
    out.iterations = solver.iterations();
    out.active_constraints = solver.active_count();
    y = solver.y();
    if (qp.ineq_matrix.rows() > 0) out.ineq_multipliers = solver.multipliers();
  } else {
    out.status = QpStatus::kOptimal;
    if (qp.ineq_matrix.rows() > 0 && (qp.ineq_matrix * x0 - qp.ineq_vector).maxCoeff() > 1e-9) {
      out.status = QpStatus::kInfeasible;
    }
  }
  out.x = x0 + Z * y;

  if (qp.eq_matrix.rows() > 0) {
    Eigen::VectorXd rhs = -(qp.hessian * out.x + qp.linear);
    if (qp.ineq_matrix.rows() > 0) rhs -= qp.ineq_matrix.transpose() * out.ineq_multipliers;
    out.eq_multipliers = qp.eq_matrix.transpose().completeOrthogonalDecomposition().solve(rhs);
  }
  return out;
}

}  // namespace chaser
