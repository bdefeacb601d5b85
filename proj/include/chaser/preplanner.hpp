#pragma once

#include "chaser/visibility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

namespace chaser {

struct PreplanParams {
  int n_layers = 4;        // N
  double d_lower = 1.0;    // minimum tracking distance
  double d_upper = 4.0;    // maximum tracking distance
  double d_desired = 2.5;
  double d_max = 2.0;      // maximum connection distance between layers
  double w_visibility = 1.0;
  double w_distance = 5.5;
  double r_safe = 0.3;
  double r_corridor = 0.2;
  double grid_stride = 0.4;
  double elev_min_deg = 20.0;
  double elev_max_deg = 70.0;
  int edge_samples = 3;

  void validate() const {
    if (n_layers < 1) throw ConfigError("preplan.n_layers: must be >= 1");
    if (!(d_lower > 0 && d_lower <= d_desired && d_desired <= d_upper)) {
      throw ConfigError("preplan.d_lower/d_desired/d_upper: need 0 < d_lower <= d_desired <= d_upper");
    }
    if (!(d_max > 0)) throw ConfigError("preplan.d_max: must be positive");
    if (!(r_corridor > 0 && r_corridor < r_safe)) {
      throw ConfigError("preplan.r_corridor/preplan.r_safe: need 0 < r_corridor < r_safe");
    }
    if (!(grid_stride > 0)) throw ConfigError("preplan.grid_stride: must be positive");
    if (!(elev_min_deg < elev_max_deg)) {
      throw ConfigError("preplan.elev_min_deg/preplan.elev_max_deg: need elev_min_deg < elev_max_deg");
    }
    if (edge_samples < 2) throw ConfigError("preplan.edge_samples: must be >= 2");
    if (w_visibility < 0 || w_distance < 0) throw ConfigError("preplan: weights must be >= 0");
  }
};

/// Candidate viewpoints are drawn from a map-aligned lattice so that layers
/// share sample locations.
struct ViewpointLattice {
  Vec3 origin = Vec3::Zero();
  double stride = 0.4;

  ViewpointLattice() = default;
  ViewpointLattice(const VoxelGrid& grid, double s)
      : origin(grid.origin() + Vec3::Constant(0.5 * s)), stride(s) {}

  Vec3 point(const Index3& i) const { return origin + stride * Vec3(i.x, i.y, i.z); }
};

struct ViewpointLayer {
  int k = 0;
  double t = 0.0;
  Vec3 target = Vec3::Zero();
  std::vector<Vec3> candidates;
  std::vector<Index3> lattice_index;
  std::vector<double> psi;  // psi(candidate; target)
};

/// Elevation of the line of sight from the target up to the viewpoint, degrees.
inline double los_elevation_deg(const Vec3& viewpoint, const Vec3& target) {
  const Vec3 d = viewpoint - target;
  return rad2deg(std::atan2(d.z(), d.head<2>().norm()));
}

/// Membership test for V_k, shared by candidate generation and post-hoc checks.
inline bool is_candidate_viewpoint(const EsdfGrid& esdf, const Vec3& c, const Vec3& target,
                                   const PreplanParams& params, double d_upper) {
  constexpr double kTol = 1e-9;
  const auto& grid = esdf.grid();
  if (!grid.contains(c)) return false;
  const double dist = (c - target).norm();
  if (dist < params.d_lower - kTol || dist > d_upper + kTol) return false;
  const double elev = los_elevation_deg(c, target);
  if (elev < params.elev_min_deg - kTol || elev > params.elev_max_deg + kTol) return false;
  if (esdf.phi_at(c) < params.r_safe) return false;
  return is_visible(grid, c, target);
}

/// V_k: lattice points in the tracking annulus around `target` that are safe,
/// visible and inside the elevation band, in lexicographic (x, y, z) order.
inline ViewpointLayer candidate_viewpoints(const EsdfGrid& esdf, const Vec3& target,
                                           const PreplanParams& params,
                                           double d_upper_override = -1.0) {
  const auto& grid = esdf.grid();
  if (!grid.contains(target)) throw OutOfBoundsError("candidate viewpoints: target outside map");
  const double d_upper = d_upper_override > 0 ? d_upper_override : params.d_upper;
  const ViewpointLattice lattice(grid, params.grid_stride);
  int lo[3], hi[3];
  for (int k = 0; k < 3; ++k) {
    lo[k] = static_cast<int>(std::ceil((target[k] - d_upper - lattice.origin[k]) / lattice.stride - 1e-9));
    hi[k] = static_cast<int>(std::floor((target[k] + d_upper - lattice.origin[k]) / lattice.stride + 1e-9));
    lo[k] = std::max(lo[k], 0);
  }
  ViewpointLayer layer;
  layer.target = target;
  for (int ix = lo[0]; ix <= hi[0]; ++ix)
    for (int iy = lo[1]; iy <= hi[1]; ++iy)
      for (int iz = lo[2]; iz <= hi[2]; ++iz) {
        const Index3 idx{ix, iy, iz};
        const Vec3 c = lattice.point(idx);
        if (!is_candidate_viewpoint(esdf, c, target, params, d_upper)) continue;
        layer.candidates.push_back(c);
        layer.lattice_index.push_back(idx);
        layer.psi.push_back(visibility_score(esdf, c, target));
      }
  return layer;
}

/// Trapezoid-rule integral of psi(.; target) along [a, b] with `samples` points,
/// where `psi_at(j)` returns the j-th sample.
template <typename PsiAt>
double trapezoid_line_integral(double length, int samples, PsiAt&& psi_at) {
  double sum = 0.0;
  for (int j = 0; j < samples; ++j) {
    const double w = (j == 0 || j == samples - 1) ? 0.5 : 1.0;
    sum += w * psi_at(j);
  }
  return sum * length / (samples - 1);
}

/// Inverse geometric mean of the visibility integrals of edge [v_a, v_b] with
/// respect to the two predicted target positions. Infinite when either integral
/// is non-positive (zero-length edges included).
inline double edge_visibility_cost(const EsdfGrid& esdf, const Vec3& v_a, const Vec3& v_b,
                                   const Vec3& target_a, const Vec3& target_b, int edge_samples) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (edge_samples < 2) throw ConfigError("edge_samples must be >= 2");
  const double len = (v_b - v_a).norm();
  if (!(len > 0.0)) return kInf;
  auto sample = [&](int j) { return v_a + (v_b - v_a) * (static_cast<double>(j) / (edge_samples - 1)); };
  const double ia = trapezoid_line_integral(
      len, edge_samples, [&](int j) { return visibility_score(esdf, sample(j), target_a); });
  const double ib = trapezoid_line_integral(
      len, edge_samples, [&](int j) { return visibility_score(esdf, sample(j), target_b); });
  if (!(ia > 0.0) || !(ib > 0.0)) return kInf;
  return 1.0 / std::sqrt(ia * ib);
}

/// Edge cost for edges leaving the chaser's current position. That point was
/// not selected by the planner and may already be occluded, in which case
/// every outgoing edge has a non-positive visibility integral; rejecting them
/// all would freeze the chaser exactly when it has to move. The integrals are
/// instead floored at a mean psi of 1 mm, which keeps such edges far more
/// expensive than any visible one.
inline double start_edge_visibility_cost(const EsdfGrid& esdf, const Vec3& start, const Vec3& v_b,
                                         const Vec3& target_a, const Vec3& target_b, int edge_samples) {
  constexpr double kPsiFloor = 1e-3;
  if (edge_samples < 2) throw ConfigError("edge_samples must be >= 2");
  const double len = (v_b - start).norm();
  if (!(len > 0.0)) return std::numeric_limits<double>::infinity();
  auto sample = [&](int j) { return start + (v_b - start) * (static_cast<double>(j) / (edge_samples - 1)); };
  const double ia = trapezoid_line_integral(
      len, edge_samples, [&](int j) { return visibility_score(esdf, sample(j), target_a); });
  const double ib = trapezoid_line_integral(
      len, edge_samples, [&](int j) { return visibility_score(esdf, sample(j), target_b); });
  return 1.0 / std::sqrt(std::max(ia, kPsiFloor * len) * std::max(ib, kPsiFloor * len));
}

/// Per-edge cost terms; `total()` is the graph weight.
struct EdgeCost {
  double interval = 0.0;    // |v_a - v_b|^2
  double visibility = 0.0;  // c_v
  double tracking = 0.0;    // (|target_b - v_b| - d_des)^2

  double total(const PreplanParams& p) const {
    return interval + p.w_visibility * visibility + p.w_distance * tracking;
  }
};

struct GraphEdge {
  int from = 0;  // node index in the previous layer
  int to = 0;    // node index in this layer
  double weight = 0.0;
  EdgeCost terms;
};

/// Layered DAG: layer 0 holds only the start node; edges[k] connect layer k-1
/// to layer k (edges[0] is empty).
struct LayeredGraph {
  std::vector<std::vector<Vec3>> nodes;
  std::vector<Vec3> targets;
  std::vector<double> times;
  std::vector<std::vector<GraphEdge>> edges;

  int layer_count() const { return static_cast<int>(nodes.size()); }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
  }
};

namespace detail {

/// Memoized psi(.; target) on the refined lattice with step stride/(samples-1),
/// stored densely over the refined-index box spanned by two layers.
class PsiMemo {
 public:
  PsiMemo(const EsdfGrid& esdf, const ViewpointLattice& lattice, int samples, const Vec3& target,
          const ViewpointLayer& a, const ViewpointLayer& b)
      : esdf_(esdf), lattice_(lattice), refine_(samples - 1), target_(target) {
    lo_ = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    hi_ = {std::numeric_limits<int>::min(), std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
    for (const auto* layer : {&a, &b})
      for (const Index3& i : layer->lattice_index) {
        const int c[3] = {i.x, i.y, i.z};
        for (int k = 0; k < 3; ++k) {
          lo_[k] = std::min(lo_[k], c[k] * refine_);
          hi_[k] = std::max(hi_[k], c[k] * refine_);
        }
      }
    std::size_t n = 0;
    if (lo_[0] <= hi_[0]) {
      for (int k = 0; k < 3; ++k) span_[k] = hi_[k] - lo_[k] + 1;
      n = static_cast<std::size_t>(span_[0]) * span_[1] * span_[2];
    }
    memo_.assign(n, std::numeric_limits<double>::quiet_NaN());
  }

  /// Refined-lattice coordinates must lie inside the box of the two layers,
  /// which holds for every point on a segment between their candidates.
  double at(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    const std::size_t key =
        (static_cast<std::size_t>(iz - lo_[2]) * span_[1] + static_cast<std::size_t>(iy - lo_[1])) * span_[0] +
        static_cast<std::size_t>(ix - lo_[0]);
    double& v = memo_[key];
    if (v == v) return v;
    const double h = lattice_.stride / refine_;
    const Vec3 p = lattice_.origin + h * Vec3(static_cast<double>(ix), static_cast<double>(iy),
                                              static_cast<double>(iz));
    v = visibility_score(esdf_, p, target_);
    return v;
  }

  int refine() const { return refine_; }

 private:
  const EsdfGrid& esdf_;
  ViewpointLattice lattice_;
  int refine_;
  Vec3 target_;
  std::array<int, 3> lo_{}, hi_{}, span_{};
  std::vector<double> memo_;
};

/// Visibility integrals of the lattice edge u -> w against both layer targets,
/// read from the memos. Returns false when either is non-positive.
inline bool lattice_edge_integrals(PsiMemo& memo_a, PsiMemo& memo_b, const Index3& iu, const Index3& iw,
                                   double len, int samples, double& ia, double& ib) {
  const int r = samples - 1;
  auto key = [&](int s, int axis_u, int axis_w) {
    return static_cast<std::int64_t>(axis_u) * r + static_cast<std::int64_t>(s) * (axis_w - axis_u);
  };
  ia = trapezoid_line_integral(len, samples, [&](int s) {
    return memo_a.at(key(s, iu.x, iw.x), key(s, iu.y, iw.y), key(s, iu.z, iw.z));
  });
  if (!(ia > 0.0)) return false;
  ib = trapezoid_line_integral(len, samples, [&](int s) {
    return memo_b.at(key(s, iu.x, iw.x), key(s, iu.y, iw.y), key(s, iu.z, iw.z));
  });
  return ib > 0.0;
}

}  // namespace detail

/// Connects consecutive layers where the segment keeps r_safe clearance and is
/// at most d_max long. Edges leaving the start node use min(r_safe, phi(start))
/// as the clearance bound so a chaser already closer than r_safe to an obstacle
/// can still move away.
inline LayeredGraph build_graph(const EsdfGrid& esdf, const std::vector<ViewpointLayer>& layers,
                                const Vec3& start, const Vec3& start_target, double start_time,
                                const PreplanParams& params) {
  params.validate();
  if (layers.empty()) throw ConfigError("build_graph: no layers");
  const ViewpointLattice lattice(esdf.grid(), params.grid_stride);
  const int samples = params.edge_samples;

  LayeredGraph g;
  g.nodes.push_back({start});
  g.targets.push_back(start_target);
  g.times.push_back(start_time);
  g.edges.emplace_back();
  for (const auto& layer : layers) {
    g.nodes.push_back(layer.candidates);
    g.targets.push_back(layer.target);
    g.times.push_back(layer.t);
  }

  const double start_clearance = std::min(params.r_safe, esdf.phi_at(start));
  const double d_max2 = params.d_max * params.d_max;

  for (std::size_t k = 1; k < g.nodes.size(); ++k) {
    const auto& from_nodes = g.nodes[k - 1];
    const auto& to_nodes = g.nodes[k];
    const Vec3& target_a = g.targets[k - 1];
    const Vec3& target_b = g.targets[k];
    const ViewpointLayer& to_layer = layers[k - 1];
    std::vector<GraphEdge> edges;

    auto make_edge = [&](int i, int j, double visibility) {
      const Vec3& u = from_nodes[i];
      const Vec3& w = to_nodes[j];
      GraphEdge e;
      e.from = i;
      e.to = j;
      e.terms.interval = (u - w).squaredNorm();
      e.terms.visibility = visibility;
      const double dev = (target_b - w).norm() - params.d_desired;
      e.terms.tracking = dev * dev;
      e.weight = e.terms.total(params);
      edges.push_back(e);
    };

    if (k == 1) {
      for (int j = 0; j < static_cast<int>(to_nodes.size()); ++j) {
        const Vec3& w = to_nodes[j];
        if ((w - start).squaredNorm() > d_max2) continue;
        if (min_phi_along(esdf, start, w, start_clearance) < start_clearance) continue;
        const double cv = start_edge_visibility_cost(esdf, start, w, target_a, target_b, samples);
        if (!std::isfinite(cv)) continue;
        make_edge(0, j, cv);
      }
    } else {
      const ViewpointLayer& from_layer = layers[k - 2];
      detail::PsiMemo memo_a(esdf, lattice, samples, target_a, from_layer, to_layer);
      detail::PsiMemo memo_b(esdf, lattice, samples, target_b, from_layer, to_layer);
      for (int j = 0; j < static_cast<int>(to_nodes.size()); ++j) {
        const Vec3& w = to_nodes[j];
        const Index3 iw = to_layer.lattice_index[j];
        for (int i = 0; i < static_cast<int>(from_nodes.size()); ++i) {
          const Vec3& u = from_nodes[i];
          const double len2 = (w - u).squaredNorm();
          if (len2 > d_max2 || len2 == 0.0) continue;
          if (min_phi_along(esdf, u, w, params.r_safe) < params.r_safe) continue;
          double ia = 0.0, ib = 0.0;
          if (!detail::lattice_edge_integrals(memo_a, memo_b, from_layer.lattice_index[i], iw, std::sqrt(len2),
                                              samples, ia, ib)) {
            continue;
          }
          make_edge(i, j, 1.0 / std::sqrt(ia * ib));
        }
      }
    }
    std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
      return a.to != b.to ? a.to < b.to : a.from < b.from;
    });
    g.edges.push_back(std::move(edges));
  }
  return g;
}

struct ViewpointSkeleton {
  std::vector<Vec3> points;  // v_0 .. v_N
  std::vector<double> times;
  std::vector<Vec3> targets;
  std::vector<int> node_index;  // index into each layer's candidates (0 for the start)
  double total_cost = 0.0;
};

class UnreachableLayerError : public InfeasibleError {
 public:
  explicit UnreachableLayerError(int layer)
      : InfeasibleError("preplan: no feasible path reaches layer " + std::to_string(layer)),
        layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

/// Minimum-cost start-to-last-layer path through one node per layer (dynamic
/// programming over the layered DAG). Ties resolve to the lowest node index.
inline ViewpointSkeleton solve_viewpoint_sequence(const LayeredGraph& g) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int layers = g.layer_count();
  std::vector<std::vector<double>> cost(layers);
  std::vector<std::vector<int>> parent(layers);
  cost[0].assign(g.nodes[0].size(), 0.0);
  parent[0].assign(g.nodes[0].size(), -1);
  for (int k = 1; k < layers; ++k) {
    cost[k].assign(g.nodes[k].size(), kInf);
    parent[k].assign(g.nodes[k].size(), -1);
    for (const auto& e : g.edges[k]) {
      const double c = cost[k - 1][e.from] + e.weight;
      if (c < cost[k][e.to]) {
        cost[k][e.to] = c;
        parent[k][e.to] = e.from;
      }
    }
    bool reachable = false;
    for (double c : cost[k]) reachable = reachable || c < kInf;
    if (!reachable) throw UnreachableLayerError(k);
  }
  int best = -1;
  for (int j = 0; j < static_cast<int>(cost.back().size()); ++j) {
    if (best < 0 || cost.back()[j] < cost.back()[best]) best = j;
  }
  ViewpointSkeleton sk;
  sk.total_cost = cost.back()[best];
  std::vector<int> idx(layers);
  idx[layers - 1] = best;
  for (int k = layers - 1; k > 0; --k) idx[k - 1] = parent[k][idx[k]];
  for (int k = 0; k < layers; ++k) {
    sk.points.push_back(g.nodes[k][idx[k]]);
    sk.node_index.push_back(idx[k]);
    sk.times.push_back(g.times[k]);
    sk.targets.push_back(g.targets[k]);
  }
  return sk;
}

/// Same optimum (and tie-breaking) as solve_viewpoint_sequence(build_graph(...)),
/// but the segment clearance test, the expensive part, only runs on the
/// cheapest incoming edge of each node; when it fails the next cheapest is
/// tried.
inline ViewpointSkeleton plan_viewpoint_sequence(const EsdfGrid& esdf, const std::vector<ViewpointLayer>& layers,
                                                 const Vec3& start, const Vec3& start_target, double start_time,
                                                 const PreplanParams& params) {
  params.validate();
  if (layers.empty()) throw ConfigError("plan_viewpoint_sequence: no layers");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const ViewpointLattice lattice(esdf.grid(), params.grid_stride);
  const int samples = params.edge_samples;
  const double d_max2 = params.d_max * params.d_max;
  const int n_layers = static_cast<int>(layers.size()) + 1;

  auto weight = [&](const Vec3& u, const Vec3& w, const Vec3& target_b, double visibility) {
    EdgeCost terms;
    terms.interval = (u - w).squaredNorm();
    terms.visibility = visibility;
    const double dev = (target_b - w).norm() - params.d_desired;
    terms.tracking = dev * dev;
    return terms.total(params);
  };

  std::vector<std::vector<double>> cost(n_layers);
  std::vector<std::vector<int>> parent(n_layers);
  cost[0] = {0.0};
  parent[0] = {-1};

  // layer 1: single source, every edge has to be checked anyway
  {
    const auto& L = layers[0];
    const double clearance = std::min(params.r_safe, esdf.phi_at(start));
    cost[1].assign(L.candidates.size(), kInf);
    parent[1].assign(L.candidates.size(), -1);
    for (int j = 0; j < static_cast<int>(L.candidates.size()); ++j) {
      const Vec3& w = L.candidates[j];
      if ((w - start).squaredNorm() > d_max2) continue;
      if (min_phi_along(esdf, start, w, clearance) < clearance) continue;
      const double cv = start_edge_visibility_cost(esdf, start, w, start_target, L.target, samples);
      if (!std::isfinite(cv)) continue;
      cost[1][j] = 0.0 + weight(start, w, L.target, cv);
      parent[1][j] = 0;
    }
  }

  std::vector<std::pair<double, int>> heap;
  auto later = [](const std::pair<double, int>& a, const std::pair<double, int>& b) { return a > b; };
  for (int k = 2; k < n_layers; ++k) {
    bool reachable = false;
    for (double c : cost[k - 1]) reachable = reachable || c < kInf;
    if (!reachable) throw UnreachableLayerError(k - 1);
    const auto& A = layers[k - 2];
    const auto& B = layers[k - 1];
    detail::PsiMemo memo_a(esdf, lattice, samples, A.target, A, B);
    detail::PsiMemo memo_b(esdf, lattice, samples, B.target, A, B);
    cost[k].assign(B.candidates.size(), kInf);
    parent[k].assign(B.candidates.size(), -1);
    for (int j = 0; j < static_cast<int>(B.candidates.size()); ++j) {
      const Vec3& w = B.candidates[j];
      heap.clear();
      for (int i = 0; i < static_cast<int>(A.candidates.size()); ++i) {
        if (!(cost[k - 1][i] < kInf)) continue;
        const Vec3& u = A.candidates[i];
        const double len2 = (w - u).squaredNorm();
        if (len2 > d_max2 || len2 == 0.0) continue;
        double ia = 0.0, ib = 0.0;
        if (!detail::lattice_edge_integrals(memo_a, memo_b, A.lattice_index[i], B.lattice_index[j],
                                            std::sqrt(len2), samples, ia, ib)) {
          continue;
        }
        heap.emplace_back(cost[k - 1][i] + weight(u, w, B.target, 1.0 / std::sqrt(ia * ib)), i);
      }
      std::make_heap(heap.begin(), heap.end(), later);
      while (!heap.empty()) {
        std::pop_heap(heap.begin(), heap.end(), later);
        const auto [c, i] = heap.back();
        heap.pop_back();
        if (min_phi_along(esdf, A.candidates[i], w, params.r_safe) < params.r_safe) continue;
        cost[k][j] = c;
        parent[k][j] = i;
        break;
      }
    }
  }
  {
    bool reachable = false;
    for (double c : cost.back()) reachable = reachable || c < kInf;
    if (!reachable) throw UnreachableLayerError(n_layers - 1);
  }

  int best = -1;
  for (int j = 0; j < static_cast<int>(cost.back().size()); ++j) {
    if (best < 0 || cost.back()[j] < cost.back()[best]) best = j;
  }
  ViewpointSkeleton sk;
  sk.total_cost = cost.back()[best];
  std::vector<int> idx(n_layers);
  idx[n_layers - 1] = best;
  for (int k = n_layers - 1; k > 0; --k) idx[k - 1] = parent[k][idx[k]];
  sk.points.push_back(start);
  sk.node_index.push_back(0);
  sk.times.push_back(start_time);
  sk.targets.push_back(start_target);
  for (int k = 1; k < n_layers; ++k) {
    sk.points.push_back(layers[k - 1].candidates[idx[k]]);
    sk.node_index.push_back(idx[k]);
    sk.times.push_back(layers[k - 1].t);
    sk.targets.push_back(layers[k - 1].target);
  }
  return sk;
}

/// Half-space n . x <= offset.
struct HalfSpace {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;

  double slack(const Vec3& x) const { return offset - normal.dot(x); }
};

/// Oriented box around a skeleton segment: two end faces and four side faces.
struct Corridor {
  std::array<HalfSpace, 6> half_spaces;
  Vec3 from = Vec3::Zero();
  Vec3 to = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  Vec3 side_u = Vec3::UnitY();
  Vec3 side_v = Vec3::UnitZ();
  double half_width = 0.0;

  bool contains(const Vec3& x, double tol = 0.0) const {
    for (const auto& h : half_spaces)
      if (h.slack(x) < -tol) return false;
    return true;
  }

  /// Box corners: the `from` face first, counter-clockwise in (u, v).
  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> c;
    const double r = half_width;
    const Vec3 offs[4] = {-r * side_u - r * side_v, r * side_u - r * side_v, r * side_u + r * side_v,
                          -r * side_u + r * side_v};
    const bool degenerate = (to - from).norm() < 1e-9;
    const Vec3 a = degenerate ? from - r * axis : from;
    const Vec3 b = degenerate ? from + r * axis : to;
    for (int i = 0; i < 4; ++i) {
      c[i] = a + offs[i];
      c[4 + i] = b + offs[i];
    }
    return c;
  }
};

/// Orthonormal completion using the world axis least aligned with `axis`.
inline std::pair<Vec3, Vec3> complete_frame(const Vec3& axis) {
  int least = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(axis[k]) < std::abs(axis[least])) least = k;
  Vec3 w = Vec3::Zero();
  w[least] = 1.0;
  const Vec3 u = (w - w.dot(axis) * axis).normalized();
  return {u, axis.cross(u)};
}

inline Corridor make_corridor(const Vec3& a, const Vec3& b, double r_c) {
  Corridor c;
  c.from = a;
  c.to = b;
  c.half_width = r_c;
  const double len = (b - a).norm();
  if (len < 1e-9) {
    c.axis = Vec3::UnitX();
    c.side_u = Vec3::UnitY();
    c.side_v = Vec3::UnitZ();
    const Vec3 axes[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    for (int k = 0; k < 3; ++k) {
      c.half_spaces[2 * k] = {axes[k], axes[k].dot(a) + r_c};
      c.half_spaces[2 * k + 1] = {-axes[k], -axes[k].dot(a) + r_c};
    }
    return c;
  }
  c.axis = (b - a) / len;
  std::tie(c.side_u, c.side_v) = complete_frame(c.axis);
  c.half_spaces[0] = {-c.axis, -c.axis.dot(a)};
  c.half_spaces[1] = {c.axis, c.axis.dot(b)};
  c.half_spaces[2] = {c.side_u, c.side_u.dot(a) + r_c};
  c.half_spaces[3] = {-c.side_u, -c.side_u.dot(a) + r_c};
  c.half_spaces[4] = {c.side_v, c.side_v.dot(a) + r_c};
  c.half_spaces[5] = {-c.side_v, -c.side_v.dot(a) + r_c};
  return c;
}

inline std::vector<Corridor> corridors_from_skeleton(const ViewpointSkeleton& sk, double r_c) {
  std::vector<Corridor> out;
  for (std::size_t k = 1; k < sk.points.size(); ++k) {
    out.push_back(make_corridor(sk.points[k - 1], sk.points[k], r_c));
  }
  return out;
}

struct Preplan {
  std::vector<ViewpointLayer> layers;
  ViewpointSkeleton skeleton;
  std::vector<Corridor> corridors;
};

/// Full preplanning pass for targets predicted at `times[1..N]`; `times[0]` and
/// `targets[0]` describe the plan start. An empty layer is retried once with
/// d_upper enlarged by 50%.
inline Preplan preplan(const EsdfGrid& esdf, const Vec3& start, const std::vector<double>& times,
                       const std::vector<Vec3>& targets, const PreplanParams& params) {
  params.validate();
  if (times.size() != targets.size() || static_cast<int>(times.size()) != params.n_layers + 1) {
    throw ConfigError("preplan: expected n_layers + 1 target samples");
  }
  Preplan out;
  for (int k = 1; k <= params.n_layers; ++k) {
    ViewpointLayer layer = candidate_viewpoints(esdf, targets[k], params);
    if (layer.candidates.empty()) {
      layer = candidate_viewpoints(esdf, targets[k], params, 1.5 * params.d_upper);
    }
    if (layer.candidates.empty()) throw UnreachableLayerError(k);
    layer.k = k;
    layer.t = times[k];
    out.layers.push_back(std::move(layer));
  }
  out.skeleton = plan_viewpoint_sequence(esdf, out.layers, start, targets[0], times[0], params);
  out.corridors = corridors_from_skeleton(out.skeleton, params.r_corridor);
  return out;
}

}  // namespace chaser
