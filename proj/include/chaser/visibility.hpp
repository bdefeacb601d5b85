#pragma once

#include "chaser/esdf.hpp"
#include "chaser/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace chaser {

/// Line of sight test: no voxel crossed by [x_c, x_p] is occupied.
inline bool is_visible(const VoxelGrid& grid, const Vec3& x_c, const Vec3& x_p) {
  return for_each_segment_cell(grid, x_c, x_p,
                               [&](const SegmentCell& c) { return !grid.occupied(c.index); });
}

/// Minimum of phi over the segment, sampled at both endpoints and at the
/// midpoint of the sub-segment inside each crossed voxel. A crossed occupied
/// voxel also contributes its own (negative) value, so a clipped corner where
/// the interpolant is still positive cannot hide the blockage. Stops as soon
/// as a sample falls below `stop_below`.
inline double min_phi_along(const EsdfGrid& esdf, const Vec3& a, const Vec3& b,
                            double stop_below = -std::numeric_limits<double>::infinity()) {
  double best = std::min(esdf.phi_at(a), esdf.phi_at(b));
  if (best < stop_below) return best;
  const Vec3 d = b - a;
  for_each_segment_cell(esdf.grid(), a, b, [&](const SegmentCell& c) {
    double v = esdf.phi_at(a + 0.5 * (c.s_enter + c.s_exit) * d);
    if (esdf.grid().occupied(c.index)) v = std::min(v, esdf.voxel(c.index));
    best = std::min(best, v);
    return best >= stop_below;
  });
  return best;
}

/// Visibility score psi(x_c; x_p): the smallest clearance along the line of
/// sight. Non-positive whenever the line of sight is blocked.
inline double visibility_score(const EsdfGrid& esdf, const Vec3& x_c, const Vec3& x_p) {
  return min_phi_along(esdf, x_c, x_p);
}

struct AlignedBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

struct FieldSample {
  Vec3 position;
  double psi = 0.0;
};

/// Samples psi(.; x_p) on a regular lattice covering `region` (inclusive).
inline std::vector<FieldSample> visibility_field(const EsdfGrid& esdf, const Vec3& x_p,
                                                 const AlignedBox& region, double stride) {
  if (!(stride > 0.0)) throw ConfigError("visibility field: stride must be positive");
  if ((region.hi.array() < region.lo.array()).any()) {
    throw ConfigError("visibility field: empty region");
  }
  const auto& grid = esdf.grid();
  if (!grid.contains(region.lo) || !grid.contains(region.hi)) {
    throw OutOfBoundsError("visibility field: region outside map bounds");
  }
  if (!grid.contains(x_p)) throw OutOfBoundsError("visibility field: target outside map bounds");
  int n[3];
  for (int k = 0; k < 3; ++k) {
    n[k] = static_cast<int>(std::floor((region.hi[k] - region.lo[k]) / stride + 1e-9)) + 1;
  }
  std::vector<FieldSample> out;
  out.reserve(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
  for (int iz = 0; iz < n[2]; ++iz)
    for (int iy = 0; iy < n[1]; ++iy)
      for (int ix = 0; ix < n[0]; ++ix) {
        const Vec3 p = region.lo + stride * Vec3(ix, iy, iz);
        out.push_back({p, visibility_score(esdf, p, x_p)});
      }
  return out;
}

inline void write_field_csv(std::ostream& os, const std::vector<FieldSample>& field) {
  os << "x,y,z,psi\n";
  const auto old = os.precision(10);
  for (const auto& s : field) {
    os << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << ',' << s.psi << '\n';
  }
  os.precision(old);
}

}  // namespace chaser
