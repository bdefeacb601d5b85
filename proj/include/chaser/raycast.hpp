#pragma once

#include "chaser/voxel_grid.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

namespace chaser {

/// One voxel crossed by a segment a + s (b - a), s in [s_enter, s_exit].
struct SegmentCell {
  Index3 index;
  double s_enter = 0.0;
  double s_exit = 0.0;
};

/// Amanatides-Woo traversal of the voxels intersected by segment [a, b],
/// ordered from a to b. Consecutive cells differ by one step along one axis.
/// `visit(const SegmentCell&)` returns false to stop early; returns whether the
/// traversal completed.
template <typename Visit>
bool for_each_segment_cell(const VoxelGrid& grid, const Vec3& a, const Vec3& b, Visit&& visit) {
  if (!grid.contains(a) || !grid.contains(b)) {
    throw OutOfBoundsError("segment endpoint outside map bounds");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Index3 start = grid.world_to_index(a);
  const Index3 end = grid.world_to_index(b);
  const Vec3 d = b - a;
  const double res = grid.resolution();
  int cur[3] = {start.x, start.y, start.z};
  const int last[3] = {end.x, end.y, end.z};
  int step[3];
  int remaining[3];
  double t_max[3];
  double t_delta[3];
  for (int k = 0; k < 3; ++k) {
    remaining[k] = std::abs(last[k] - cur[k]);
    if (d[k] > 0.0) {
      step[k] = 1;
      t_max[k] = (grid.origin()[k] + (cur[k] + 1) * res - a[k]) / d[k];
      t_delta[k] = res / d[k];
    } else if (d[k] < 0.0) {
      step[k] = -1;
      t_max[k] = (grid.origin()[k] + cur[k] * res - a[k]) / d[k];
      t_delta[k] = -res / d[k];
    } else {
      step[k] = 0;
      t_max[k] = kInf;
      t_delta[k] = kInf;
    }
  }
  double s_enter = 0.0;
  while (remaining[0] + remaining[1] + remaining[2] > 0) {
    int axis = -1;
    for (int k = 0; k < 3; ++k) {
      if (remaining[k] > 0 && (axis < 0 || t_max[k] < t_max[axis])) axis = k;
    }
    const double s_exit = std::min(1.0, std::max(s_enter, t_max[axis]));
    if (!visit(SegmentCell{{cur[0], cur[1], cur[2]}, s_enter, s_exit})) return false;
    s_enter = s_exit;
    cur[axis] += step[axis];
    --remaining[axis];
    t_max[axis] += t_delta[axis];
  }
  return visit(SegmentCell{{cur[0], cur[1], cur[2]}, s_enter, 1.0});
}

inline std::vector<SegmentCell> traverse_segment_cells(const VoxelGrid& grid, const Vec3& a,
                                                       const Vec3& b) {
  std::vector<SegmentCell> out;
  for_each_segment_cell(grid, a, b, [&](const SegmentCell& c) {
    out.push_back(c);
    return true;
  });
  return out;
}

/// Voxels whose cells segment [a, b] intersects, ordered from a to b.
inline std::vector<Index3> traverse_segment(const VoxelGrid& grid, const Vec3& a, const Vec3& b) {
  std::vector<Index3> out;
  for_each_segment_cell(grid, a, b, [&](const SegmentCell& c) {
    out.push_back(c.index);
    return true;
  });
  return out;
}

}  // namespace chaser
