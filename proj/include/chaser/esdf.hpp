#pragma once

#include "chaser/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace chaser {

enum class BoundsPolicy { kClamp, kStrict };

/// Euclidean signed distance field over a VoxelGrid: positive distance to the
/// nearest occupied voxel center in free space (saturated at `cap`), negative
/// distance to the nearest free voxel center inside obstacles.
class EsdfGrid {
 public:
  EsdfGrid() = default;
  EsdfGrid(VoxelGrid grid, std::vector<double> phi, double cap)
      : grid_(std::move(grid)), phi_(std::move(phi)), cap_(cap) {}

  const VoxelGrid& grid() const { return grid_; }
  double cap() const { return cap_; }
  double resolution() const { return grid_.resolution(); }
  const std::vector<double>& values() const { return phi_; }

  double voxel(const Index3& i) const { return phi_[grid_.linear(i)]; }
  double voxel(std::size_t n) const { return phi_[n]; }

  /// Trilinear interpolation between the 8 surrounding voxel centers.
  double phi_at(const Vec3& p, BoundsPolicy policy = BoundsPolicy::kClamp) const {
    Sample s = locate(p, policy);
    const auto& d = grid_.dims();
    auto at = [&](int dx, int dy, int dz) {
      return phi_[(static_cast<std::size_t>(s.i[2] + dz) * d.y + (s.i[1] + dy)) * d.x + s.i[0] + dx];
    };
    const double c00 = at(0, 0, 0) * (1 - s.w[0]) + at(s.step[0], 0, 0) * s.w[0];
    const double c10 = at(0, s.step[1], 0) * (1 - s.w[0]) + at(s.step[0], s.step[1], 0) * s.w[0];
    const double c01 = at(0, 0, s.step[2]) * (1 - s.w[0]) + at(s.step[0], 0, s.step[2]) * s.w[0];
    const double c11 =
        at(0, s.step[1], s.step[2]) * (1 - s.w[0]) + at(s.step[0], s.step[1], s.step[2]) * s.w[0];
    const double c0 = c00 * (1 - s.w[1]) + c10 * s.w[1];
    const double c1 = c01 * (1 - s.w[1]) + c11 * s.w[1];
    return c0 * (1 - s.w[2]) + c1 * s.w[2];
  }

  /// Exact gradient of the trilinear interpolant (zero along clamped axes).
  Vec3 gradient_at(const Vec3& p, BoundsPolicy policy = BoundsPolicy::kClamp) const {
    Sample s = locate(p, policy);
    const auto& d = grid_.dims();
    double v[2][2][2];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          v[a][b][c] = phi_[(static_cast<std::size_t>(s.i[2] + c * s.step[2]) * d.y +
                             (s.i[1] + b * s.step[1])) *
                                d.x +
                            s.i[0] + a * s.step[0]];
        }
    const double wx = s.w[0], wy = s.w[1], wz = s.w[2];
    Vec3 g = Vec3::Zero();
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double w = (b ? wy : 1 - wy) * (c ? wz : 1 - wz);
        g.x() += w * (v[1][b][c] - v[0][b][c]);
      }
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c) {
        const double w = (a ? wx : 1 - wx) * (c ? wz : 1 - wz);
        g.y() += w * (v[a][1][c] - v[a][0][c]);
      }
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const double w = (a ? wx : 1 - wx) * (b ? wy : 1 - wy);
        g.z() += w * (v[a][b][1] - v[a][b][0]);
      }
    for (int k = 0; k < 3; ++k) g[k] = s.active[k] ? g[k] / grid_.resolution() : 0.0;
    return g;
  }

 private:
  struct Sample {
    int i[3];
    int step[3];
    double w[3];
    bool active[3];
  };

  Sample locate(const Vec3& p, BoundsPolicy policy) const {
    if (policy == BoundsPolicy::kStrict && !grid_.contains(p)) {
      throw OutOfBoundsError("esdf query outside map bounds");
    }
    const int n[3] = {grid_.dims().x, grid_.dims().y, grid_.dims().z};
    Sample s{};
    for (int k = 0; k < 3; ++k) {
      const double f = (p[k] - grid_.origin()[k]) / grid_.resolution() - 0.5;
      if (n[k] == 1) {
        s.i[k] = 0;
        s.step[k] = 0;
        s.w[k] = 0.0;
        s.active[k] = false;
        continue;
      }
      const double fc = std::clamp(f, 0.0, static_cast<double>(n[k] - 1));
      s.active[k] = f > 0.0 && f < n[k] - 1;
      int i0 = static_cast<int>(std::floor(fc));
      i0 = std::min(i0, n[k] - 2);
      s.i[k] = i0;
      s.step[k] = 1;
      s.w[k] = fc - i0;
    }
    return s;
  }

  VoxelGrid grid_;
  std::vector<double> phi_ = std::vector<double>(1, 0.0);
  double cap_ = 10.0;
};

namespace detail {

/// 1-D squared distance transform (lower envelope of parabolas) on a strided
/// line. `f` holds squared distances in voxel units, +inf where unknown.
inline void edt_1d(double* f, int n, std::ptrdiff_t stride, std::vector<double>& d,
                   std::vector<int>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  d.resize(n);
  v.resize(n);
  z.resize(n + 1);
  auto meet = [&](int q, int p) {
    return ((f[q * stride] + static_cast<double>(q) * q) -
            (f[p * stride] + static_cast<double>(p) * p)) /
           (2.0 * (q - p));
  };
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q * stride] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) return;  // whole line unknown
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j] * stride];
  }
  for (int q = 0; q < n; ++q) f[q * stride] = d[q];
}

/// Squared distance (voxel units) from every voxel to the nearest voxel where
/// `seed(n)` holds. Exact separable transform.
template <typename Seed>
std::vector<double> squared_edt(const VoxelGrid& grid, Seed seed) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto& dims = grid.dims();
  std::vector<double> f(grid.size());
  for (std::size_t n = 0; n < f.size(); ++n) f[n] = seed(n) ? 0.0 : kInf;
  std::vector<double> d;
  std::vector<int> v;
  std::vector<double> z;
  const std::ptrdiff_t sx = 1, sy = dims.x, sz = static_cast<std::ptrdiff_t>(dims.x) * dims.y;
  for (int zz = 0; zz < dims.z; ++zz)
    for (int yy = 0; yy < dims.y; ++yy) edt_1d(&f[zz * sz + yy * sy], dims.x, sx, d, v, z);
  for (int zz = 0; zz < dims.z; ++zz)
    for (int xx = 0; xx < dims.x; ++xx) edt_1d(&f[zz * sz + xx], dims.y, sy, d, v, z);
  for (int yy = 0; yy < dims.y; ++yy)
    for (int xx = 0; xx < dims.x; ++xx) edt_1d(&f[yy * sy + xx], dims.z, sz, d, v, z);
  return f;
}

}  // namespace detail

/// Signed distance field with center-to-center distances.
inline EsdfGrid compute_esdf(const VoxelGrid& grid, double cap = 10.0) {
  if (!(cap > 0.0)) throw ConfigError("esdf: cap must be positive");
  const auto to_obstacle = detail::squared_edt(grid, [&](std::size_t n) { return grid.occupied(n); });
  const auto to_free = detail::squared_edt(grid, [&](std::size_t n) { return !grid.occupied(n); });
  const double res = grid.resolution();
  std::vector<double> phi(grid.size());
  for (std::size_t n = 0; n < phi.size(); ++n) {
    if (grid.occupied(n)) {
      phi[n] = std::isinf(to_free[n]) ? -cap : -std::sqrt(to_free[n]) * res;
    } else {
      phi[n] = std::isinf(to_obstacle[n]) ? cap : std::min(cap, std::sqrt(to_obstacle[n]) * res);
    }
  }
  return EsdfGrid(grid, std::move(phi), cap);
}

}  // namespace chaser
