#pragma once

#include "chaser/common.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace chaser {

/// Dense boolean occupancy grid. Voxel (i,j,k) spans
/// [origin + (i,j,k)*res, origin + (i+1,j+1,k+1)*res) and its center sits half a
/// voxel inside that corner.
class VoxelGrid {
 public:
  VoxelGrid() = default;

  VoxelGrid(const Vec3& origin, double resolution, const Index3& dims)
      : origin_(origin), resolution_(resolution), dims_(dims) {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
      throw ConfigError("voxel grid: resolution must be positive");
    }
    if (dims.x < 1 || dims.y < 1 || dims.z < 1) {
      throw ConfigError("voxel grid: dims must be >= 1");
    }
    occupancy_.assign(static_cast<std::size_t>(dims.x) * dims.y * dims.z, 0);
  }

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Index3& dims() const { return dims_; }
  std::size_t size() const { return occupancy_.size(); }

  Vec3 min_corner() const { return origin_; }
  Vec3 max_corner() const {
    return origin_ + resolution_ * Vec3(dims_.x, dims_.y, dims_.z);
  }

  bool contains(const Index3& i) const {
    return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < dims_.x && i.y < dims_.y && i.z < dims_.z;
  }

  bool contains(const Vec3& p) const {
    const Vec3 lo = min_corner();
    const Vec3 hi = max_corner();
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }

  std::size_t linear(const Index3& i) const {
    return (static_cast<std::size_t>(i.z) * dims_.y + i.y) * dims_.x + i.x;
  }

  Index3 unlinear(std::size_t n) const {
    Index3 i;
    i.x = static_cast<int>(n % dims_.x);
    n /= dims_.x;
    i.y = static_cast<int>(n % dims_.y);
    i.z = static_cast<int>(n / dims_.y);
    return i;
  }

  Vec3 index_to_world(const Index3& i) const {
    return origin_ + resolution_ * Vec3(i.x + 0.5, i.y + 0.5, i.z + 0.5);
  }

  /// Containing voxel; points on the upper boundary face map to the last voxel.
  Index3 world_to_index(const Vec3& p) const {
    const Vec3 f = (p - origin_) / resolution_;
    auto axis = [](double v, int n) {
      const int i = static_cast<int>(std::floor(v));
      return i >= n && v <= n + 1e-9 ? n - 1 : i;
    };
    return {axis(f.x(), dims_.x), axis(f.y(), dims_.y), axis(f.z(), dims_.z)};
  }

  bool occupied(const Index3& i) const { return occupancy_[linear(i)] != 0; }
  bool occupied(std::size_t n) const { return occupancy_[n] != 0; }

  void set_occupied(const Index3& i, bool occ = true) {
    if (!contains(i)) throw OutOfBoundsError("voxel grid: index out of range");
    occupancy_[linear(i)] = occ ? 1 : 0;
  }

  /// Marks every voxel whose center lies in the closed box [lo, hi].
  void fill_box(const Vec3& lo, const Vec3& hi, bool occ = true) {
    for (int z = 0; z < dims_.z; ++z)
      for (int y = 0; y < dims_.y; ++y)
        for (int x = 0; x < dims_.x; ++x) {
          const Vec3 c = index_to_world({x, y, z});
          if ((c.array() >= lo.array()).all() && (c.array() <= hi.array()).all()) {
            occupancy_[linear({x, y, z})] = occ ? 1 : 0;
          }
        }
  }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (auto v : occupancy_) n += v;
    return n;
  }

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.origin_ == b.origin_ && a.resolution_ == b.resolution_ && a.dims_ == b.dims_ &&
           a.occupancy_ == b.occupancy_;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 1.0;
  Index3 dims_{1, 1, 1};
  std::vector<std::uint8_t> occupancy_ = std::vector<std::uint8_t>(1, 0);
};

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

/// Parses the plain-text `vxmap` format:
///
///     vxmap <dimx> <dimy> <dimz> <resolution> <ox> <oy> <oz>
///     occ <ix> <iy> <iz> [probability]
///
/// `#` starts a comment. A voxel listed without a probability is occupied; one
/// listed with a probability is occupied iff probability >= occupancy_threshold.
inline VoxelGrid load_map(std::string_view text, double occupancy_threshold = 0.5) {
  VoxelGrid grid;
  bool have_header = false;
  int line_no = 0;
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError("map line " + std::to_string(line_no) + ": " + what);
  };
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;

    if (!have_header) {
      if (tok[0] != "vxmap") fail("expected 'vxmap' header");
      if (tok.size() != 8) fail("header needs 7 fields: dimx dimy dimz resolution ox oy oz");
      static constexpr const char* kDimNames[] = {"dimx", "dimy", "dimz"};
      Index3 dims;
      int* d[] = {&dims.x, &dims.y, &dims.z};
      for (int k = 0; k < 3; ++k) {
        if (!detail::parse_number(tok[1 + k], *d[k]) || *d[k] < 1) {
          fail(std::string("invalid ") + kDimNames[k]);
        }
      }
      double res = 0.0;
      if (!detail::parse_number(tok[4], res) || !std::isfinite(res)) fail("invalid resolution");
      if (!(res > 0.0)) fail("resolution must be positive");
      Vec3 origin;
      static constexpr const char* kOriginNames[] = {"ox", "oy", "oz"};
      for (int k = 0; k < 3; ++k) {
        double v = 0.0;
        if (!detail::parse_number(tok[5 + k], v) || !std::isfinite(v)) {
          fail(std::string("invalid ") + kOriginNames[k]);
        }
        origin[k] = v;
      }
      grid = VoxelGrid(origin, res, dims);
      have_header = true;
      continue;
    }

    if (tok[0] != "occ") fail("unknown record '" + std::string(tok[0]) + "'");
    if (tok.size() != 4 && tok.size() != 5) fail("occ needs ix iy iz [probability]");
    Index3 idx;
    int* c[] = {&idx.x, &idx.y, &idx.z};
    static constexpr const char* kIdxNames[] = {"ix", "iy", "iz"};
    for (int k = 0; k < 3; ++k) {
      if (!detail::parse_number(tok[1 + k], *c[k])) fail(std::string("invalid ") + kIdxNames[k]);
    }
    if (!grid.contains(idx)) fail("index out of range");
    double prob = 1.0;
    if (tok.size() == 5 && (!detail::parse_number(tok[4], prob) || prob < 0.0 || prob > 1.0)) {
      fail("invalid probability");
    }
    if (prob >= occupancy_threshold) grid.set_occupied(idx);
  }
  if (!have_header) throw ParseError("map line 1: missing 'vxmap' header");
  return grid;
}

/// Canonical text form; load_map(save_map(g)) == g and save_map is a fixed
/// point for canonical input.
inline std::string save_map(const VoxelGrid& grid) {
  std::ostringstream os;
  const auto& d = grid.dims();
  os << "vxmap " << d.x << ' ' << d.y << ' ' << d.z << ' '
     << detail::format_double(grid.resolution()) << ' ' << detail::format_double(grid.origin().x())
     << ' ' << detail::format_double(grid.origin().y()) << ' '
     << detail::format_double(grid.origin().z()) << '\n';
  for (int x = 0; x < d.x; ++x)
    for (int y = 0; y < d.y; ++y)
      for (int z = 0; z < d.z; ++z)
        if (grid.occupied(Index3{x, y, z})) os << "occ " << x << ' ' << y << ' ' << z << '\n';
  return os.str();
}

}  // namespace chaser
