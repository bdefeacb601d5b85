#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace chaser {

using Vec3 = Eigen::Vector3d;

/// Integer voxel coordinate.
struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3&, const Index3&) = default;
};

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when a planning stage cannot produce a feasible result.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace chaser
