#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rowlab {

/// Planar pose in the world frame. Heading is measured from +x, counter-clockwise.
struct Pose2 {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle, kTwoPi);
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  if (wrapped > std::numbers::pi) wrapped -= kTwoPi;
  return wrapped;
}

inline Eigen::Vector2d rotate(const Eigen::Vector2d& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

/// World point expressed in the frame of `pose`.
inline Eigen::Vector2d to_local(const Pose2& pose, const Eigen::Vector2d& world_point) {
  return rotate(world_point - pose.position, -pose.heading);
}

/// SplitMix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(a) ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

}  // namespace rowlab
