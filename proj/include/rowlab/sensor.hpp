#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rowlab/geometry.hpp"
#include "rowlab/world.hpp"

namespace rowlab::sensor {

/// Spinning multi-channel LiDAR. Defaults select the middle four rings of a 16-ring,
/// 2-degree-spaced unit at 0.2 degree azimuth resolution: 4 x 1800 = 7200 rays per sweep.
struct LidarConfig {
  std::vector<double> channels_deg{-3.0, -1.0, 1.0, 3.0};
  int azimuth_count = 1800;
  double max_range = 10.0;     // m
  double mount_height = 0.4;   // m above ground
  double noise_sigma = 0.01;   // m, Gaussian range noise truncated at 3 sigma

  int ray_count() const { return static_cast<int>(channels_deg.size()) * azimuth_count; }
  void validate() const;
};

/// Hit points of one sweep in the sensor frame (x forward, y left, z up, origin at the
/// sensor). Misses are omitted; `ray_index[i]` is channel * azimuth_count + azimuth of
/// point i, and points are ordered by it.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<int> ray_index;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Smallest t > 0 with origin + t * direction on the lateral surface of the plant's
/// cylinder (0 <= z <= height) and t <= max_range. Cap discs are ignored.
std::optional<double> ray_cylinder(const Eigen::Vector3d& origin,
                                   const Eigen::Vector3d& direction, const world::Plant& plant,
                                   double max_range);

/// Unit direction of ray (channel, azimuth) in the sensor frame.
Eigen::Vector3d ray_direction(const LidarConfig& cfg, int channel, int azimuth);

PointCloud sweep(const Pose2& pose, const world::PlantationMap& map, const LidarConfig& cfg,
                 std::uint64_t noise_seed);

/// "x y z" per line.
std::string write_cloud(const PointCloud& cloud);
PointCloud read_cloud(std::string_view text);

}  // namespace rowlab::sensor
