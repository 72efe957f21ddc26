#include "rowlab/sensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

#include "rowlab/text_io.hpp"

namespace rowlab::sensor {

void LidarConfig::validate() const {
  if (channels_deg.empty()) throw std::invalid_argument("lidar needs at least one channel");
  for (std::size_t i = 1; i < channels_deg.size(); ++i) {
    if (!(channels_deg[i] > channels_deg[i - 1])) {
      throw std::invalid_argument("lidar channel elevations must be strictly increasing");
    }
  }
  for (double e : channels_deg) {
    if (!(std::abs(e) < 90.0)) throw std::invalid_argument("lidar elevation must be in (-90, 90)");
  }
  if (azimuth_count <= 0) throw std::invalid_argument("lidar azimuth_count must be > 0");
  if (!(max_range > 0.0)) throw std::invalid_argument("lidar max_range must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("lidar noise_sigma must be >= 0");
  if (!std::isfinite(mount_height)) throw std::invalid_argument("lidar mount_height must be finite");
}

std::optional<double> ray_cylinder(const Eigen::Vector3d& origin,
                                   const Eigen::Vector3d& direction, const world::Plant& plant,
                                   double max_range) {
  const double ox = origin.x() - plant.center.x();
  const double oy = origin.y() - plant.center.y();
  const double dx = direction.x();
  const double dy = direction.y();
  const double a = dx * dx + dy * dy;
  if (a == 0.0) return std::nullopt;
  const double half_b = ox * dx + oy * dy;
  const double c = ox * ox + oy * oy - plant.radius * plant.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return std::nullopt;
  // Stable root pair of a t^2 + 2 half_b t + c = 0.
  const double q = -(half_b + std::copysign(std::sqrt(disc), half_b));
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : t0;
  if (t0 > t1) std::swap(t0, t1);
  for (double t : {t0, t1}) {
    if (!(t > 0.0) || t > max_range) continue;
    const double z = origin.z() + t * direction.z();
    if (z >= 0.0 && z <= plant.height) return t;
  }
  return std::nullopt;
}

Eigen::Vector3d ray_direction(const LidarConfig& cfg, int channel, int azimuth) {
  const double elevation = cfg.channels_deg[static_cast<std::size_t>(channel)] *
                           std::numbers::pi / 180.0;
  const double angle = 2.0 * std::numbers::pi * azimuth / cfg.azimuth_count;
  const double ce = std::cos(elevation);
  return {ce * std::cos(angle), ce * std::sin(angle), std::sin(elevation)};
}

PointCloud sweep(const Pose2& pose, const world::PlantationMap& map, const LidarConfig& cfg,
                 std::uint64_t noise_seed) {
  const int channels = static_cast<int>(cfg.channels_deg.size());
  const int azimuths = cfg.azimuth_count;
  const double step = 2.0 * std::numbers::pi / azimuths;
  const Eigen::Vector3d origin(0.0, 0.0, cfg.mount_height);

  std::vector<double> elevation_cos(static_cast<std::size_t>(channels));
  std::vector<double> elevation_sin(static_cast<std::size_t>(channels));
  for (int ch = 0; ch < channels; ++ch) {
    const double e = cfg.channels_deg[static_cast<std::size_t>(ch)] * std::numbers::pi / 180.0;
    elevation_cos[static_cast<std::size_t>(ch)] = std::cos(e);
    elevation_sin[static_cast<std::size_t>(ch)] = std::sin(e);
  }

  std::vector<double> azimuth_cos(static_cast<std::size_t>(azimuths));
  std::vector<double> azimuth_sin(static_cast<std::size_t>(azimuths));
  for (int az = 0; az < azimuths; ++az) {
    const double angle = step * az;
    azimuth_cos[static_cast<std::size_t>(az)] = std::cos(angle);
    azimuth_sin[static_cast<std::size_t>(az)] = std::sin(angle);
  }

  constexpr double kNoHit = std::numeric_limits<double>::infinity();
  std::vector<double> depth(static_cast<std::size_t>(channels * azimuths), kNoHit);

  // The horizontal footprint of every channel at one azimuth is the same ray, so the circle
  // is intersected once (in horizontal distance s) and each channel only rescales by
  // t = s / cos(elevation) and checks the hit height.
  auto test_azimuth = [&](int az, const world::Plant& local_plant) {
    const double ca = azimuth_cos[static_cast<std::size_t>(az)];
    const double sa = azimuth_sin[static_cast<std::size_t>(az)];
    const double half_b = -(ca * local_plant.center.x() + sa * local_plant.center.y());
    const double c = local_plant.center.squaredNorm() - local_plant.radius * local_plant.radius;
    const double disc = half_b * half_b - c;
    if (disc < 0.0) return;
    const double q = -(half_b + std::copysign(std::sqrt(disc), half_b));
    double s0 = q;
    double s1 = q != 0.0 ? c / q : s0;
    if (s0 > s1) std::swap(s0, s1);
    if (!(s1 > 0.0)) return;
    for (int ch = 0; ch < channels; ++ch) {
      const double ce = elevation_cos[static_cast<std::size_t>(ch)];
      const double se = elevation_sin[static_cast<std::size_t>(ch)];
      for (double s : {s0, s1}) {
        const double t = s / ce;
        if (!(t > 0.0) || t > cfg.max_range) continue;
        const double z = origin.z() + t * se;
        if (z >= 0.0 && z <= local_plant.height) {
          double& best = depth[static_cast<std::size_t>(ch * azimuths + az)];
          if (t < best) best = t;
          break;
        }
      }
    }
  };

  // Each plant only covers the azimuth wedge it subtends; test just those rays.
  map.for_each_near(pose.position, cfg.max_range + map.max_radius(), [&](const world::Plant& p) {
    world::Plant local = p;
    local.center = to_local(pose, p.center);
    const double dist = local.center.norm();
    if (dist - local.radius > cfg.max_range) return;
    if (dist <= local.radius) {
      for (int az = 0; az < azimuths; ++az) test_azimuth(az, local);
      return;
    }
    const double bearing = std::atan2(local.center.y(), local.center.x());
    const double half = std::asin(local.radius / dist);
    const auto first = static_cast<long>(std::floor((bearing - half) / step)) - 1;
    const auto last = static_cast<long>(std::ceil((bearing + half) / step)) + 1;
    if (last - first + 1 >= azimuths) {
      for (int az = 0; az < azimuths; ++az) test_azimuth(az, local);
      return;
    }
    for (long k = first; k <= last; ++k) {
      const long az = ((k % azimuths) + azimuths) % azimuths;
      test_azimuth(static_cast<int>(az), local);
    }
  });

  PointCloud cloud;
  cloud.points.reserve(depth.size());
  cloud.ray_index.reserve(depth.size());
  std::mt19937_64 rng(noise_seed);
  boost::random::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  for (int ch = 0; ch < channels; ++ch) {
    for (int az = 0; az < azimuths; ++az) {
      const int ray = ch * azimuths + az;
      const double t = depth[static_cast<std::size_t>(ray)];
      if (t == kNoHit) continue;
      double range = t;
      if (cfg.noise_sigma > 0.0) {
        // Truncated at 3 sigma by redrawing, so every return stays near a real surface.
        double e = noise(rng);
        while (std::abs(e) > 3.0 * cfg.noise_sigma) e = noise(rng);
        range += e;
      }
      if (!(range > 0.0) || range > cfg.max_range) continue;
      const double ce = elevation_cos[static_cast<std::size_t>(ch)];
      const Eigen::Vector3d dir(ce * azimuth_cos[static_cast<std::size_t>(az)],
                                ce * azimuth_sin[static_cast<std::size_t>(az)],
                                elevation_sin[static_cast<std::size_t>(ch)]);
      cloud.points.push_back(range * dir);
      cloud.ray_index.push_back(ray);
    }
  }
  return cloud;
}

std::string write_cloud(const PointCloud& cloud) {
  std::ostringstream out;
  for (const auto& p : cloud.points) {
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
        << '\n';
  }
  return out.str();
}

PointCloud read_cloud(std::string_view text) {
  TokenReader in(text);
  PointCloud cloud;
  while (!in.at_end()) {
    Eigen::Vector3d p;
    p.x() = in.next_double("x");
    p.y() = in.next_double("y");
    const std::size_t z_at = in.offset();
    p.z() = in.next_double("z");
    if (!in.at_line_end()) throw ParseError("expected 3 values per line", in.offset());
    if (!p.allFinite()) throw ParseError("non-finite coordinate", z_at);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace rowlab::sensor
