#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rowlab/geometry.hpp"

namespace rowlab::world {

enum class RowPattern { kStraight, kSinusoidal };

std::string_view to_string(RowPattern pattern);
RowPattern parse_row_pattern(std::string_view text);

/// Geometry of one two-row corridor. The centerline is y(x) = A sin(2 pi f x / Lref).
/// `row_length` is the arc length of the centerline, i.e. the distance driven to finish.
struct RowSpec {
  RowPattern pattern = RowPattern::kSinusoidal;
  double frequency = 1.8;
  double amplitude = 0.20;          // m
  double row_length = 10.0;         // m
  double row_spacing = 0.76;        // m, distance between the two rows
  double reference_length = 10.0;   // m
  std::uint64_t seed = 0;

  /// A straight row is a sinusoid of zero amplitude.
  double effective_amplitude() const {
    return pattern == RowPattern::kStraight ? 0.0 : amplitude;
  }
  void validate() const;

  static RowSpec straight(double length, std::uint64_t seed = 0);
  static RowSpec sinusoidal(double frequency, double amplitude, double length,
                            std::uint64_t seed = 0);
};

/// Vertical-cylinder plant model with truncated Gaussian jitter.
struct PlantModel {
  double radius = 0.04;
  double height = 1.5;
  double spacing = 0.2;                // arc length between neighbouring plants
  double lateral_jitter_sigma = 0.03;
  double radius_jitter_sigma = 0.01;
  double truncation = 3.0;             // jitter is truncated at this many sigmas
  bool jitter = true;

  double max_radius() const { return radius + (jitter ? truncation * radius_jitter_sigma : 0.0); }
  double max_lateral_jitter() const { return jitter ? truncation * lateral_jitter_sigma : 0.0; }
  void validate() const;
};

struct Plant {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.04;
  double height = 1.5;

  bool operator==(const Plant&) const = default;
};

double centerline_y(double x, const RowSpec& spec);

/// Arc-length parametrised view of the corridor centerline.
class Centerline {
 public:
  explicit Centerline(const RowSpec& spec);

  double y(double x) const;
  double slope(double x) const;
  Eigen::Vector2d point(double x) const { return {x, y(x)}; }
  /// Unit normal pointing to the left of the direction of travel (+x).
  Eigen::Vector2d normal(double x) const;

  /// x at which the centerline arc length reaches row_length.
  double x_end() const { return x_end_; }
  double arc_length(double x) const;
  double x_at_arc_length(double arc) const;
  /// x of the centerline point closest to `p`, restricted to [0, x_end].
  double closest_x(const Eigen::Vector2d& p) const;

 private:
  double arc_rate(double x) const;

  double amplitude_;
  double wavenumber_;
  double row_length_;
  double x_end_;
  double table_step_ = 0.0;
  std::vector<double> arc_table_;  // empty for straight rows
};

/// One generated corridor: the plants of both rows plus the centerline they follow.
/// Immutable after construction.
class PlantationMap {
 public:
  PlantationMap(RowSpec spec, std::vector<Plant> left, std::vector<Plant> right);

  const RowSpec& spec() const { return spec_; }
  const Centerline& centerline() const { return centerline_; }
  std::span<const Plant> plants() const { return plants_; }
  std::span<const Plant> left_plants() const { return {plants_.data(), left_count_}; }
  std::span<const Plant> right_plants() const {
    return {plants_.data() + left_count_, plants_.size() - left_count_};
  }
  double max_radius() const { return max_radius_; }

  /// Visits every plant whose center lies in the axis-aligned square of half-size `reach`
  /// around `center`.
  template <typename F>
  void for_each_near(const Eigen::Vector2d& center, double reach, F&& visit) const {
    auto it = std::lower_bound(sorted_x_.begin(), sorted_x_.end(), center.x() - reach);
    for (; it != sorted_x_.end() && *it <= center.x() + reach; ++it) {
      const Plant& plant = plants_[sorted_index_[static_cast<std::size_t>(it - sorted_x_.begin())]];
      if (std::abs(plant.center.y() - center.y()) <= reach) visit(plant);
    }
  }

 private:
  RowSpec spec_;
  Centerline centerline_;
  std::vector<Plant> plants_;  // left row then right row, each in arc-length order
  std::size_t left_count_;
  double max_radius_ = 0.0;
  std::vector<double> sorted_x_;
  std::vector<std::uint32_t> sorted_index_;
};

/// Places plants every `model.spacing` of arc length along both rows. Deterministic in
/// (spec, model); spec.seed drives the jitter.
PlantationMap generate(const RowSpec& spec, const PlantModel& model = {});

/// Robot body rectangle, centered on the robot reference point.
struct Footprint {
  double length = 0.5;
  double width = 0.35;

  double half_diagonal() const { return 0.5 * std::hypot(length, width); }
};

bool footprint_hits(const Pose2& pose, const Footprint& footprint, const Plant& plant);
bool collides(const Pose2& pose, const Footprint& footprint, const PlantationMap& map);

/// Arc length of the closest centerline point, clamped to [0, row_length].
double progress(const Eigen::Vector2d& position, const PlantationMap& map);

std::string serialize(const PlantationMap& map);
PlantationMap deserialize(std::string_view text);

}  // namespace rowlab::world
