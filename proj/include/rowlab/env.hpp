#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rowlab/geometry.hpp"
#include "rowlab/rowmap.hpp"
#include "rowlab/sensor.hpp"
#include "rowlab/vector_env.hpp"
#include "rowlab/world.hpp"

namespace rowlab::env {

/// Unicycle state. The forward speed is constant; the policy only commands yaw rate.
struct RobotState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;      // rad, wrapped to (-pi, pi]
  double speed = 0.5635;     // m/s
  double last_omega = 0.0;   // rad/s, previous command

  Pose2 pose() const { return {position, heading}; }
};

/// r = w_task * v * dt * clip(1 - w_penalty * (w_k - w_{k-1})^2 / sigma, 0, 1)
///     - w_collision * [collided]
struct RewardConfig {
  double w_task = 5.0;
  double w_penalty = 1.0;
  double w_collision = 1.0;
  double sigma = 2.25;  // rad^2/s^2, (omega_max)^2

  void validate() const;
};

enum class ObservationMode { kRowMap, kRawCloud };

std::string_view to_string(ObservationMode mode);
ObservationMode parse_observation_mode(std::string_view text);

struct EnvConfig {
  double forward_speed = 0.5635;  // m/s
  double dt = 0.1;                // s, one LiDAR sweep per control step
  double omega_max = 1.5;         // rad/s
  int history_length = 3;
  double time_limit_factor = 2.0;  // episode limit = factor * L / v
  double start_lateral_jitter = 0.1;      // m, uniform half-width
  double start_heading_jitter_deg = 5.0;  // uniform half-width
  bool regenerate_map = true;
  ObservationMode observation = ObservationMode::kRowMap;
  world::Footprint footprint;
  RewardConfig reward;

  double time_limit(double row_length) const {
    return time_limit_factor * row_length / forward_speed;
  }
  void validate() const;
};

/// Everything one environment instance needs.
struct Scenario {
  world::RowSpec row;
  world::PlantModel plants;
  sensor::LidarConfig lidar;
  rowmap::VoxelGridSpec grid;
  EnvConfig env;

  int frame_size() const;
  int observation_size() const { return env.history_length * frame_size(); }
  void validate() const;
};

/// Stack of the last `history_length` frames, oldest first.
struct Observation {
  int history_length = 0;
  int frame_size = 0;
  std::vector<float> data;

  std::span<const float> frame(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(frame_size),
            static_cast<std::size_t>(frame_size)};
  }
  bool operator==(const Observation&) const = default;
};

struct StepInfo {
  double progress = 0.0;  // m
  bool collided = false;
  double elapsed = 0.0;   // s
  bool time_out = false;
  bool success = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  StepInfo info;
};

RobotState step_dynamics(const RobotState& state, double omega, double dt);

double reward(const RobotState& prev, const RobotState& next, double omega, bool collided,
              const RewardConfig& cfg, double dt);

struct ResetSeeds {
  std::uint64_t map = 0;
  std::uint64_t start = 0;
  std::uint64_t noise = 0;

  bool operator==(const ResetSeeds&) const = default;
};

/// Seeds of episode `episode` of environment `env_index` in a run seeded by `base`.
ResetSeeds episode_seeds(std::uint64_t base, std::uint64_t env_index, std::uint64_t episode);

class CropRowEnv {
 public:
  explicit CropRowEnv(Scenario scenario);

  /// Starts an episode. Regenerates the map from `seeds.map` when regenerate_map is set,
  /// otherwise generates it once from the configured row seed and keeps it.
  const Observation& reset(const ResetSeeds& seeds);
  /// Starts an episode on a caller-provided map.
  const Observation& reset(const ResetSeeds& seeds, std::shared_ptr<const world::PlantationMap> map);

  /// Commands are clamped to +-omega_max. Throws std::logic_error on a terminated or
  /// never-reset environment and std::invalid_argument on a non-finite command.
  StepResult step(double omega);

  const Scenario& scenario() const { return scenario_; }
  const Observation& observation() const { return observation_; }
  const RobotState& state() const { return state_; }
  const world::PlantationMap& map() const { return *map_; }
  const rowmap::RowMap& last_row_map() const { return last_row_map_; }
  const sensor::PointCloud& last_cloud() const { return last_cloud_; }
  bool terminated() const { return terminated_; }
  int step_count() const { return steps_; }
  double elapsed() const { return steps_ * scenario_.env.dt; }
  double progress() const { return progress_; }
  double episode_return() const { return episode_return_; }

 private:
  const Observation& start_episode(const ResetSeeds& seeds);
  void place_robot(std::uint64_t seed);
  std::vector<float> sense();
  void push_frame(std::vector<float> frame);

  Scenario scenario_;
  std::shared_ptr<const world::PlantationMap> map_;
  RobotState state_;
  Observation observation_;
  rowmap::RowMap last_row_map_;
  sensor::PointCloud last_cloud_;
  std::uint64_t noise_seed_ = 0;
  int steps_ = 0;
  double progress_ = 0.0;
  double episode_return_ = 0.0;
  bool terminated_ = true;
  bool started_ = false;
};

/// Lockstep batch of CropRowEnv with automatic reset. Environment i runs episodes seeded
/// by episode_seeds(seed, i, episode), so results match stepping each environment alone.
class CropRowVecEnv final : public VectorEnv {
 public:
  CropRowVecEnv(const Scenario& scenario, int num_envs, std::uint64_t seed, int threads = 1);

  /// Results carry the terminal observation; terminated environments are already reset.
  std::vector<StepResult> step_batch(std::span<const double> omegas);

  CropRowEnv& env(int i) { return envs_[static_cast<std::size_t>(i)]; }
  const CropRowEnv& env(int i) const { return envs_[static_cast<std::size_t>(i)]; }

  int num_envs() const override { return static_cast<int>(envs_.size()); }
  int observation_size() const override;
  double action_limit() const override;
  void reset(std::uint64_t seed) override;
  void observations(Eigen::Ref<Eigen::MatrixXf> out) const override;
  void step(std::span<const double> actions, std::span<EnvTransition> out) override;

 private:
  std::vector<CropRowEnv> envs_;
  std::vector<std::uint64_t> episodes_;
  std::uint64_t seed_;
  int threads_;
};

/// CSV trajectory log: step,t,x,y,theta,omega,reward,progress,collided
class TrajectoryLog {
 public:
  void record(int step, double t, const RobotState& state, double omega, double reward,
              double progress, bool collided);
  std::string csv() const;

 private:
  std::string rows_;
};

}  // namespace rowlab::env
