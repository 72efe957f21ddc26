#include "rowlab/env.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rowlab/parallel.hpp"
#include "rowlab/text_io.hpp"

namespace rowlab::env {

void RewardConfig::validate() const {
  if (!(w_task >= 0.0) || !(w_penalty >= 0.0) || !(w_collision >= 0.0)) {
    throw std::invalid_argument("reward weights must be >= 0");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("reward sigma must be > 0");
}

std::string_view to_string(ObservationMode mode) {
  return mode == ObservationMode::kRowMap ? "row_map" : "raw_cloud";
}

ObservationMode parse_observation_mode(std::string_view text) {
  if (text == "row_map") return ObservationMode::kRowMap;
  if (text == "raw_cloud") return ObservationMode::kRawCloud;
  throw std::invalid_argument("unknown observation mode '" + std::string(text) +
                              "' (expected row_map or raw_cloud)");
}

void EnvConfig::validate() const {
  if (!(forward_speed > 0.0)) throw std::invalid_argument("forward_speed must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(omega_max > 0.0)) throw std::invalid_argument("omega_max must be > 0");
  if (history_length < 1) throw std::invalid_argument("history_length must be >= 1");
  if (!(time_limit_factor > 0.0)) throw std::invalid_argument("time_limit_factor must be > 0");
  if (!(start_lateral_jitter >= 0.0) || !(start_heading_jitter_deg >= 0.0)) {
    throw std::invalid_argument("start jitter must be >= 0");
  }
  if (!(footprint.length > 0.0) || !(footprint.width > 0.0)) {
    throw std::invalid_argument("footprint dimensions must be > 0");
  }
  reward.validate();
}

int Scenario::frame_size() const {
  return env.observation == ObservationMode::kRowMap ? grid.cell_count() : 3 * lidar.ray_count();
}

void Scenario::validate() const {
  row.validate();
  plants.validate();
  lidar.validate();
  grid.validate();
  env.validate();
}

RobotState step_dynamics(const RobotState& state, double omega, double dt) {
  if (!std::isfinite(omega)) throw std::invalid_argument("angular velocity must be finite");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  RobotState next = state;
  next.position.x() += state.speed * std::cos(state.heading) * dt;
  next.position.y() += state.speed * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + omega * dt);
  next.last_omega = omega;
  return next;
}

double reward(const RobotState& prev, const RobotState& /*next*/, double omega, bool collided,
              const RewardConfig& cfg, double dt) {
  const double change = omega - prev.last_omega;
  const double smoothness =
      std::clamp(1.0 - cfg.w_penalty * change * change / cfg.sigma, 0.0, 1.0);
  const double task = cfg.w_task * prev.speed * dt;
  return task * smoothness - (collided ? cfg.w_collision : 0.0);
}

ResetSeeds episode_seeds(std::uint64_t base, std::uint64_t env_index, std::uint64_t episode) {
  const std::uint64_t root = mix_seed(base, env_index, episode);
  return {mix_seed(root, 1), mix_seed(root, 2), mix_seed(root, 3)};
}

// ---------------------------------------------------------------------------

CropRowEnv::CropRowEnv(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
}

const Observation& CropRowEnv::reset(const ResetSeeds& seeds) {
  if (scenario_.env.regenerate_map) {
    world::RowSpec spec = scenario_.row;
    spec.seed = seeds.map;
    map_ = std::make_shared<const world::PlantationMap>(world::generate(spec, scenario_.plants));
  } else if (!map_) {
    map_ = std::make_shared<const world::PlantationMap>(
        world::generate(scenario_.row, scenario_.plants));
  }
  return start_episode(seeds);
}

const Observation& CropRowEnv::reset(const ResetSeeds& seeds,
                                     std::shared_ptr<const world::PlantationMap> map) {
  if (!map) throw std::invalid_argument("reset needs a map");
  map_ = std::move(map);
  return start_episode(seeds);
}

const Observation& CropRowEnv::start_episode(const ResetSeeds& seeds) {
  noise_seed_ = seeds.noise;
  steps_ = 0;
  episode_return_ = 0.0;
  terminated_ = false;
  started_ = true;
  place_robot(seeds.start);
  progress_ = world::progress(state_.position, *map_);

  std::vector<float> frame = sense();
  const int history = scenario_.env.history_length;
  observation_.history_length = history;
  observation_.frame_size = static_cast<int>(frame.size());
  observation_.data.clear();
  observation_.data.reserve(frame.size() * static_cast<std::size_t>(history));
  for (int i = 0; i < history; ++i) {
    observation_.data.insert(observation_.data.end(), frame.begin(), frame.end());
  }
  return observation_;
}

void CropRowEnv::place_robot(std::uint64_t seed) {
  const EnvConfig& cfg = scenario_.env;
  const world::Centerline& centerline = map_->centerline();
  const double base_heading = std::atan(centerline.slope(0.0));

  auto pose_at = [&](double lateral, double heading_offset) {
    RobotState s;
    s.position = centerline.point(0.0) + lateral * centerline.normal(0.0);
    s.heading = wrap_angle(base_heading + heading_offset);
    s.speed = cfg.forward_speed;
    s.last_omega = 0.0;
    return s;
  };

  state_ = pose_at(0.0, 0.0);
  if (cfg.start_lateral_jitter == 0.0 && cfg.start_heading_jitter_deg == 0.0) return;

  std::mt19937_64 rng(seed);
  const double heading_jitter = cfg.start_heading_jitter_deg * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double lateral = cfg.start_lateral_jitter * unit(rng);
    const double heading = heading_jitter * unit(rng);
    RobotState candidate = pose_at(lateral, heading);
    if (!world::collides(candidate.pose(), cfg.footprint, *map_)) {
      state_ = candidate;
      return;
    }
  }
}

std::vector<float> CropRowEnv::sense() {
  last_cloud_ = sensor::sweep(state_.pose(), *map_, scenario_.lidar,
                              mix_seed(noise_seed_, static_cast<std::uint64_t>(steps_)));
  if (scenario_.env.observation == ObservationMode::kRowMap) {
    last_row_map_ = rowmap::transform(last_cloud_, scenario_.grid);
    return last_row_map_.cells;
  }
  std::vector<float> frame(static_cast<std::size_t>(scenario_.frame_size()), 0.0f);
  const double scale = 1.0 / scenario_.lidar.max_range;
  for (std::size_t i = 0; i < last_cloud_.points.size(); ++i) {
    const auto slot = static_cast<std::size_t>(last_cloud_.ray_index[i]) * 3;
    for (int k = 0; k < 3; ++k) {
      frame[slot + static_cast<std::size_t>(k)] =
          static_cast<float>(last_cloud_.points[i][k] * scale);
    }
  }
  return frame;
}

void CropRowEnv::push_frame(std::vector<float> frame) {
  auto& data = observation_.data;
  const auto frame_size = frame.size();
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(frame_size), data.end(), data.begin());
  std::copy(frame.begin(), frame.end(), data.end() - static_cast<std::ptrdiff_t>(frame_size));
}

StepResult CropRowEnv::step(double omega) {
  if (!started_ || terminated_) {
    throw std::logic_error("step called on a terminated environment; call reset first");
  }
  if (!std::isfinite(omega)) throw std::invalid_argument("angular velocity must be finite");
  const EnvConfig& cfg = scenario_.env;
  omega = std::clamp(omega, -cfg.omega_max, cfg.omega_max);

  const RobotState prev = state_;
  state_ = step_dynamics(prev, omega, cfg.dt);
  ++steps_;

  StepResult result;
  result.info.collided = world::collides(state_.pose(), cfg.footprint, *map_);
  progress_ = world::progress(state_.position, *map_);
  result.info.progress = progress_;
  result.info.elapsed = elapsed();
  push_frame(sense());

  result.reward = reward(prev, state_, omega, result.info.collided, cfg.reward, cfg.dt);
  episode_return_ += result.reward;

  const double row_length = map_->spec().row_length;
  result.info.success = !result.info.collided && progress_ >= row_length;
  result.info.time_out = !result.info.collided && !result.info.success &&
                         result.info.elapsed >= cfg.time_limit(row_length) - 1e-9;
  result.terminated = result.info.collided || result.info.success || result.info.time_out;
  terminated_ = result.terminated;
  result.observation = observation_;
  return result;
}

// ---------------------------------------------------------------------------

CropRowVecEnv::CropRowVecEnv(const Scenario& scenario, int num_envs, std::uint64_t seed,
                             int threads)
    : seed_(seed), threads_(std::max(threads, 1)) {
  if (num_envs <= 0) throw std::invalid_argument("need at least one environment");
  envs_.reserve(static_cast<std::size_t>(num_envs));
  for (int i = 0; i < num_envs; ++i) envs_.emplace_back(scenario);
  reset(seed);
}

int CropRowVecEnv::observation_size() const {
  return envs_.front().scenario().observation_size();
}

double CropRowVecEnv::action_limit() const { return envs_.front().scenario().env.omega_max; }

void CropRowVecEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  episodes_.assign(envs_.size(), 0);
  parallel_for(num_envs(), threads_, [&](int i) {
    envs_[static_cast<std::size_t>(i)].reset(episode_seeds(seed_, static_cast<std::uint64_t>(i), 0));
  });
}

void CropRowVecEnv::observations(Eigen::Ref<Eigen::MatrixXf> out) const {
  if (out.rows() != observation_size() || out.cols() != num_envs()) {
    throw std::invalid_argument("observation buffer has the wrong shape");
  }
  for (int i = 0; i < num_envs(); ++i) {
    const auto& data = envs_[static_cast<std::size_t>(i)].observation().data;
    out.col(i) = Eigen::Map<const Eigen::VectorXf>(data.data(), static_cast<Eigen::Index>(data.size()));
  }
}

std::vector<StepResult> CropRowVecEnv::step_batch(std::span<const double> omegas) {
  if (omegas.size() != envs_.size()) {
    throw std::invalid_argument("step_batch got " + std::to_string(omegas.size()) +
                                " actions for " + std::to_string(envs_.size()) + " environments");
  }
  std::vector<StepResult> results(envs_.size());
  parallel_for(num_envs(), threads_, [&](int i) {
    const auto k = static_cast<std::size_t>(i);
    CropRowEnv& env = envs_[k];
    results[k] = env.step(omegas[k]);
    if (results[k].terminated) {
      env.reset(episode_seeds(seed_, k, ++episodes_[k]));
    }
  });
  return results;
}

void CropRowVecEnv::step(std::span<const double> actions, std::span<EnvTransition> out) {
  if (out.size() != envs_.size()) throw std::invalid_argument("transition buffer size mismatch");
  std::vector<int> lengths(envs_.size());
  std::vector<double> returns(envs_.size());
  for (std::size_t k = 0; k < envs_.size(); ++k) {
    lengths[k] = envs_[k].step_count() + 1;
    returns[k] = envs_[k].episode_return();
  }
  const auto results = step_batch(actions);
  for (std::size_t k = 0; k < envs_.size(); ++k) {
    const StepResult& r = results[k];
    EnvTransition& t = out[k];
    t.reward = r.reward;
    t.done = r.terminated;
    t.time_out = r.info.time_out;
    t.success = r.info.success;
    t.episode_return = returns[k] + r.reward;
    t.episode_length = lengths[k];
  }
}

// ---------------------------------------------------------------------------

void TrajectoryLog::record(int step, double t, const RobotState& state, double omega,
                           double reward, double progress, bool collided) {
  std::ostringstream row;
  row << step << ',' << format_double(t) << ',' << format_double(state.position.x()) << ','
      << format_double(state.position.y()) << ',' << format_double(state.heading) << ','
      << format_double(omega) << ',' << format_double(reward) << ',' << format_double(progress)
      << ',' << (collided ? 1 : 0) << '\n';
  rows_ += row.str();
}

std::string TrajectoryLog::csv() const {
  return "step,t,x,y,theta,omega,reward,progress,collided\n" + rows_;
}

}  // namespace rowlab::env
